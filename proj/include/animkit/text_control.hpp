#pragma once

#include <map>
#include <string>
#include <vector>

#include "animkit/nn.hpp"

namespace animkit {

constexpr int kPadId = 0;
constexpr int kUnkId = 1;

struct Vocabulary {
    std::map<std::string, int> word_to_id;  // includes <pad>=0, <unk>=1

    int size() const { return (int)word_to_id.size(); }
    int id_of(const std::string& word) const;

    static Vocabulary build(const std::vector<std::string>& prompts);
};

struct TokenSequence {
    std::vector<int> ids;    // length L, pad-filled
    std::vector<bool> mask;  // true at real-token positions
    bool truncated = false;
};

// lowercase + whitespace split; empty text maps to the all-pad null condition
TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int length);

// Frozen random embedding table plus scaled sinusoidal positions. Pad
// positions embed to exact zero vectors.
class TextEmbedder {
public:
    TextEmbedder() = default;
    TextEmbedder(nn::Registry& reg, int vocab_size, int dim);

    Tensor embed(const TokenSequence& seq) const;  // [L, dim]
    int dim() const { return dim_; }

private:
    Parameter* table_ = nullptr;
    int dim_ = 0;
};

struct ReweightOutput {
    Tensor weights;   // [F, L], strictly inside (0,1)
    Tensor weighted;  // [F, L, D]
};

// Three transformer encoder layers + a frame-specific linear projection,
// sigmoid-normed per (frame, token). The projection is zero-initialized so
// training starts from uniform 0.5 gates.
class ReweightHead {
public:
    ReweightHead() = default;
    ReweightHead(nn::Registry& reg, int dim, int heads, int max_frames);

    // emb [B,L,D], mask [B,L] (1 = real token) -> weights [B, max_frames, L]
    nn::Var weights_var(nn::Graph& g, nn::Var emb, const Tensor& mask) const;

    // weights [B,F,L] (narrowed) applied to emb -> weighted [B,F,L,D]
    nn::Var apply_var(nn::Graph& g, nn::Var weights, nn::Var emb) const;

    // standalone operation on one sequence
    ReweightOutput reweight(const Tensor& emb, const std::vector<bool>& mask, int frames) const;

    int max_frames() const { return max_frames_; }

private:
    std::vector<nn::EncoderLayer> layers_;
    nn::Linear proj_;
    int max_frames_ = 0;
};

std::pair<TokenSequence, Tensor> tokenize_and_embed(const std::string& text,
                                                    const Vocabulary& vocab, int length,
                                                    const TextEmbedder& embedder);

}  // namespace animkit
