#include "animkit/text_control.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace animkit {

int Vocabulary::id_of(const std::string& word) const {
    auto it = word_to_id.find(word);
    return it == word_to_id.end() ? kUnkId : it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& prompts) {
    std::vector<std::string> words;
    for (const auto& p : prompts) {
        std::istringstream is(p);
        std::string w;
        while (is >> w) {
            std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) {
                return (char)std::tolower(c);
            });
            words.push_back(w);
        }
    }
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    Vocabulary v;
    v.word_to_id["<pad>"] = kPadId;
    v.word_to_id["<unk>"] = kUnkId;
    int next = 2;
    for (const auto& w : words)
        if (!v.word_to_id.count(w)) v.word_to_id[w] = next++;
    return v;
}

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int length) {
    TokenSequence seq;
    seq.ids.assign((size_t)length, kPadId);
    seq.mask.assign((size_t)length, false);
    std::istringstream is(text);
    std::string w;
    int pos = 0;
    while (is >> w) {
        std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) {
            return (char)std::tolower(c);
        });
        if (pos >= length) {
            seq.truncated = true;
            std::fprintf(stderr, "animkit: prompt truncated to %d tokens\n", length);
            break;
        }
        seq.ids[(size_t)pos] = vocab.id_of(w);
        seq.mask[(size_t)pos] = true;
        ++pos;
    }
    return seq;
}

TextEmbedder::TextEmbedder(nn::Registry& reg, int vocab_size, int dim) : dim_(dim) {
    table_ = &reg.create("text_embedder.table", "text_embedder", Shape{vocab_size, dim},
                         nn::Init::Normal, 1.0 / std::sqrt((double)dim));
    // pad embeds to the exact zero vector
    for (int d = 0; d < dim; ++d) table_->value.at2(kPadId, d) = 0.0;
}

Tensor TextEmbedder::embed(const TokenSequence& seq) const {
    const int L = (int)seq.ids.size();
    std::vector<double> pos((size_t)L);
    for (int l = 0; l < L; ++l) pos[(size_t)l] = (double)l;
    const Tensor pe = nn::sinusoidal_embedding(pos, dim_);
    Tensor out(Shape{L, dim_});
    for (int l = 0; l < L; ++l) {
        const int id = seq.ids[(size_t)l];
        if (id == kPadId) continue;  // stays zero
        for (int d = 0; d < dim_; ++d)
            out.at2(l, d) = table_->value.at2(id, d) + 0.2 * pe.at2(l, d);
    }
    return out;
}

ReweightHead::ReweightHead(nn::Registry& reg, int dim, int heads, int max_frames)
    : max_frames_(max_frames) {
    for (int i = 0; i < 3; ++i)
        layers_.emplace_back(reg, "reweight_head.layer" + std::to_string(i), "reweight_head", dim,
                             heads, 4 * dim);
    proj_ = nn::Linear(reg, "reweight_head.proj", "reweight_head", dim, max_frames,
                       /*zero_init=*/true);
}

nn::Var ReweightHead::weights_var(nn::Graph& g, nn::Var emb, const Tensor& mask) const {
    nn::Var x = emb;  // [B,L,D]
    for (const auto& layer : layers_) x = layer.fwd(g, x, &mask);
    nn::Var logits = proj_.fwd(g, x);                 // [B,L,F]
    logits = ad::permute(logits, {0, 2, 1});          // [B,F,L]
    return ad::sigmoid(logits);
}

nn::Var ReweightHead::apply_var(nn::Graph& g, nn::Var weights, nn::Var emb) const {
    return ad::outer_weight(weights, emb);  // [B,F,L,D]
}

ReweightOutput ReweightHead::reweight(const Tensor& emb, const std::vector<bool>& mask,
                                      int frames) const {
    if (frames < 1 || frames > max_frames_)
        throw Error("reweight: frame count must be in [1," + std::to_string(max_frames_) + "]");
    if (emb.ndim() != 2) throw Error("reweight: expects [L,D] embeddings");
    const int L = emb.dim(0), D = emb.dim(1);
    if ((int)mask.size() != L) throw Error("reweight: mask length mismatch");

    nn::Graph g;
    Tensor emb3 = emb;
    emb3.shape = Shape{1, L, D};
    Tensor m(Shape{1, L});
    for (int l = 0; l < L; ++l) m.at2(0, l) = mask[(size_t)l] ? 1.0 : 0.0;
    nn::Var w = weights_var(g, g.constant(emb3), m);          // [1,Fmax,L]
    w = ad::narrow(w, 1, 0, frames);                          // [1,F,L]
    nn::Var weighted = apply_var(g, w, g.constant(emb3));     // [1,F,L,D]

    ReweightOutput out;
    out.weights = w.val();
    out.weights.shape = Shape{frames, L};
    out.weighted = weighted.val();
    out.weighted.shape = Shape{frames, L, D};
    return out;
}

std::pair<TokenSequence, Tensor> tokenize_and_embed(const std::string& text,
                                                    const Vocabulary& vocab, int length,
                                                    const TextEmbedder& embedder) {
    TokenSequence seq = tokenize(text, vocab, length);
    return {seq, embedder.embed(seq)};
}

}  // namespace animkit
