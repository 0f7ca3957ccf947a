#include "animkit/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "animkit/tensor.hpp"

namespace animkit {

namespace {

const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

uint32_t crc32_of(const uint8_t* type, const std::vector<uint8_t>& data) {
    uLong c = crc32(0L, Z_NULL, 0);
    c = crc32(c, type, 4);
    if (!data.empty()) c = crc32(c, data.data(), (uInt)data.size());
    return (uint32_t)c;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back((uint8_t)(v >> 24));
    out.push_back((uint8_t)(v >> 16));
    out.push_back((uint8_t)(v >> 8));
    out.push_back((uint8_t)v);
}

uint32_t get_u32(const uint8_t* p) {
    return ((uint32_t)p[0] << 24) | ((uint32_t)p[1] << 16) | ((uint32_t)p[2] << 8) | p[3];
}

void append_chunk(std::vector<uint8_t>& out, const char* type, const std::vector<uint8_t>& data) {
    put_u32(out, (uint32_t)data.size());
    const uint8_t* t = reinterpret_cast<const uint8_t*>(type);
    out.insert(out.end(), t, t + 4);
    out.insert(out.end(), data.begin(), data.end());
    put_u32(out, crc32_of(t, data));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png(const std::string& path, const RgbImage& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != (size_t)img.width * img.height * 3)
        throw Error("write_png: bad image buffer for " + path);

    const int stride = img.width * 3;
    std::vector<uint8_t> raw((size_t)(stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw[(size_t)y * (stride + 1)] = 0;  // filter: none
        std::memcpy(raw.data() + (size_t)y * (stride + 1) + 1,
                    img.pixels.data() + (size_t)y * stride, stride);
    }

    uLongf bound = compressBound((uLong)raw.size());
    std::vector<uint8_t> idat(bound);
    if (compress2(idat.data(), &bound, raw.data(), (uLong)raw.size(), 6) != Z_OK)
        throw Error("write_png: deflate failed for " + path);
    idat.resize(bound);

    std::vector<uint8_t> out;
    out.insert(out.end(), kSignature, kSignature + 8);
    std::vector<uint8_t> ihdr;
    put_u32(ihdr, (uint32_t)img.width);
    put_u32(ihdr, (uint32_t)img.height);
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type: truecolor
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", idat);
    append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), (std::streamsize)out.size());
    if (!f) throw Error("write_png: write failed for " + path);
}

RgbImage read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("read_png: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw Error("read_png: not a PNG: " + path);

    RgbImage img;
    int bit_depth = 0, color_type = -1;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = get_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw Error("read_png: truncated chunk in " + path);
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            img.width = (int)get_u32(data);
            img.height = (int)get_u32(data + 4);
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) throw Error("read_png: interlaced PNG unsupported: " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (bit_depth != 8 || (color_type != 2 && color_type != 6))
        throw Error("read_png: only 8-bit RGB/RGBA supported: " + path);

    const int ch = color_type == 2 ? 3 : 4;
    const int stride = img.width * ch;
    std::vector<uint8_t> raw((size_t)(stride + 1) * img.height);
    uLongf raw_len = (uLongf)raw.size();
    if (uncompress(raw.data(), &raw_len, idat.data(), (uLong)idat.size()) != Z_OK ||
        raw_len != raw.size())
        throw Error("read_png: inflate failed for " + path);

    std::vector<uint8_t> prev(stride, 0), cur(stride);
    img.pixels.resize((size_t)img.width * img.height * 3);
    for (int y = 0; y < img.height; ++y) {
        const uint8_t* row = raw.data() + (size_t)y * (stride + 1);
        const int filter = row[0];
        for (int x = 0; x < stride; ++x) {
            const int a = x >= ch ? cur[(size_t)(x - ch)] : 0;
            const int b = prev[(size_t)x];
            const int c = x >= ch ? prev[(size_t)(x - ch)] : 0;
            int v = row[1 + x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw Error("read_png: bad filter byte in " + path);
            }
            cur[(size_t)x] = (uint8_t)v;
        }
        for (int x = 0; x < img.width; ++x)
            for (int k = 0; k < 3; ++k)
                img.pixels[((size_t)y * img.width + x) * 3 + k] = cur[(size_t)(x * ch + k)];
        std::swap(prev, cur);
    }
    return img;
}

}  // namespace animkit
