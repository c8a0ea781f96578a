#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "zip/imaging.hpp"

// Minimal 8-bit image codecs: PNG (grayscale / RGB, non-interlaced) via
// zlib, and binary PPM (P6). Quantization is round(v * 255).

namespace zip {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint8_t quantize8(double v) {
    long q = std::lround(v * 255.0);
    if (q < 0) q = 0;
    if (q > 255) q = 255;
    return static_cast<std::uint8_t>(q);
}

inline void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t read_u32_be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                         const std::vector<std::uint8_t>& payload) {
    put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
    std::size_t type_pos = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + type_pos, static_cast<uInt>(4 + payload.size()));
    put_u32_be(out, static_cast<std::uint32_t>(crc));
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_png(const Image& img) {
    if (img.channels() != 1 && img.channels() != 3) {
        throw IoError("encode_png: only 1- or 3-channel images supported");
    }
    const int h = img.height(), w = img.width(), ch = img.channels();

    // Scanlines with filter byte 0 (no per-row filtering).
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(h) * (1 + static_cast<std::size_t>(w) * ch));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) raw.push_back(detail::quantize8(img.at(y, x, c)));
        }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                  Z_BEST_COMPRESSION) != Z_OK) {
        throw IoError("encode_png: deflate failed");
    }
    compressed.resize(bound);

    std::vector<std::uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
    std::vector<std::uint8_t> ihdr;
    detail::put_u32_be(ihdr, static_cast<std::uint32_t>(w));
    detail::put_u32_be(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);                                // bit depth
    ihdr.push_back(ch == 1 ? 0 : 2);                  // color type: gray / truecolor
    ihdr.push_back(0);                                // compression
    ihdr.push_back(0);                                // filter method
    ihdr.push_back(0);                                // no interlace
    detail::append_chunk(out, "IHDR", ihdr);
    detail::append_chunk(out, "IDAT", compressed);
    detail::append_chunk(out, "IEND", {});
    return out;
}

inline Image decode_png(const std::vector<std::uint8_t>& bytes) {
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0) {
        throw IoError("decode_png: bad signature");
    }

    int w = 0, h = 0, ch = 0;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 12 <= bytes.size() && !saw_iend) {
        std::uint32_t len = detail::read_u32_be(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw IoError("decode_png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* payload = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("decode_png: bad IHDR");
            w = static_cast<int>(detail::read_u32_be(payload));
            h = static_cast<int>(detail::read_u32_be(payload + 4));
            int depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8 || (color != 0 && color != 2) || interlace != 0) {
                throw IoError("decode_png: only 8-bit gray/RGB non-interlaced supported");
            }
            ch = (color == 0) ? 1 : 3;
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || !saw_iend || w <= 0 || h <= 0) throw IoError("decode_png: malformed file");

    std::size_t stride = static_cast<std::size_t>(w) * ch;
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (stride + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size()) {
        throw IoError("decode_png: inflate failed");
    }

    // Undo per-row filtering in place (bytes-per-pixel == channel count at depth 8).
    std::vector<std::uint8_t> pix(static_cast<std::size_t>(h) * stride);
    const int bpp = ch;
    for (int y = 0; y < h; ++y) {
        const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
        const std::uint8_t* src = raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1;
        std::uint8_t* dst = pix.data() + static_cast<std::size_t>(y) * stride;
        const std::uint8_t* up = (y > 0) ? dst - stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            int a = (i >= static_cast<std::size_t>(bpp)) ? dst[i - bpp] : 0;
            int b = up ? up[i] : 0;
            int c = (up && i >= static_cast<std::size_t>(bpp)) ? up[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: throw IoError("decode_png: unknown filter type");
            }
            dst[i] = static_cast<std::uint8_t>(v & 0xFF);
        }
    }

    Image img(h, w, ch);
    for (std::size_t i = 0; i < pix.size(); ++i) img.px.data[i] = pix[i] / 255.0;
    return img;
}

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
    if (img.channels() != 1 && img.channels() != 3) {
        throw IoError("encode_ppm: only 1- or 3-channel images supported");
    }
    std::string header =
        "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                int src = img.channels() == 3 ? c : 0;
                out.push_back(detail::quantize8(img.at(y, x, src)));
            }
        }
    }
    return out;
}

inline Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (std::isspace(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&] {
        skip_space();
        long v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            any = true;
        }
        if (!any) throw IoError("decode_ppm: expected integer");
        return v;
    };

    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
        throw IoError("decode_ppm: not a P6 file");
    }
    pos = 2;
    long w = read_int(), h = read_int(), maxval = read_int();
    if (w <= 0 || h <= 0) throw IoError("decode_ppm: bad dimensions");
    if (maxval != 255) throw IoError("decode_ppm: only maxval 255 supported");
    ++pos;  // single whitespace after maxval
    std::size_t need = static_cast<std::size_t>(w) * h * 3;
    if (bytes.size() - pos < need) throw IoError("decode_ppm: truncated pixel data");

    Image img(static_cast<int>(h), static_cast<int>(w), 3);
    for (std::size_t i = 0; i < need; ++i) img.px.data[i] = bytes[pos + i] / 255.0;
    return img;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path);
}

inline void write_png(const std::string& path, const Image& img) {
    write_file_bytes(path, encode_png(img));
}

inline Image read_png(const std::string& path) { return decode_png(read_file_bytes(path)); }

inline void write_ppm(const std::string& path, const Image& img) {
    write_file_bytes(path, encode_ppm(img));
}

inline Image read_ppm(const std::string& path) { return decode_ppm(read_file_bytes(path)); }

// Dispatch on extension (.png / .ppm).
inline void write_image(const std::string& path, const Image& img) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".ppm") == 0) {
        write_ppm(path, img);
    } else {
        write_png(path, img);
    }
}

inline Image read_image(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".ppm") == 0) {
        return read_ppm(path);
    }
    return read_png(path);
}

}  // namespace zip
