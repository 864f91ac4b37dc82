#include "ctda/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ctda {

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t read_u32_be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), data.begin(), data.end());
    const auto crc = crc32(0L, body.data(), static_cast<uInt>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
    put_u32_be(out, static_cast<std::uint32_t>(crc));
}

constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

}  // namespace

void write_gray16_png(const std::filesystem::path& path, int side, const std::vector<double>& pixels) {
    if (side <= 0 || pixels.size() != static_cast<std::size_t>(side) * side)
        throw std::invalid_argument("write_gray16_png: pixel count does not match side");

    // Raw scanlines: filter byte 0 then big-endian 16-bit samples.
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(side) * (1 + 2 * side));
    for (int r = 0; r < side; ++r) {
        raw.push_back(0);
        for (int c = 0; c < side; ++c) {
            long v = std::lround(pixels[static_cast<std::size_t>(r) * side + c] * 65535.0);
            if (v < 0) v = 0;
            if (v > 65535) v = 65535;
            raw.push_back(static_cast<std::uint8_t>(v >> 8));
            raw.push_back(static_cast<std::uint8_t>(v & 0xff));
        }
    }

    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_gray16_png: deflate failed");
    comp.resize(comp_len);

    std::vector<std::uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(side));
    put_u32_be(ihdr, static_cast<std::uint32_t>(side));
    ihdr.push_back(16);  // bit depth
    ihdr.push_back(0);   // grayscale
    ihdr.push_back(0);   // deflate
    ihdr.push_back(0);   // filter method
    ihdr.push_back(0);   // non-interlaced

    std::vector<std::uint8_t> file(kSignature, kSignature + 8);
    append_chunk(file, "IHDR", ihdr);
    append_chunk(file, "IDAT", comp);
    append_chunk(file, "IEND", {});

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_gray16_png: cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    if (!out) throw std::runtime_error("write_gray16_png: write failed for " + path.string());
}

std::vector<double> read_gray16_png(const std::filesystem::path& path, int expected_side) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_gray16_png: cannot open " + path.string());
    std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (file.size() < 8 || std::memcmp(file.data(), kSignature, 8) != 0)
        throw std::runtime_error("read_gray16_png: not a PNG: " + path.string());

    std::size_t pos = 8;
    int side = -1;
    std::vector<std::uint8_t> idat;
    while (pos + 8 <= file.size()) {
        const std::uint32_t len = read_u32_be(&file[pos]);
        const char* type = reinterpret_cast<const char*>(&file[pos + 4]);
        if (pos + 12 + len > file.size()) throw std::runtime_error("read_gray16_png: truncated chunk");
        const std::uint8_t* data = &file[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            const int w = static_cast<int>(read_u32_be(data));
            const int h = static_cast<int>(read_u32_be(data + 4));
            if (w != h || data[8] != 16 || data[9] != 0 || data[12] != 0)
                throw std::runtime_error("read_gray16_png: unsupported PNG layout");
            side = w;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (side <= 0) throw std::runtime_error("read_gray16_png: missing IHDR");
    if (expected_side > 0 && side != expected_side)
        throw std::runtime_error("read_gray16_png: unexpected image side in " + path.string());

    const std::size_t raw_len = static_cast<std::size_t>(side) * (1 + 2 * static_cast<std::size_t>(side));
    std::vector<std::uint8_t> raw(raw_len);
    uLongf out_len = static_cast<uLongf>(raw_len);
    if (uncompress(raw.data(), &out_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK || out_len != raw_len)
        throw std::runtime_error("read_gray16_png: inflate failed for " + path.string());

    std::vector<double> pixels(static_cast<std::size_t>(side) * side);
    for (int r = 0; r < side; ++r) {
        const std::uint8_t* line = raw.data() + static_cast<std::size_t>(r) * (1 + 2 * side);
        if (line[0] != 0) throw std::runtime_error("read_gray16_png: unsupported scanline filter");
        for (int c = 0; c < side; ++c) {
            const std::uint32_t v = (static_cast<std::uint32_t>(line[1 + 2 * c]) << 8) | line[2 + 2 * c];
            pixels[static_cast<std::size_t>(r) * side + c] = static_cast<double>(v) / 65535.0;
        }
    }
    return pixels;
}

}  // namespace ctda
