#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace ctda {

// 16-bit grayscale PNG, non-interlaced, fixed zlib level: the container for
// generated patches. Intensities in [0,1] are stored as round(p * 65535).
void write_gray16_png(const std::filesystem::path& path, int side, const std::vector<double>& pixels);

// Reads files produced by write_gray16_png and returns intensities in [0,1].
// Other PNG flavours are rejected.
std::vector<double> read_gray16_png(const std::filesystem::path& path, int expected_side);

// The exact quantization applied on write; exposed so in-memory patches can
// be matched against decoded files.
inline double quantize16(double p) {
    long v = std::lround(p * 65535.0);
    if (v < 0) v = 0;
    if (v > 65535) v = 65535;
    return static_cast<double>(v) / 65535.0;
}

}  // namespace ctda
