#include <cmath>
#include <complex>
#include <filesystem>

#include "ctda/fft.hpp"
#include "ctda/png_io.hpp"
#include "ctda/rng.hpp"
#include "doctest.h"

using namespace ctda;

namespace {

// textbook O(n^2) DFT
std::vector<cplx> dft_direct(const std::vector<cplx>& x, bool inverse) {
    const std::size_t n = x.size();
    std::vector<cplx> out(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        cplx acc(0.0, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = sign * 2.0 * 3.14159265358979323846 * k * t / n;
            acc += x[t] * cplx(std::cos(ang), std::sin(ang));
        }
        out[k] = inverse ? acc / static_cast<double>(n) : acc;
    }
    return out;
}

}  // namespace

TEST_CASE("fft matches the direct DFT for power-of-two and odd lengths") {
    RandomStream rng(2);
    for (int n : {8, 16, 12, 31}) {
        std::vector<cplx> x(n);
        for (auto& v : x) v = cplx(rng.normal(), rng.normal());
        auto fast = x;
        fft_1d(fast, false);
        const auto slow = dft_direct(x, false);
        for (int i = 0; i < n; ++i) CHECK(std::abs(fast[i] - slow[i]) < 1e-9);
    }
}

TEST_CASE("fft round trip restores the input") {
    RandomStream rng(3);
    std::vector<cplx> x(64);
    for (auto& v : x) v = cplx(rng.normal(), rng.normal());
    auto y = x;
    fft_1d(y, false);
    fft_1d(y, true);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i]) < 1e-12);
}

TEST_CASE("2d fft round trip restores the field") {
    RandomStream rng(4);
    const int side = 16;
    std::vector<cplx> field(side * side);
    for (auto& v : field) v = cplx(rng.normal(), 0.0);
    auto copy = field;
    fft_2d(copy, side, false);
    fft_2d(copy, side, true);
    for (std::size_t i = 0; i < field.size(); ++i) CHECK(std::abs(copy[i] - field[i]) < 1e-12);
}

TEST_CASE("png writer and reader round-trip quantized intensities") {
    RandomStream rng(5);
    const int side = 32;
    std::vector<double> pixels(side * side);
    for (auto& p : pixels) p = rng.uniform();

    const auto path = std::filesystem::temp_directory_path() / "ctda_test_roundtrip.png";
    write_gray16_png(path, side, pixels);
    const auto decoded = read_gray16_png(path, side);
    for (std::size_t i = 0; i < pixels.size(); ++i) CHECK(decoded[i] == quantize16(pixels[i]));
    std::filesystem::remove(path);
}

TEST_CASE("png reader rejects a wrong expected side") {
    const auto path = std::filesystem::temp_directory_path() / "ctda_test_side.png";
    write_gray16_png(path, 8, std::vector<double>(64, 0.5));
    CHECK_THROWS(read_gray16_png(path, 16));
    std::filesystem::remove(path);
}
