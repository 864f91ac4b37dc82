#include "ctda/fft.hpp"

#include <cmath>
#include <stdexcept>

namespace ctda {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative Cooley-Tukey, length must be a power of two.
void fft_radix2(std::vector<cplx>& x, bool inverse) {
    const std::size_t n = x.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = x[i + k];
                const cplx v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& v : x) v *= inv;
    }
}

// Bluestein's chirp-z trick: expresses an arbitrary-length DFT as a
// convolution carried out with a power-of-two FFT.
void fft_bluestein(std::vector<cplx>& x, bool inverse) {
    const std::size_t n = x.size();
    std::size_t m = 1;
    while (m < 2 * n + 1) m <<= 1;

    std::vector<cplx> chirp(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small for exactness
        const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % (2 * n);
        const double ang = sign * kPi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = cplx(std::cos(ang), std::sin(ang));
    }

    std::vector<cplx> a(m, cplx(0.0, 0.0)), b(m, cplx(0.0, 0.0));
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
    b[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);

    fft_radix2(a, false);
    fft_radix2(b, false);
    for (std::size_t k = 0; k < m; ++k) a[k] *= b[k];
    fft_radix2(a, true);

    for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    if (inverse) {
        const double invn = 1.0 / static_cast<double>(n);
        for (auto& v : x) v *= invn;
    }
}

}  // namespace

void fft_1d(std::vector<cplx>& x, bool inverse) {
    if (x.empty()) throw std::invalid_argument("fft_1d: empty input");
    if (x.size() == 1) return;
    if (is_pow2(x.size()))
        fft_radix2(x, inverse);
    else
        fft_bluestein(x, inverse);
}

void fft_2d(std::vector<cplx>& field, int side, bool inverse) {
    if (side <= 0 || field.size() != static_cast<std::size_t>(side) * side)
        throw std::invalid_argument("fft_2d: field size does not match side");

#pragma omp parallel for schedule(static)
    for (int r = 0; r < side; ++r) {
        std::vector<cplx> line(field.begin() + static_cast<std::size_t>(r) * side,
                               field.begin() + static_cast<std::size_t>(r + 1) * side);
        fft_1d(line, inverse);
        for (int c = 0; c < side; ++c) field[static_cast<std::size_t>(r) * side + c] = line[c];
    }

#pragma omp parallel for schedule(static)
    for (int c = 0; c < side; ++c) {
        std::vector<cplx> line(side);
        for (int r = 0; r < side; ++r) line[r] = field[static_cast<std::size_t>(r) * side + c];
        fft_1d(line, inverse);
        for (int r = 0; r < side; ++r) field[static_cast<std::size_t>(r) * side + c] = line[r];
    }
}

}  // namespace ctda
