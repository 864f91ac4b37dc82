#pragma once

#include <complex>
#include <vector>

namespace ctda {

using cplx = std::complex<double>;

// In-place forward/inverse DFT of arbitrary length (radix-2 when the length
// is a power of two, Bluestein otherwise). Bit-exact for fixed input and
// length regardless of platform or thread count.
void fft_1d(std::vector<cplx>& x, bool inverse);

// 2-D transform of a side x side row-major field. Rows and columns are
// transformed independently, parallelized across lines.
void fft_2d(std::vector<cplx>& field, int side, bool inverse);

}  // namespace ctda
