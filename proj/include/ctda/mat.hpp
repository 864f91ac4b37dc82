#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace ctda {

// Dense row-major matrix of doubles. Deliberately minimal: the models here
// are small enough that explicit loops beat any abstraction tax.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

    std::span<double> row(int r) { return {a.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const {
        return {a.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }

    void fill(double v) { a.assign(a.size(), v); }
};

inline double dot(std::span<const double> x, std::span<const double> y) {
    assert(x.size() == y.size());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

// out = x * w^T + b_broadcast, with w (out_dim x in_dim). The transposed
// layout keeps each output a contiguous-row dot product.
inline Mat affine_forward(const Mat& x, const Mat& w, const std::vector<double>& b) {
    assert(x.cols == w.cols);
    assert(static_cast<int>(b.size()) == w.rows);
    Mat out(x.rows, w.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < w.rows; ++j) out(i, j) = dot(x.row(i), w.row(j)) + b[j];
    return out;
}

}  // namespace ctda
