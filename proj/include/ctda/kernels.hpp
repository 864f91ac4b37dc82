#pragma once

#include <vector>

#include "ctda/mat.hpp"

namespace ctda {

// A batch of feature vectors with class and domain annotations. Rows of z
// are expected to be unit-norm within kNormTolerance; estimators that need
// this call validate().
struct EmbeddingBatch {
    Mat z;                          // n x m, rows are features
    std::vector<int> class_labels;  // length n, values in [0, n_classes)
    std::vector<int> domain_labels; // length n, values in {0, 1}

    int size() const { return z.rows; }
    int dim() const { return z.cols; }
    int n_classes() const;

    // Throws std::invalid_argument on size mismatch, n < 2, out-of-range
    // labels, or a row norm off unit by more than the tolerance.
    void validate(double norm_tolerance = kNormTolerance) const;

    static constexpr double kNormTolerance = 1e-6;
};

struct GramMatrix {
    int n = 0;
    std::vector<double> k;  // n x n row-major

    double operator()(int i, int j) const { return k[static_cast<std::size_t>(i) * n + j]; }
    double& operator()(int i, int j) { return k[static_cast<std::size_t>(i) * n + j]; }
};

// l(y, y') = delta_l * 1{y == y'} + l0. delta_l is the number of classes for
// the supervised loss and the number of instances for the paired loss.
struct LabelKernel {
    double delta_l = 1.0;
    double l0 = 0.0;
};

// Pairwise inner products of the batch rows; validates unit norms. The upper
// triangle is computed and mirrored, rows in parallel.
GramMatrix gram(const EmbeddingBatch& batch);

// Same computation without the norm check, for raw matrices (used by loss
// internals and finite-difference probes where rows drift off unit norm).
GramMatrix gram_unchecked(const Mat& z);

GramMatrix label_gram(const std::vector<int>& labels, const LabelKernel& kernel);

}  // namespace ctda
