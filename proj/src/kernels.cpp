#include "ctda/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctda {

int EmbeddingBatch::n_classes() const {
    int k = 0;
    for (int c : class_labels) k = std::max(k, c + 1);
    return k;
}

void EmbeddingBatch::validate(double norm_tolerance) const {
    const int n = z.rows;
    if (n < 2) throw std::invalid_argument("EmbeddingBatch: need at least two samples");
    if (static_cast<int>(class_labels.size()) != n || static_cast<int>(domain_labels.size()) != n)
        throw std::invalid_argument("EmbeddingBatch: label lengths do not match batch size");
    for (int c : class_labels)
        if (c < 0) throw std::invalid_argument("EmbeddingBatch: negative class label");
    for (int d : domain_labels)
        if (d != 0 && d != 1) throw std::invalid_argument("EmbeddingBatch: domain labels must be 0 or 1");
    for (int i = 0; i < n; ++i) {
        const double norm = std::sqrt(dot(z.row(i), z.row(i)));
        if (std::abs(norm - 1.0) > norm_tolerance)
            throw std::invalid_argument("EmbeddingBatch: row " + std::to_string(i) + " is not unit-norm");
    }
}

GramMatrix gram_unchecked(const Mat& z) {
    const int n = z.rows;
    GramMatrix g;
    g.n = n;
    g.k.assign(static_cast<std::size_t>(n) * n, 0.0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            const double v = dot(z.row(i), z.row(j));
            g.k[static_cast<std::size_t>(i) * n + j] = v;
            g.k[static_cast<std::size_t>(j) * n + i] = v;
        }
    }
    return g;
}

GramMatrix gram(const EmbeddingBatch& batch) {
    batch.validate();
    return gram_unchecked(batch.z);
}

GramMatrix label_gram(const std::vector<int>& labels, const LabelKernel& kernel) {
    const int n = static_cast<int>(labels.size());
    if (n < 1) throw std::invalid_argument("label_gram: empty labels");
    GramMatrix g;
    g.n = n;
    g.k.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            g.k[static_cast<std::size_t>(i) * n + j] = (labels[i] == labels[j] ? kernel.delta_l : 0.0) + kernel.l0;
    return g;
}

}  // namespace ctda
