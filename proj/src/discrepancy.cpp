#include "ctda/discrepancy.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ctda {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

std::vector<double> cell_mean(const EmbeddingBatch& batch, int cls, int domain) {
    const int n = batch.size(), m = batch.dim();
    std::vector<double> mean(m, 0.0);
    int count = 0;
    for (int i = 0; i < n; ++i) {
        if (batch.class_labels[i] != cls) continue;
        if (domain >= 0 && batch.domain_labels[i] != domain) continue;
        for (int c = 0; c < m; ++c) mean[c] += batch.z(i, c);
        ++count;
    }
    if (count == 0)
        throw std::invalid_argument("estimator undefined: empty cell (class " + std::to_string(cls) + ", domain " +
                                    std::to_string(domain) + ")");
    for (auto& v : mean) v /= count;
    return mean;
}

std::vector<double> class_priors(const EmbeddingBatch& batch, PriorWeighting weighting) {
    const int k = batch.n_classes();
    std::vector<double> pi(k, 0.0);
    if (weighting == PriorWeighting::Uniform) {
        for (auto& p : pi) p = 1.0 / k;
        return pi;
    }
    for (int c : batch.class_labels) pi[c] += 1.0;
    for (auto& p : pi) p /= batch.size();
    return pi;
}

double cmmd_sq(const EmbeddingBatch& batch, PriorWeighting weighting) {
    batch.validate();
    const std::vector<double> pi = class_priors(batch, weighting);
    double total = 0.0;
    for (int c = 0; c < static_cast<int>(pi.size()); ++c) {
        if (pi[c] == 0.0) continue;
        total += pi[c] * sq_dist(cell_mean(batch, c, 0), cell_mean(batch, c, 1));
    }
    return total;
}

double dcmmd_sq(const EmbeddingBatch& batch, PriorWeighting weighting) {
    batch.validate();
    const std::vector<double> pi = class_priors(batch, weighting);
    const int k = static_cast<int>(pi.size());
    int present = 0;
    for (double p : pi)
        if (p > 0.0) ++present;
    if (present < 2) throw std::invalid_argument("dcmmd_sq: need at least two classes");

    double prior_sq = 0.0;
    for (double p : pi) prior_sq += p * p;
    const double norm = 1.0 - prior_sq;

    // cache the four means per class
    std::vector<std::vector<double>> mean_d0(k), mean_d1(k);
    for (int c = 0; c < k; ++c) {
        if (pi[c] == 0.0) continue;
        mean_d0[c] = cell_mean(batch, c, 0);
        mean_d1[c] = cell_mean(batch, c, 1);
    }

    double total = 0.0;
    for (int c1 = 0; c1 < k; ++c1) {
        if (pi[c1] == 0.0) continue;
        for (int c2 = 0; c2 < k; ++c2) {
            if (c2 == c1 || pi[c2] == 0.0) continue;
            const double w = pi[c1] * pi[c2] / norm;
            double quad = 0.0;
            for (int d1 = 0; d1 < 2; ++d1) {
                for (int d2 = 0; d2 < 2; ++d2) {
                    const auto& m1 = d2 == 0 ? mean_d0[c1] : mean_d1[c1];
                    const auto& m2 = d1 == 0 ? mean_d0[c2] : mean_d1[c2];
                    quad += sq_dist(m1, m2);
                }
            }
            total += w * quad / 4.0;
        }
    }
    return total;
}

double immd_sq(const EmbeddingBatch& batch, PriorWeighting weighting) {
    batch.validate();
    const std::vector<double> pi = class_priors(batch, weighting);
    const int k = static_cast<int>(pi.size());

    std::vector<std::vector<double>> mix_mean(k);
    for (int c = 0; c < k; ++c)
        if (pi[c] > 0.0) mix_mean[c] = cell_mean(batch, c, -1);

    double total = 0.0;
    for (int c1 = 0; c1 < k; ++c1) {
        if (pi[c1] == 0.0) continue;
        for (int c2 = 0; c2 < k; ++c2) {
            if (pi[c2] == 0.0 || c1 == c2) continue;
            total += pi[c1] * pi[c2] * sq_dist(mix_mean[c1], mix_mean[c2]);
        }
    }
    return total;
}

double hsic(const GramMatrix& k, const GramMatrix& l) {
    const int n = k.n;
    if (n != l.n) throw std::invalid_argument("hsic: gram matrices must have the same size");
    if (n < 2) throw std::invalid_argument("hsic: need n >= 2");

    // double-center K, then Frobenius inner product with L
    std::vector<double> row_mean(n, 0.0), col_mean(n, 0.0);
    double total_mean = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            row_mean[i] += k(i, j);
            col_mean[j] += k(i, j);
            total_mean += k(i, j);
        }
    }
    for (auto& v : row_mean) v /= n;
    for (auto& v : col_mean) v /= n;
    total_mean /= static_cast<double>(n) * n;

    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            acc += (k(i, j) - row_mean[i] - col_mean[j] + total_mean) * l(i, j);
    const double denom = static_cast<double>(n - 1) * (n - 1);
    return acc / denom;
}

MixtureExpectationResult mixture_expectation_check(const EmbeddingBatch& batch,
                                                   const std::function<double(int, int)>& g) {
    batch.validate();
    const int n = batch.size();
    int n1 = 0;
    for (int d : batch.domain_labels) n1 += d;
    const int n0 = n - n1;
    const double p = static_cast<double>(n1) / n;

    double pooled = 0.0;
    double within1 = 0.0, within0 = 0.0, cross = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double v = g(i, j);
            pooled += v;
            const int di = batch.domain_labels[i], dj = batch.domain_labels[j];
            if (di == 1 && dj == 1) within1 += v;
            else if (di == 0 && dj == 0) within0 += v;
            else if (di == 1 && dj == 0) cross += v;
        }
    }

    MixtureExpectationResult res;
    res.lhs = pooled / (static_cast<double>(n) * n);
    double rhs = 0.0;
    if (n1 > 0) rhs += p * p * (within1 / (static_cast<double>(n1) * n1));
    if (n0 > 0) rhs += (1.0 - p) * (1.0 - p) * (within0 / (static_cast<double>(n0) * n0));
    if (n1 > 0 && n0 > 0) rhs += 2.0 * p * (1.0 - p) * (cross / (static_cast<double>(n1) * n0));
    res.rhs = rhs;
    return res;
}

DiscrepancyReport compute_report(const EmbeddingBatch& batch) {
    batch.validate();
    DiscrepancyReport rep;
    rep.cmmd_sq = cmmd_sq(batch);
    rep.dcmmd_sq = dcmmd_sq(batch);
    rep.immd_sq = immd_sq(batch);
    const GramMatrix k = gram(batch);
    const GramMatrix l = label_gram(batch.class_labels, LabelKernel{static_cast<double>(batch.n_classes()), 0.0});
    rep.hsic_xy = hsic(k, l);
    rep.hsic_xx = hsic(k, k);
    rep.class_priors = class_priors(batch, PriorWeighting::Empirical);
    rep.mixture_p = 0.5;
    return rep;
}

}  // namespace ctda
