#include "ctda/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctda {

namespace {

// Row-wise softmax weights p[i][l] over l != i at temperature tau, with
// max-subtraction (mandatory for the low end of the temperature schedules).
// Returns per-row log-sum value log(sum_{l != i} e^{s_il / tau}).
std::vector<double> row_logsumexp(const GramMatrix& g, double tau, Mat* weights) {
    const int n = g.n;
    std::vector<double> lse(n, 0.0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        double mx = -1e300;
        for (int l = 0; l < n; ++l)
            if (l != i) mx = std::max(mx, g(i, l) / tau);
        double sum = 0.0;
        for (int l = 0; l < n; ++l)
            if (l != i) sum += std::exp(g(i, l) / tau - mx);
        lse[i] = mx + std::log(sum);
        if (weights) {
            for (int l = 0; l < n; ++l)
                (*weights)(i, l) = l == i ? 0.0 : std::exp(g(i, l) / tau - lse[i]);
        }
    }
    return lse;
}

// grad_z[a] = sum_l (G[a][l] + G[l][a]) z[l], where G holds the per-pair
// score gradients. Rows are independent, so the parallel loop is exact.
Mat compose_pair_gradient(const Mat& z, const Mat& score_grad) {
    const int n = z.rows, m = z.cols;
    Mat grad(n, m);
#pragma omp parallel for schedule(static)
    for (int a = 0; a < n; ++a) {
        for (int l = 0; l < n; ++l) {
            const double w = score_grad(a, l) + score_grad(l, a);
            if (w == 0.0) continue;
            for (int c = 0; c < m; ++c) grad(a, c) += w * z(l, c);
        }
    }
    return grad;
}

}  // namespace

void validate_pairing(const std::vector<int>& pairing, int n) {
    if (static_cast<int>(pairing.size()) != n)
        throw std::invalid_argument("pairing: length does not match batch size");
    if (n % 2 != 0) throw std::invalid_argument("pairing: batch size must be even");
    for (int i = 0; i < n; ++i) {
        const int j = pairing[i];
        if (j < 0 || j >= n) throw std::invalid_argument("pairing: index out of range");
        if (j == i) throw std::invalid_argument("pairing: fixed point at index " + std::to_string(i));
        if (pairing[j] != i) throw std::invalid_argument("pairing: not an involution");
    }
}

LossResult nt_xent(const Mat& z, const std::vector<int>& pairing, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("nt_xent: tau must be positive");
    const int n = z.rows;
    validate_pairing(pairing, n);

    const GramMatrix g = gram_unchecked(z);
    Mat weights(n, n);
    const std::vector<double> lse = row_logsumexp(g, tau, &weights);

    std::vector<double> per_row(n, 0.0);
    for (int i = 0; i < n; ++i) per_row[i] = lse[i] - g(i, pairing[i]) / tau;
    double loss = 0.0;
    for (int i = 0; i < n; ++i) loss += per_row[i];
    loss /= n;

    Mat score_grad(n, n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double scale = 1.0 / (n * tau);
        for (int l = 0; l < n; ++l) {
            if (l == i) continue;
            score_grad(i, l) = scale * (weights(i, l) - (l == pairing[i] ? 1.0 : 0.0));
        }
    }

    LossResult out;
    out.value = loss;
    out.grad_z = compose_pair_gradient(z, score_grad);
    return out;
}

LossResult nt_xent(const EmbeddingBatch& batch, const std::vector<int>& pairing, double tau) {
    batch.validate();
    return nt_xent(batch.z, pairing, tau);
}

LossResult sup_contrastive(const Mat& z, const std::vector<int>& class_labels, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("sup_contrastive: tau must be positive");
    const int n = z.rows;
    if (static_cast<int>(class_labels.size()) != n)
        throw std::invalid_argument("sup_contrastive: label length mismatch");

    std::vector<int> pos_count(n, 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (j != i && class_labels[j] == class_labels[i]) ++pos_count[i];
    for (int i = 0; i < n; ++i)
        if (pos_count[i] == 0)
            throw std::invalid_argument("sup_contrastive: class of sample " + std::to_string(i) +
                                        " has a single member");

    const GramMatrix g = gram_unchecked(z);
    Mat weights(n, n);
    const std::vector<double> lse = row_logsumexp(g, tau, &weights);

    std::vector<double> per_row(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double mean_pos = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i && class_labels[j] == class_labels[i]) mean_pos += g(i, j);
        mean_pos /= pos_count[i];
        per_row[i] = lse[i] - mean_pos / tau;
    }
    double loss = 0.0;
    for (int i = 0; i < n; ++i) loss += per_row[i];
    loss /= n;

    Mat score_grad(n, n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double scale = 1.0 / (n * tau);
        for (int l = 0; l < n; ++l) {
            if (l == i) continue;
            const double pos_w = class_labels[l] == class_labels[i] ? 1.0 / pos_count[i] : 0.0;
            score_grad(i, l) = scale * (weights(i, l) - pos_w);
        }
    }

    LossResult out;
    out.value = loss;
    out.grad_z = compose_pair_gradient(z, score_grad);
    return out;
}

LossResult sup_contrastive(const EmbeddingBatch& batch, double tau) {
    batch.validate();
    return sup_contrastive(batch.z, batch.class_labels, tau);
}

LossResult cross_entropy(const Mat& logits, const std::vector<int>& labels) {
    const int n = logits.rows, k = logits.cols;
    if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("cross_entropy: label length mismatch");
    for (int y : labels)
        if (y < 0 || y >= k) throw std::invalid_argument("cross_entropy: label out of range");
    for (double v : logits.a)
        if (!std::isfinite(v)) throw std::invalid_argument("cross_entropy: non-finite logit");

    LossResult out;
    out.grad_z = Mat(n, k);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = logits(i, 0);
        for (int c = 1; c < k; ++c) mx = std::max(mx, logits(i, c));
        double sum = 0.0;
        for (int c = 0; c < k; ++c) sum += std::exp(logits(i, c) - mx);
        const double lse = mx + std::log(sum);
        loss += lse - logits(i, labels[i]);
        for (int c = 0; c < k; ++c) {
            const double softmax = std::exp(logits(i, c) - lse);
            out.grad_z(i, c) = (softmax - (c == labels[i] ? 1.0 : 0.0)) / n;
        }
    }
    out.value = loss / n;
    return out;
}

ExpectationFormResult empirical_expectation_form(const EmbeddingBatch& batch, double tau, LossKind kind,
                                                 const std::vector<int>* pairing) {
    batch.validate();
    const int n = batch.size();
    const GramMatrix g = gram(batch);

    double lhs;
    if (kind == LossKind::NtXent) {
        if (!pairing) throw std::invalid_argument("empirical_expectation_form: paired loss needs a pairing");
        lhs = nt_xent(batch.z, *pairing, tau).value;
    } else {
        lhs = sup_contrastive(batch.z, batch.class_labels, tau).value;
    }

    const std::vector<double> lse = row_logsumexp(g, tau, nullptr);
    double mean_log = 0.0;
    for (int i = 0; i < n; ++i) mean_log += lse[i] - std::log(static_cast<double>(n - 1));
    mean_log /= n;

    // pooled positive pairs: every ordered positive pair weighted equally
    double pos_sum = 0.0;
    long pos_pairs = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const bool positive = kind == LossKind::NtXent ? (*pairing)[i] == j
                                                           : batch.class_labels[i] == batch.class_labels[j];
            if (positive) {
                pos_sum += g(i, j);
                ++pos_pairs;
            }
        }
    }

    ExpectationFormResult res;
    res.lhs = lhs;
    res.rhs = mean_log - pos_sum / (static_cast<double>(pos_pairs) * tau) + std::log(static_cast<double>(n - 1));
    return res;
}

}  // namespace ctda
