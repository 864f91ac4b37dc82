#include "ctda/analysis.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace ctda {

DecompositionRecord decompose(const EmbeddingBatch& batch, double tau, LossKind kind,
                              const std::vector<int>* pairing) {
    batch.validate();
    if (!(tau > 0.0)) throw std::invalid_argument("decompose: tau must be positive");
    const int n = batch.size();
    const int k_classes = batch.n_classes();

    // balanced (class, domain) cells are a precondition of the expansion
    std::map<std::pair<int, int>, int> cell_counts;
    for (int i = 0; i < n; ++i) cell_counts[{batch.class_labels[i], batch.domain_labels[i]}] += 1;
    if (static_cast<int>(cell_counts.size()) != 2 * k_classes)
        throw std::invalid_argument("decompose: every (class, domain) cell must be populated");
    const int cell = cell_counts.begin()->second;
    for (const auto& [key, count] : cell_counts)
        if (count != cell) throw std::invalid_argument("decompose: batch must be balanced across (class, domain) cells");

    const GramMatrix g = gram(batch);

    DecompositionRecord rec;
    rec.tau = tau;
    if (kind == LossKind::NtXent) {
        if (!pairing) throw std::invalid_argument("decompose: paired loss needs a pairing");
        rec.loss = nt_xent(batch.z, *pairing, tau).value;
    } else {
        rec.loss = sup_contrastive(batch.z, batch.class_labels, tau).value;
    }

    // A and C: cross-pair mean and mean per-row variance, self-pairs excluded
    double a_sum = 0.0, c_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double mean = 0.0;
        for (int l = 0; l < n; ++l)
            if (l != i) mean += g(i, l);
        mean /= (n - 1);
        double var = 0.0;
        for (int l = 0; l < n; ++l)
            if (l != i) {
                const double d = g(i, l) - mean;
                var += d * d;
            }
        var /= (n - 1);
        a_sum += mean;
        c_sum += var;
    }
    rec.term_a = a_sum / n;
    rec.term_c = c_sum / n;

    // B: per class, within-domain kernel means (self-pairs excluded), summed
    // over the two domains, averaged over classes.
    double b_sum = 0.0;
    for (int c = 0; c < k_classes; ++c) {
        for (int d = 0; d < 2; ++d) {
            double s = 0.0;
            long pairs = 0;
            for (int i = 0; i < n; ++i) {
                if (batch.class_labels[i] != c || batch.domain_labels[i] != d) continue;
                for (int j = 0; j < n; ++j) {
                    if (j == i || batch.class_labels[j] != c || batch.domain_labels[j] != d) continue;
                    s += g(i, j);
                    ++pairs;
                }
            }
            if (pairs == 0) throw std::invalid_argument("decompose: cell too small for within-cell pair mean");
            b_sum += s / static_cast<double>(pairs);
        }
    }
    rec.term_b = b_sum / k_classes;

    rec.cmmd_quarter = cmmd_sq(batch) / 4.0;
    rec.const_term = tau * std::log(static_cast<double>(n - 1));
    rec.residual = tau * rec.loss - rec.rhs();
    return rec;
}

GammaConstant solve_gamma(double k_max) {
    if (!(k_max > 0.0)) throw std::invalid_argument("solve_gamma: k_max must be positive");
    const double target = std::max(2.0, 2.0 * k_max);

    // f(gamma) = (1 + sqrt(1 - 4 gamma)) / (2 gamma) decreases from +inf at
    // 0+ to 2 at 1/4, so a root exists for every target >= 2.
    auto f = [](double gamma) { return (1.0 + std::sqrt(1.0 - 4.0 * gamma)) / (2.0 * gamma); };

    double lo = 1e-18, hi = 0.25;
    if (f(hi) >= target) {
        GammaConstant out;
        out.k_max = k_max;
        out.gamma = 0.25;
        return out;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) > target)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-12 * hi) break;
    }
    const double gamma = 0.5 * (lo + hi);
    if (!(gamma > 0.0 && gamma <= 0.25)) throw std::runtime_error("solve_gamma: no root in (0, 1/4]");
    GammaConstant out;
    out.k_max = k_max;
    out.gamma = gamma;
    return out;
}

BoundCheckResult immd_bound_check(const EmbeddingBatch& batch, double tau, LossKind kind, double alpha_hat,
                                  const std::vector<int>* pairing) {
    if (!(alpha_hat > 0.0)) throw std::invalid_argument("immd_bound_check: alpha_hat must be positive");
    batch.validate();
    const int n = batch.size();

    BoundCheckResult res;
    res.immd_sq = immd_sq(batch);
    const GramMatrix k = gram(batch);
    res.hsic_xx = hsic(k, k);

    const double gamma = solve_gamma(1.0).gamma;  // linear kernel on unit vectors: k_max = 1
    res.lhs = -res.immd_sq / alpha_hat + gamma * res.hsic_xx;

    if (kind == LossKind::NtXent) {
        if (!pairing) throw std::invalid_argument("immd_bound_check: paired loss needs a pairing");
        res.loss = nt_xent(batch.z, *pairing, tau).value;
    } else {
        res.loss = sup_contrastive(batch.z, batch.class_labels, tau).value;
    }

    // Var[k(X, X')] over cross pairs: the allowance reported alongside the
    // bound, never folded into lhs.
    double mean = 0.0;
    long pairs = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) {
                mean += k(i, j);
                ++pairs;
            }
    mean /= static_cast<double>(pairs);
    double var = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) {
                const double d = k(i, j) - mean;
                var += d * d;
            }
    res.var_allowance = var / static_cast<double>(pairs);

    res.slack = res.loss - res.lhs;
    res.satisfied_with_slack = res.slack + res.var_allowance >= 0.0;
    return res;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: need two series of equal length >= 2");
    const int n = static_cast<int>(x.size());
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (int i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: a series has zero variance");
    return sxy / std::sqrt(sxx * syy);
}

double derivative_correlation(const std::vector<double>& term_series, const std::vector<double>& loss_series,
                              double tau) {
    if (term_series.size() != loss_series.size())
        throw std::invalid_argument("derivative_correlation: series lengths differ");
    if (term_series.size() < 3) throw std::invalid_argument("derivative_correlation: need at least 3 steps");

    std::vector<double> d_term(term_series.size() - 1), d_loss(loss_series.size() - 1);
    for (std::size_t i = 0; i + 1 < term_series.size(); ++i) {
        d_term[i] = term_series[i + 1] - term_series[i];
        d_loss[i] = tau * (loss_series[i + 1] - loss_series[i]);
    }
    return pearson(d_term, d_loss);
}

}  // namespace ctda
