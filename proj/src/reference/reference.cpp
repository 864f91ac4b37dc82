#include "reference/reference.hpp"

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

namespace ctda::reference {

GramMatrix naive_gram(const Mat& z) {
    GramMatrix g;
    g.n = z.rows;
    g.k.assign(static_cast<std::size_t>(z.rows) * z.rows, 0.0);
    for (int i = 0; i < z.rows; ++i)
        for (int j = 0; j < z.rows; ++j) {
            double s = 0.0;
            for (int c = 0; c < z.cols; ++c) s += z(i, c) * z(j, c);
            g(i, j) = s;
        }
    return g;
}

double naive_nt_xent(const Mat& z, const std::vector<int>& pairing, double tau) {
    const int n = z.rows;
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double num = 0.0;
        for (int c = 0; c < z.cols; ++c) num += z(i, c) * z(pairing[i], c);
        double denom = 0.0;
        for (int l = 0; l < n; ++l) {
            if (l == i) continue;
            double s = 0.0;
            for (int c = 0; c < z.cols; ++c) s += z(i, c) * z(l, c);
            denom += std::exp(s / tau);
        }
        loss += -std::log(std::exp(num / tau) / denom);
    }
    return loss / n;
}

double naive_sup_contrastive(const Mat& z, const std::vector<int>& labels, double tau) {
    const int n = z.rows;
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double denom = 0.0;
        for (int l = 0; l < n; ++l) {
            if (l == i) continue;
            double s = 0.0;
            for (int c = 0; c < z.cols; ++c) s += z(i, c) * z(l, c);
            denom += std::exp(s / tau);
        }
        double inner = 0.0;
        int n_pos = 0;
        for (int j = 0; j < n; ++j) {
            if (j == i || labels[j] != labels[i]) continue;
            double s = 0.0;
            for (int c = 0; c < z.cols; ++c) s += z(i, c) * z(j, c);
            inner += std::log(std::exp(s / tau) / denom);
            ++n_pos;
        }
        if (n_pos == 0) throw std::invalid_argument("naive_sup_contrastive: singleton class");
        loss += -inner / n_pos;
    }
    return loss / n;
}

namespace {

std::vector<double> mean_of(const EmbeddingBatch& b, int cls, int domain) {
    std::vector<double> m(b.dim(), 0.0);
    int count = 0;
    for (int i = 0; i < b.size(); ++i) {
        if (b.class_labels[i] != cls) continue;
        if (domain >= 0 && b.domain_labels[i] != domain) continue;
        for (int c = 0; c < b.dim(); ++c) m[c] += b.z(i, c);
        ++count;
    }
    if (count == 0) throw std::invalid_argument("reference: empty cell");
    for (auto& v : m) v /= count;
    return m;
}

double dist_sq(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

std::vector<int> sorted_classes(const EmbeddingBatch& b) {
    std::set<int> s(b.class_labels.begin(), b.class_labels.end());
    return {s.begin(), s.end()};
}

double prior(const EmbeddingBatch& b, int cls) {
    int count = 0;
    for (int c : b.class_labels)
        if (c == cls) ++count;
    return static_cast<double>(count) / b.size();
}

// mean of k over all ordered pairs of two cells, diagonal included
double cell_pair_mean(const EmbeddingBatch& b, int cls, int d1, int d2) {
    double s = 0.0;
    long count = 0;
    for (int i = 0; i < b.size(); ++i) {
        if (b.class_labels[i] != cls || b.domain_labels[i] != d1) continue;
        for (int j = 0; j < b.size(); ++j) {
            if (b.class_labels[j] != cls || b.domain_labels[j] != d2) continue;
            double k = 0.0;
            for (int c = 0; c < b.dim(); ++c) k += b.z(i, c) * b.z(j, c);
            s += k;
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("reference: empty cell pair");
    return s / static_cast<double>(count);
}

}  // namespace

double naive_cmmd_sq(const EmbeddingBatch& batch) {
    double total = 0.0;
    for (int cls : sorted_classes(batch))
        total += prior(batch, cls) * dist_sq(mean_of(batch, cls, 0), mean_of(batch, cls, 1));
    return total;
}

double naive_cmmd_sq_expectation_form(const EmbeddingBatch& batch) {
    double total = 0.0;
    for (int cls : sorted_classes(batch)) {
        const double e00 = cell_pair_mean(batch, cls, 0, 0);
        const double e11 = cell_pair_mean(batch, cls, 1, 1);
        const double e01 = cell_pair_mean(batch, cls, 0, 1);
        const double e10 = cell_pair_mean(batch, cls, 1, 0);
        // positive pairs at mixture probability 1/2: the four domain
        // combinations weighted 1/4 each
        const double e_pos = 0.25 * (e00 + e01 + e10 + e11);
        total += prior(batch, cls) * (2.0 * (e00 + e11) - 4.0 * e_pos);
    }
    return total;
}

double naive_dcmmd_sq(const EmbeddingBatch& batch) {
    const auto classes = sorted_classes(batch);
    double prior_sq = 0.0;
    for (int c : classes) prior_sq += prior(batch, c) * prior(batch, c);

    double total = 0.0;
    for (int c1 : classes) {
        for (int c2 : classes) {
            if (c1 == c2) continue;
            const double w = prior(batch, c1) * prior(batch, c2) / (1.0 - prior_sq);
            for (int d1 = 0; d1 < 2; ++d1)
                for (int d2 = 0; d2 < 2; ++d2)
                    total += w * 0.25 * dist_sq(mean_of(batch, c1, d2), mean_of(batch, c2, d1));
        }
    }
    return total;
}

double naive_immd_sq(const EmbeddingBatch& batch) {
    const auto classes = sorted_classes(batch);
    double total = 0.0;
    for (int c1 : classes)
        for (int c2 : classes)
            total += prior(batch, c1) * prior(batch, c2) * dist_sq(mean_of(batch, c1, -1), mean_of(batch, c2, -1));
    return total;
}

double naive_hsic(const GramMatrix& k, const GramMatrix& l) {
    const int n = k.n;
    std::vector<double> h(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) h[static_cast<std::size_t>(i) * n + j] = (i == j ? 1.0 : 0.0) - 1.0 / n;

    auto mul = [n](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int t = 0; t < n; ++t)
                for (int j = 0; j < n; ++j)
                    out[static_cast<std::size_t>(i) * n + j] +=
                        a[static_cast<std::size_t>(i) * n + t] * b[static_cast<std::size_t>(t) * n + j];
        return out;
    };

    std::vector<double> khlh = mul(mul(mul(k.k, h), l.k), h);
    double tr = 0.0;
    for (int i = 0; i < n; ++i) tr += khlh[static_cast<std::size_t>(i) * n + i];
    return tr / (static_cast<double>(n - 1) * (n - 1));
}

std::vector<double> naive_block_pool(const std::vector<double>& pixels, int side, int target_side) {
    const int block = side / target_side;
    std::vector<double> out(static_cast<std::size_t>(target_side) * target_side, 0.0);
    for (int by = 0; by < target_side; ++by)
        for (int bx = 0; bx < target_side; ++bx) {
            double s = 0.0;
            for (int y = 0; y < block; ++y)
                for (int x = 0; x < block; ++x)
                    s += pixels[static_cast<std::size_t>(by * block + y) * side + (bx * block + x)];
            out[static_cast<std::size_t>(by) * target_side + bx] = s / (static_cast<double>(block) * block);
        }
    return out;
}

double paircount_auc(const std::vector<double>& scores, const std::vector<int>& is_positive) {
    long n_pos = 0, n_neg = 0;
    double wins = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!is_positive[i]) continue;
        ++n_pos;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (is_positive[j]) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    for (int p : is_positive)
        if (!p) ++n_neg;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("paircount_auc: need both classes");
    return wins / (static_cast<double>(n_pos) * n_neg);
}

double paircount_auc_ovo(const Mat& scores, const std::vector<int>& labels) {
    int k = 0;
    for (int y : labels) k = std::max(k, y + 1);
    double total = 0.0;
    int n_pairs = 0;
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            std::vector<double> sa, sb;
            std::vector<int> pa, pb;
            for (int i = 0; i < scores.rows; ++i) {
                if (labels[i] != a && labels[i] != b) continue;
                sa.push_back(scores(i, a));
                pa.push_back(labels[i] == a ? 1 : 0);
                sb.push_back(scores(i, b));
                pb.push_back(labels[i] == b ? 1 : 0);
            }
            total += 0.5 * (paircount_auc(sa, pa) + paircount_auc(sb, pb));
            ++n_pairs;
        }
    }
    return total / n_pairs;
}

double paircount_auc_ovr(const Mat& scores, const std::vector<int>& labels) {
    int k = 0;
    for (int y : labels) k = std::max(k, y + 1);
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
        std::vector<double> s;
        std::vector<int> p;
        for (int i = 0; i < scores.rows; ++i) {
            s.push_back(scores(i, c));
            p.push_back(labels[i] == c ? 1 : 0);
        }
        total += paircount_auc(s, p);
    }
    return total / k;
}

double naive_lag1_autocorrelation(const std::vector<double>& pixels, int side) {
    double mean = 0.0;
    for (double p : pixels) mean += p;
    mean /= static_cast<double>(pixels.size());

    double num = 0.0, denom = 0.0;
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double d = pixels[static_cast<std::size_t>(y) * side + x] - mean;
            denom += d * d;
            if (x + 1 < side) num += d * (pixels[static_cast<std::size_t>(y) * side + x + 1] - mean);
        }
    return num / denom;
}

}  // namespace ctda::reference
