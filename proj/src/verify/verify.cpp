#include "verify/verify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ctda/discrepancy.hpp"
#include "ctda/rng.hpp"
#include "ctda/synthgen.hpp"
#include "json.hpp"
#include "reference/reference.hpp"

namespace ctda::verify {

bool VerifyReport::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

EmbeddingBatch random_cluster_batch(const ClusterBatchSpec& spec, std::uint64_t seed) {
    RandomStream rng(seed);

    std::vector<std::vector<double>> centers(spec.n_classes, std::vector<double>(spec.dim));
    for (auto& c : centers) {
        double norm = 0.0;
        for (auto& v : c) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : c) v *= spec.class_separation / norm;
    }
    std::vector<double> offset(spec.dim);
    double onorm = 0.0;
    for (auto& v : offset) {
        v = rng.normal();
        onorm += v * v;
    }
    onorm = std::sqrt(onorm);
    for (auto& v : offset) v *= spec.domain_offset / onorm;

    const int n = spec.n_classes * 2 * spec.per_cell;
    EmbeddingBatch batch;
    batch.z = Mat(n, spec.dim);
    batch.class_labels.resize(n);
    batch.domain_labels.resize(n);

    int row = 0;
    for (int c = 0; c < spec.n_classes; ++c) {
        for (int d = 0; d < 2; ++d) {
            for (int s = 0; s < spec.per_cell; ++s, ++row) {
                double norm = 0.0;
                for (int t = 0; t < spec.dim; ++t) {
                    const double v = centers[c][t] + (d == 0 ? -1.0 : 1.0) * offset[t] + spec.noise * rng.normal();
                    batch.z(row, t) = v;
                    norm += v * v;
                }
                norm = std::sqrt(norm);
                for (int t = 0; t < spec.dim; ++t) batch.z(row, t) /= norm;
                batch.class_labels[row] = c;
                batch.domain_labels[row] = d;
            }
        }
    }
    return batch;
}

EmbeddingBatch random_unit_batch(int n, int m, int n_classes, std::uint64_t seed) {
    RandomStream rng(seed);
    EmbeddingBatch batch;
    batch.z = Mat(n, m);
    batch.class_labels.resize(n);
    batch.domain_labels.resize(n);
    for (int i = 0; i < n; ++i) {
        double norm = 0.0;
        for (int c = 0; c < m; ++c) {
            batch.z(i, c) = rng.normal();
            norm += batch.z(i, c) * batch.z(i, c);
        }
        norm = std::sqrt(norm);
        for (int c = 0; c < m; ++c) batch.z(i, c) /= norm;
        batch.class_labels[i] = i % n_classes;
        batch.domain_labels[i] = (i / n_classes) % 2;
    }
    return batch;
}

std::vector<int> random_pairing(int n, std::uint64_t seed) {
    if (n % 2 != 0) throw std::invalid_argument("random_pairing: n must be even");
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    RandomStream rng(seed);
    rng.shuffle(order.begin(), order.end());
    std::vector<int> pairing(n);
    for (int i = 0; i < n; i += 2) {
        pairing[order[i]] = order[i + 1];
        pairing[order[i + 1]] = order[i];
    }
    return pairing;
}

namespace {

double frobenius(const Mat& m) {
    double s = 0.0;
    for (double v : m.a) s += v * v;
    return std::sqrt(s);
}

double rel_grad_error(const Mat& analytic, const Mat& fd) {
    Mat diff = analytic;
    for (std::size_t i = 0; i < diff.a.size(); ++i) diff.a[i] -= fd.a[i];
    const double denom = std::max({frobenius(analytic), frobenius(fd), 1e-300});
    return frobenius(diff) / denom;
}

}  // namespace

double loss_grad_fd_error(LossKind kind, const Mat& z, const std::vector<int>& labels,
                          const std::vector<int>& pairing, double tau, double h) {
    auto value = [&](const Mat& zz) {
        return kind == LossKind::NtXent ? nt_xent(zz, pairing, tau).value : sup_contrastive(zz, labels, tau).value;
    };
    const Mat analytic =
        kind == LossKind::NtXent ? nt_xent(z, pairing, tau).grad_z : sup_contrastive(z, labels, tau).grad_z;

    Mat fd(z.rows, z.cols);
    Mat probe = z;
    for (std::size_t i = 0; i < probe.a.size(); ++i) {
        const double orig = probe.a[i];
        probe.a[i] = orig + h;
        const double up = value(probe);
        probe.a[i] = orig - h;
        const double down = value(probe);
        probe.a[i] = orig;
        fd.a[i] = (up - down) / (2.0 * h);
    }
    return rel_grad_error(analytic, fd);
}

namespace {

struct ParamBlockView {
    double* data;
    std::size_t size;
    const double* grad;
};

double fd_error_over_blocks(const std::vector<ParamBlockView>& blocks, const std::function<double()>& value,
                            double h) {
    double worst = 0.0;
    for (const auto& block : blocks) {
        double g_norm = 0.0, fd_norm = 0.0, diff_norm = 0.0;
        for (std::size_t i = 0; i < block.size; ++i) {
            const double orig = block.data[i];
            block.data[i] = orig + h;
            const double up = value();
            block.data[i] = orig - h;
            const double down = value();
            block.data[i] = orig;
            const double fd = (up - down) / (2.0 * h);
            g_norm += block.grad[i] * block.grad[i];
            fd_norm += fd * fd;
            diff_norm += (block.grad[i] - fd) * (block.grad[i] - fd);
        }
        const double denom = std::max({std::sqrt(g_norm), std::sqrt(fd_norm), 1e-300});
        worst = std::max(worst, std::sqrt(diff_norm) / denom);
    }
    return worst;
}

}  // namespace

double supcon_end_to_end_fd_error(const FeatureMap& fm, const Mat& inputs, const std::vector<int>& labels,
                                  double tau, double h) {
    FeatureMap probe = fm;
    const SupConGradResult g = supcon_gradients(probe, inputs, labels, tau);
    auto value = [&]() { return supcon_gradients(probe, inputs, labels, tau).loss; };
    const std::vector<ParamBlockView> blocks = {
        {probe.w1.a.data(), probe.w1.a.size(), g.fm.w1.a.data()},
        {probe.b1.data(), probe.b1.size(), g.fm.b1.data()},
        {probe.w2.a.data(), probe.w2.a.size(), g.fm.w2.a.data()},
        {probe.b2.data(), probe.b2.size(), g.fm.b2.data()},
    };
    return fd_error_over_blocks(blocks, value, h);
}

double ce_end_to_end_fd_error(const FeatureMap& fm, const LinearHead& head, const Mat& inputs,
                              const std::vector<int>& labels, double h) {
    FeatureMap probe_fm = fm;
    LinearHead probe_head = head;
    const CeGradResult g = ce_gradients(probe_fm, probe_head, inputs, labels);
    auto value = [&]() { return ce_gradients(probe_fm, probe_head, inputs, labels).loss; };
    const std::vector<ParamBlockView> blocks = {
        {probe_fm.w1.a.data(), probe_fm.w1.a.size(), g.fm.w1.a.data()},
        {probe_fm.b1.data(), probe_fm.b1.size(), g.fm.b1.data()},
        {probe_fm.w2.a.data(), probe_fm.w2.a.size(), g.fm.w2.a.data()},
        {probe_fm.b2.data(), probe_fm.b2.size(), g.fm.b2.data()},
        {probe_head.w.a.data(), probe_head.w.a.size(), g.head_w.a.data()},
        {probe_head.b.data(), probe_head.b.size(), g.head_b.data()},
    };
    return fd_error_over_blocks(blocks, value, h);
}

bool residual_identity_ok(const DecompositionRecord& rec, double tol) {
    return std::abs(rec.residual - (rec.tau * rec.loss - rec.rhs())) <= tol;
}

double estimate_alpha(const ClusterBatchSpec& spec, std::uint64_t seed, int n_batches) {
    double sum = 0.0;
    for (int b = 0; b < n_batches; ++b) {
        const EmbeddingBatch batch = random_cluster_batch(spec, splitmix64(seed + b));
        const double immd = immd_sq(batch);
        const GramMatrix k = gram(batch);
        const GramMatrix l =
            label_gram(batch.class_labels, LabelKernel{static_cast<double>(batch.n_classes()), 0.0});
        const double h_xy = hsic(k, l);
        if (h_xy <= 0.0) throw std::runtime_error("estimate_alpha: nonpositive label dependence");
        sum += immd / h_xy;
    }
    return sum / n_batches;
}

namespace {

CheckResult check_gram_vs_reference(std::uint64_t seed) {
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        const EmbeddingBatch b = random_unit_batch(6 + t, 3 + t % 5, 2, splitmix64(seed + t));
        const GramMatrix fast = gram(b);
        const GramMatrix slow = reference::naive_gram(b.z);
        for (std::size_t i = 0; i < fast.k.size(); ++i) worst = std::max(worst, std::abs(fast.k[i] - slow.k[i]));
    }
    return {"gram_vs_reference", worst < 1e-12, worst, 1e-12, "max abs difference over 10 random batches"};
}

CheckResult check_losses_vs_reference(std::uint64_t seed) {
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        RandomStream pick(splitmix64(seed ^ (0x10c0 + t)));
        const int n = 2 * static_cast<int>(pick.uniform_int(2, 8));
        const int m = static_cast<int>(pick.uniform_int(2, 8));
        const double tau = pick.uniform(0.1, 2.0);
        const EmbeddingBatch b = random_unit_batch(n, m, 2, splitmix64(seed + 31 * t));
        const auto pairing = random_pairing(n, splitmix64(seed + 77 * t));
        worst = std::max(worst, std::abs(nt_xent(b.z, pairing, tau).value - reference::naive_nt_xent(b.z, pairing, tau)));
        worst = std::max(worst, std::abs(sup_contrastive(b.z, b.class_labels, tau).value -
                                         reference::naive_sup_contrastive(b.z, b.class_labels, tau)));
    }
    return {"losses_vs_reference", worst < 1e-12, worst, 1e-12, "max abs difference over 20 random batches"};
}

CheckResult check_loss_grad_fd(std::uint64_t seed) {
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        const int n = 8;
        const EmbeddingBatch b = random_unit_batch(n, 5, 2, splitmix64(seed + 101 * t));
        const auto pairing = random_pairing(n, splitmix64(seed + 13 * t));
        worst = std::max(worst, loss_grad_fd_error(LossKind::NtXent, b.z, b.class_labels, pairing, 0.5));
        worst = std::max(worst, loss_grad_fd_error(LossKind::SupContrastive, b.z, b.class_labels, pairing, 0.5));
    }
    return {"loss_gradients_fd", worst < 1e-4, worst, 1e-4, "relative error vs central differences"};
}

CheckResult check_estimators_vs_reference(std::uint64_t seed) {
    double worst = 0.0;
    ClusterBatchSpec spec;
    spec.n_classes = 3;
    spec.per_cell = 5;
    for (int t = 0; t < 10; ++t) {
        const EmbeddingBatch b = random_cluster_batch(spec, splitmix64(seed + 7 * t));
        worst = std::max(worst, std::abs(cmmd_sq(b) - reference::naive_cmmd_sq(b)));
        worst = std::max(worst, std::abs(dcmmd_sq(b) - reference::naive_dcmmd_sq(b)));
        worst = std::max(worst, std::abs(immd_sq(b) - reference::naive_immd_sq(b)));
    }
    return {"estimators_vs_reference", worst < 1e-10, worst, 1e-10, "max abs difference over 10 batches"};
}

CheckResult check_cmmd_expectation_form(std::uint64_t seed) {
    double worst = 0.0;
    ClusterBatchSpec spec;
    spec.n_classes = 2;
    spec.per_cell = 10;
    for (int t = 0; t < 10; ++t) {
        const EmbeddingBatch b = random_cluster_batch(spec, splitmix64(seed + 11 * t));
        worst = std::max(worst, std::abs(cmmd_sq(b) - reference::naive_cmmd_sq_expectation_form(b)));
    }
    return {"cmmd_expectation_form", worst < 1e-10, worst, 1e-10, "plug-in vs kernel-mean expansion"};
}

CheckResult check_mixture_split(std::uint64_t seed) {
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        const EmbeddingBatch b = random_unit_batch(20, 6, 2, splitmix64(seed + 3 * t));
        const GramMatrix k = gram(b);
        const auto res = mixture_expectation_check(b, [&](int i, int j) { return k(i, j); });
        worst = std::max(worst, std::abs(res.lhs - res.rhs));
    }
    return {"mixture_split_exact", worst < 1e-10, worst, 1e-10, "pooled pair mean vs domain split"};
}

CheckResult check_hsic_vs_reference(std::uint64_t seed) {
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
        const EmbeddingBatch b = random_unit_batch(12, 4, 3, splitmix64(seed + 5 * t));
        const GramMatrix k = gram(b);
        const GramMatrix l = label_gram(b.class_labels, LabelKernel{3.0, 0.5});
        worst = std::max(worst, std::abs(hsic(k, l) - reference::naive_hsic(k, l)));
    }
    return {"hsic_vs_reference", worst < 1e-12, worst, 1e-12, "centered trace vs materialized products"};
}

CheckResult check_hsic_closed_form(std::uint64_t seed) {
    // beta = delta_l / K = 1 with the supervised label kernel
    double worst = 0.0;
    ClusterBatchSpec spec;
    spec.n_classes = 2;
    spec.per_cell = 16;  // n = 64
    for (int t = 0; t < 10; ++t) {
        const EmbeddingBatch b = random_cluster_batch(spec, splitmix64(seed + 17 * t));
        const int n = b.size();
        const GramMatrix k = gram(b);
        const GramMatrix l = label_gram(b.class_labels, LabelKernel{2.0, 0.0});
        const double h = hsic(k, l);

        double pos = 0.0, all = 0.0;
        long n_pos = 0, n_all = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                all += k(i, j);
                ++n_all;
                if (b.class_labels[i] == b.class_labels[j]) {
                    pos += k(i, j);
                    ++n_pos;
                }
            }
        const double closed = pos / n_pos - all / n_all;
        worst = std::max(worst, std::abs(h - closed));
    }
    return {"hsic_closed_form", worst < 0.05, worst, 0.05, "dependence vs positive-minus-all kernel means (n=64)"};
}

CheckResult check_residual_identity(std::uint64_t seed) {
    double worst = 0.0;
    ClusterBatchSpec spec;
    for (int t = 0; t < 10; ++t) {
        const EmbeddingBatch b = random_cluster_batch(spec, splitmix64(seed + 29 * t));
        const DecompositionRecord rec = decompose(b, 0.5, LossKind::SupContrastive);
        worst = std::max(worst, std::abs(rec.residual - (rec.tau * rec.loss - rec.rhs())));
    }
    return {"residual_identity", worst < 1e-12, worst, 1e-12, "stored residual vs recomputed identity"};
}

CheckResult check_residual_shrinkage(std::uint64_t seed) {
    const std::vector<double> grid = {0.2, 0.5, 1.0, 2.0, 5.0};
    ClusterBatchSpec spec;
    spec.per_cell = 16;
    std::vector<double> mean_abs(grid.size(), 0.0);
    const int n_batches = 30;
    for (int b = 0; b < n_batches; ++b) {
        const EmbeddingBatch batch = random_cluster_batch(spec, splitmix64(seed + 41 * b));
        for (std::size_t g = 0; g < grid.size(); ++g)
            mean_abs[g] += std::abs(decompose(batch, grid[g], LossKind::SupContrastive).residual);
    }
    for (auto& v : mean_abs) v /= n_batches;
    bool mono = true;
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (mean_abs[g] > mean_abs[g - 1]) mono = false;
    std::string detail = "mean |residual| over tau grid {0.2,0.5,1,2,5}:";
    for (double v : mean_abs) detail += " " + std::to_string(v);
    return {"residual_shrinkage", mono, mean_abs.back(), mean_abs.front(), detail};
}

CheckResult check_gamma(std::uint64_t seed) {
    RandomStream rng(splitmix64(seed ^ 0x9a77aULL));
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const double k_max = rng.uniform(1.0, 10.0);
        const GammaConstant g = solve_gamma(k_max);
        const double lhs = (1.0 + std::sqrt(1.0 - 4.0 * g.gamma)) / (2.0 * g.gamma);
        worst = std::max(worst, std::abs(lhs - std::max(2.0, 2.0 * k_max)));
    }
    return {"gamma_backsubstitution", worst < 1e-10, worst, 1e-10, "defining equation residual over 20 draws"};
}

CheckResult check_bound_rate(std::uint64_t seed) {
    ClusterBatchSpec spec;
    spec.per_cell = 16;  // n = 64
    const double alpha = estimate_alpha(spec, splitmix64(seed ^ 0xa1fa), 20);
    int satisfied = 0;
    for (int t = 0; t < 100; ++t) {
        const EmbeddingBatch b = random_cluster_batch(spec, splitmix64(seed + 53 * t));
        if (immd_bound_check(b, 0.5, LossKind::SupContrastive, alpha).satisfied_with_slack) ++satisfied;
    }
    return {"bound_rate", satisfied >= 95, static_cast<double>(satisfied), 95.0,
            "batches (of 100) satisfying the loss lower bound"};
}

CheckResult check_end_to_end_grad(std::uint64_t seed) {
    RandomStream rng(splitmix64(seed ^ 0xe2eULL));
    double worst = 0.0;
    for (int t = 0; t < 3; ++t) {
        FeatureMap fm = FeatureMap::init(6, 5, 4, splitmix64(seed + 61 * t));
        LinearHead head = LinearHead::init(4, 3, splitmix64(seed + 62 * t));
        Mat x(12, 6);
        for (auto& v : x.a) v = rng.normal();
        std::vector<int> y(12);
        for (int i = 0; i < 12; ++i) y[i] = i % 3;
        worst = std::max(worst, supcon_end_to_end_fd_error(fm, x, y, 0.5));
        worst = std::max(worst, ce_end_to_end_fd_error(fm, head, x, y));
    }
    return {"end_to_end_gradients_fd", worst < 1e-3, worst, 1e-3, "worst parameter-block relative error"};
}

CheckResult check_spectrum_slope(std::uint64_t seed) {
    GeneratorConfig cfg;
    cfg.patch_size = 128;
    double worst_rel = 0.0;
    for (double beta : {1.2, 1.6}) {
        std::vector<double> rings;
        const int r_min = 3, r_max = 16;
        for (int s = 0; s < 8; ++s) {
            const Patch p = sample_texture(cfg, beta, splitmix64(seed + 71 * s + static_cast<int>(10 * beta)));
            const auto power = spectrum_ring_power(p.pixels, cfg.patch_size, r_min, r_max);
            if (rings.empty()) rings.assign(power.size(), 0.0);
            for (std::size_t i = 0; i < power.size(); ++i) rings[i] += power[i];
        }
        const double slope = fit_loglog_slope(rings, r_min);
        worst_rel = std::max(worst_rel, std::abs(slope - (-2.0 * beta)) / (2.0 * beta));
    }
    return {"spectrum_slope", worst_rel < 0.15, worst_rel, 0.15, "relative slope error vs -2*beta, beta in {1.2, 1.6}"};
}

}  // namespace

VerifyReport run_all(std::uint64_t seed) {
    VerifyReport report;
    report.checks.push_back(check_gram_vs_reference(seed));
    report.checks.push_back(check_losses_vs_reference(seed));
    report.checks.push_back(check_loss_grad_fd(seed));
    report.checks.push_back(check_estimators_vs_reference(seed));
    report.checks.push_back(check_cmmd_expectation_form(seed));
    report.checks.push_back(check_mixture_split(seed));
    report.checks.push_back(check_hsic_vs_reference(seed));
    report.checks.push_back(check_hsic_closed_form(seed));
    report.checks.push_back(check_residual_identity(seed));
    report.checks.push_back(check_residual_shrinkage(seed));
    report.checks.push_back(check_gamma(seed));
    report.checks.push_back(check_bound_rate(seed));
    report.checks.push_back(check_end_to_end_grad(seed));
    report.checks.push_back(check_spectrum_slope(seed));
    return report;
}

void write_report(const VerifyReport& report, const std::filesystem::path& path) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : report.checks)
        checks.push_back(nlohmann::json{{"name", c.name},
                                        {"pass", c.pass},
                                        {"measured", c.measured},
                                        {"tolerance", c.tolerance},
                                        {"details", c.details}});
    nlohmann::json doc{{"all_pass", report.all_pass()}, {"checks", checks}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_report: cannot open " + path.string());
    out << doc.dump(2) << "\n";
}

}  // namespace ctda::verify
