// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 6, 7 and 9 drive the ctda CLI end to end; pass its path
// as argv[1].

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ctda/analysis.hpp"
#include "ctda/csv.hpp"
#include "ctda/discrepancy.hpp"
#include "ctda/harness.hpp"
#include "ctda/losses.hpp"
#include "ctda/rng.hpp"
#include "ctda/synthgen.hpp"
#include "ctda/trainer.hpp"
#include "json.hpp"
#include "reference/reference.hpp"
#include "verify/verify.hpp"

namespace fs = std::filesystem;
using namespace ctda;
using ctda::verify::ClusterBatchSpec;

namespace {

int g_failures = 0;
fs::path g_work;
std::string g_cli;

void report(int number, const char* name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %-28s %s\n", pass ? "PASS" : "FAIL", number, name, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void run_criterion(int number, const char* name, const std::function<std::pair<bool, std::string>()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    std::string detail;
    try {
        auto [ok, text] = body();
        pass = ok;
        detail = text;
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[32];
    std::snprintf(buf, sizeof(buf), " [%.1fs]", secs);
    report(number, name, pass, detail + buf);
}

int run_cli(const std::string& args) {
    const std::string cmd = g_cli + " " + args + " >> " + (g_work / "cli.log").string() + " 2>&1";
    return std::system(cmd.c_str());
}

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string format_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// ---- criteria 1-5, 8: library-level -----------------------------------------

std::pair<bool, std::string> loss_oracles() {
    RandomStream pick(101);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const int n = 2 * static_cast<int>(pick.uniform_int(2, 8));  // n <= 16
        const int m = static_cast<int>(pick.uniform_int(2, 8));
        const double tau = pick.uniform(0.1, 2.0);
        const EmbeddingBatch b = verify::random_unit_batch(n, m, 2, splitmix64(1000 + t));
        const auto pairing = verify::random_pairing(n, splitmix64(2000 + t));
        worst = std::max(worst, std::abs(nt_xent(b.z, pairing, tau).value -
                                         reference::naive_nt_xent(b.z, pairing, tau)));
        worst = std::max(worst, std::abs(sup_contrastive(b.z, b.class_labels, tau).value -
                                         reference::naive_sup_contrastive(b.z, b.class_labels, tau)));
    }
    return {worst < 1e-12, "max |loss - naive| = " + format_g(worst) + " over 100 batches (tol 1e-12)"};
}

std::pair<bool, std::string> gradient_suite() {
    double worst_loss = 0.0;
    for (int t = 0; t < 50; ++t) {
        const int n = 12;
        const EmbeddingBatch b = verify::random_unit_batch(n, 6, 3, splitmix64(3000 + t));
        const auto pairing = verify::random_pairing(n, splitmix64(4000 + t));
        worst_loss = std::max(worst_loss, verify::loss_grad_fd_error(LossKind::NtXent, b.z, b.class_labels,
                                                                     pairing, 0.5));
        worst_loss = std::max(worst_loss, verify::loss_grad_fd_error(LossKind::SupContrastive, b.z, b.class_labels,
                                                                     pairing, 0.5));
    }

    RandomStream rng(5005);
    double worst_model = 0.0;
    for (int t = 0; t < 50; ++t) {
        const FeatureMap fm = FeatureMap::init(6, 5, 4, splitmix64(6000 + t));
        const LinearHead head = LinearHead::init(4, 3, splitmix64(7000 + t));
        Mat x(12, 6);
        for (auto& v : x.a) v = rng.normal();
        std::vector<int> y(12);
        for (int i = 0; i < 12; ++i) y[i] = i % 3;
        worst_model = std::max(worst_model, verify::supcon_end_to_end_fd_error(fm, x, y, 0.5));
        worst_model = std::max(worst_model, verify::ce_end_to_end_fd_error(fm, head, x, y));
    }

    const bool pass = worst_loss < 1e-4 && worst_model < 1e-3;
    return {pass, "loss fd rel err " + format_g(worst_loss) + " (tol 1e-4), model fd rel err " +
                      format_g(worst_model) + " (tol 1e-3), 50 instances each"};
}

std::pair<bool, std::string> estimator_oracles() {
    double worst = 0.0, worst_exp = 0.0;
    ClusterBatchSpec spec;
    spec.n_classes = 3;
    spec.per_cell = 5;
    for (int t = 0; t < 20; ++t) {
        const EmbeddingBatch b = verify::random_cluster_batch(spec, splitmix64(8000 + t));
        worst = std::max(worst, std::abs(cmmd_sq(b) - reference::naive_cmmd_sq(b)));
        worst = std::max(worst, std::abs(dcmmd_sq(b) - reference::naive_dcmmd_sq(b)));
        worst = std::max(worst, std::abs(immd_sq(b) - reference::naive_immd_sq(b)));
        worst_exp = std::max(worst_exp, std::abs(cmmd_sq(b) - reference::naive_cmmd_sq_expectation_form(b)));
    }
    const bool pass = worst < 1e-10 && worst_exp < 1e-10;
    return {pass, "max enumeration gap " + format_g(worst) + ", expectation-form gap " + format_g(worst_exp) +
                      " (tol 1e-10)"};
}

std::pair<bool, std::string> residual_shrinkage() {
    ClusterBatchSpec spec;
    spec.per_cell = 16;
    double mean_02 = 0.0, mean_05 = 0.0, mean_5 = 0.0;
    const int n_batches = 30;
    for (int t = 0; t < n_batches; ++t) {
        const EmbeddingBatch b = verify::random_cluster_batch(spec, splitmix64(9000 + t));
        mean_02 += std::abs(decompose(b, 0.2, LossKind::SupContrastive).residual);
        mean_05 += std::abs(decompose(b, 0.5, LossKind::SupContrastive).residual);
        mean_5 += std::abs(decompose(b, 5.0, LossKind::SupContrastive).residual);
    }
    mean_02 /= n_batches;
    mean_05 /= n_batches;
    mean_5 /= n_batches;
    const bool pass = mean_5 < mean_05 && mean_05 < mean_02;
    return {pass, "mean |residual| at tau {0.2, 0.5, 5} = {" + format_g(mean_02) + ", " + format_g(mean_05) + ", " +
                      format_g(mean_5) + "}, strictly decreasing required"};
}

std::pair<bool, std::string> bound_rate() {
    ClusterBatchSpec spec;
    spec.per_cell = 16;
    const double gamma = solve_gamma(1.0).gamma;
    if (std::abs(gamma - 0.25) > 1e-12) return {false, "solve_gamma(1) != 0.25"};
    const double alpha = verify::estimate_alpha(spec, 4242, 20);
    int ok = 0;
    for (int t = 0; t < 100; ++t) {
        const EmbeddingBatch b = verify::random_cluster_batch(spec, splitmix64(10000 + t));
        if (immd_bound_check(b, 0.5, LossKind::SupContrastive, alpha).satisfied_with_slack) ++ok;
    }
    return {ok >= 95, std::to_string(ok) + "/100 batches satisfy the bound (needs >= 95), alpha_hat = " +
                          format_g(alpha) + ", gamma = 0.25"};
}

std::pair<bool, std::string> generator_spectrum() {
    GeneratorConfig cfg;  // 256 x 256
    std::string detail;
    bool pass = true;
    for (double beta : {1.2, 1.6}) {
        std::vector<double> rings;
        const int r_min = 4, r_max = 32;
        for (int s = 0; s < 20; ++s) {
            const Patch p = sample_texture(cfg, beta, splitmix64(11000 + s + static_cast<int>(100 * beta)));
            const auto power = spectrum_ring_power(p.pixels, p.side, r_min, r_max);
            if (rings.empty()) rings.assign(power.size(), 0.0);
            for (std::size_t i = 0; i < power.size(); ++i) rings[i] += power[i];
        }
        const double slope = fit_loglog_slope(rings, r_min);
        const double rel = std::abs(slope - (-2.0 * beta)) / (2.0 * beta);
        if (rel >= 0.15) pass = false;
        if (!detail.empty()) detail += ", ";
        detail += "beta " + format_g(beta) + ": slope " + format_g(slope) + " vs " + format_g(-2.0 * beta);
    }
    return {pass, detail + " (tol 15%, 20 seeds each)"};
}

// ---- criteria 6, 7, 9: CLI-driven -------------------------------------------

void write_config(const fs::path& path, const std::string& strategy, const std::vector<double>& grid) {
    // lr raised from the 1e-3 default: that value suits a large convolutional
    // backbone, the perceptron here needs larger steps to traverse the full
    // training dynamics within 100 epochs
    nlohmann::json doc{
        {"generator", {{"seed", 20250801}}},
        {"dataset", {{"n_patches", 999}, {"mode", "mixed"}, {"split_seed", 31}}},
        {"train",
         {{"strategy", strategy},
          {"epochs", 100},
          {"batch_size", 30},
          {"seed", 7},
          {"pool_side", 16},
          {"base_lr", 0.6},
          {"analysis_per_cell", 64},
          {"temperature", {{"kind", "constant"}, {"start", 0.5}}}}},
        {"outputs", (g_work / "exp").string()},
    };
    if (!grid.empty()) doc["sweep"] = {{"tau_grid", grid}};
    std::ofstream out(path);
    out << doc.dump(2) << "\n";
}

std::pair<bool, std::string> determinism_and_dataset() {
    write_config(g_work / "cfg_lcp.json", "SupContrLCP", {});
    if (run_cli("generate --config " + (g_work / "cfg_lcp.json").string()) != 0)
        return {false, "generate failed (see cli.log)"};
    const fs::path dataset = g_work / "exp" / "dataset";
    const auto manifest_first = slurp(dataset / "manifest.json");
    const auto patch_first = slurp(dataset / "patches" / "123.png");

    if (run_cli("generate --config " + (g_work / "cfg_lcp.json").string()) != 0)
        return {false, "generate rerun failed"};
    if (slurp(dataset / "manifest.json") != manifest_first) return {false, "manifest differs across reruns"};
    if (slurp(dataset / "patches" / "123.png") != patch_first) return {false, "patch bytes differ across reruns"};

    if (run_cli("train --config " + (g_work / "cfg_lcp.json").string()) != 0)
        return {false, "train failed (see cli.log)"};
    const fs::path run = g_work / "exp" / "runs" / "SupContrLCP";
    const auto log_first = slurp(run / "log.csv");
    const auto ckpt_first = slurp(run / "checkpoint.bin");

    if (run_cli("train --config " + (g_work / "cfg_lcp.json").string()) != 0) return {false, "train rerun failed"};
    if (slurp(run / "log.csv") != log_first) return {false, "log.csv differs across reruns"};
    if (slurp(run / "checkpoint.bin") != ckpt_first) return {false, "checkpoint differs across reruns"};

    return {true, "generate and train reruns byte-identical (999-patch dataset, SupContrLCP run)"};
}

nlohmann::json load_metrics(const std::string& strategy) {
    std::ifstream in(g_work / "exp" / "runs" / strategy / "metrics.json");
    if (!in) throw std::runtime_error("missing metrics.json for " + strategy);
    return nlohmann::json::parse(in);
}

// discrepancies of the retained checkpoint, measured on the balanced
// analysis batch its training logged
std::pair<double, double> checkpoint_discrepancies(const std::string& strategy) {
    const auto metrics = load_metrics(strategy);
    const ExperimentLog log = ExperimentLog::load(g_work / "exp" / "runs" / strategy / "log.csv");
    const int best = metrics["best_epoch"].get<int>();
    const auto& row = log.rows.at(best);
    return {row.cmmd_sq, row.dcmmd_sq};
}

std::pair<bool, std::string> table_direction() {
    write_config(g_work / "cfg_ce.json", "CE", {});
    write_config(g_work / "cfg_supce.json", "SupContrCE", {});
    if (run_cli("train --config " + (g_work / "cfg_ce.json").string()) != 0) return {false, "CE train failed"};
    if (run_cli("train --config " + (g_work / "cfg_supce.json").string()) != 0)
        return {false, "SupContrCE train failed"};

    const auto [cmmd_ce, dcmmd_ce] = checkpoint_discrepancies("CE");
    const auto [cmmd_lcp, dcmmd_lcp] = checkpoint_discrepancies("SupContrLCP");
    const auto [cmmd_supce, dcmmd_supce] = checkpoint_discrepancies("SupContrCE");
    const double acc_lcp = load_metrics("SupContrLCP")["test"]["accuracy"].get<double>();
    const double test_cmmd_lcp = load_metrics("SupContrLCP")["test"]["cmmd_sq"].get<double>();
    const double test_cmmd_ce = load_metrics("CE")["test"]["cmmd_sq"].get<double>();

    const bool pass = cmmd_lcp < cmmd_ce && dcmmd_supce > dcmmd_ce && acc_lcp >= 0.90;
    return {pass, "checkpoint cmmd_sq lcp/ce = " + format_g(cmmd_lcp) + "/" + format_g(cmmd_ce) +
                      " (lcp < ce), dcmmd_sq supce/ce = " + format_g(dcmmd_supce) + "/" + format_g(dcmmd_ce) +
                      " (supce > ce), lcp test accuracy = " + format_g(acc_lcp) +
                      " (>= 0.90 required); test-side cmmd lcp/ce = " + format_g(test_cmmd_lcp) + "/" +
                      format_g(test_cmmd_ce)};
}

std::pair<bool, std::string> sweep_signs() {
    write_config(g_work / "cfg_sweep.json", "SupContrLCP", {0.05, 0.2, 0.5});
    if (run_cli("sweep-tau --config " + (g_work / "cfg_sweep.json").string() + " --jobs 2") != 0)
        return {false, "sweep failed (see cli.log)"};

    const CsvTable table = read_csv(g_work / "exp" / "sweep" / "correlation.csv", correlation_csv_header());
    std::map<double, std::vector<double>> rows;  // tau -> {cmmd, a, b, c}
    for (const auto& cells : table.rows)
        rows[std::stod(cells[0])] = {std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]),
                                     std::stod(cells[4])};
    if (!rows.count(0.5) || !rows.count(0.05)) return {false, "sweep grid lacks 0.05 / 0.5"};

    const auto& at_half = rows[0.5];
    const bool signs = at_half[0] > 0.0 && at_half[1] > 0.0 && at_half[2] < 0.0 && at_half[3] < 0.0;
    const bool plateau = std::abs(rows[0.05][1]) <= std::abs(rows[0.5][1]);
    const bool pass = signs && plateau;
    return {pass, "rho(cmmd,A,B,C) at 0.5 = {" + format_g(at_half[0]) + ", " + format_g(at_half[1]) + ", " +
                      format_g(at_half[2]) + ", " + format_g(at_half[3]) + "} (+,+,-,-), |rho_A| 0.05 -> 0.5: " +
                      format_g(std::abs(rows[0.05][1])) + " -> " + format_g(std::abs(rows[0.5][1])) +
                      " (non-decreasing)"};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: ctda_acceptance <path-to-ctda-cli>\n");
        return 2;
    }
    g_cli = argv[1];
    g_work = fs::temp_directory_path() / "ctda_acceptance";
    fs::remove_all(g_work);
    fs::create_directories(g_work);

    run_criterion(1, "loss oracles", loss_oracles);
    run_criterion(2, "gradient suite", gradient_suite);
    run_criterion(3, "estimator oracles", estimator_oracles);
    run_criterion(4, "residual shrinkage", residual_shrinkage);
    run_criterion(5, "loss lower bound", bound_rate);
    run_criterion(8, "generator spectrum", generator_spectrum);
    run_criterion(9, "determinism", determinism_and_dataset);
    run_criterion(7, "strategy comparison", table_direction);
    run_criterion(6, "sweep sign pattern", sweep_signs);

    if (g_failures == 0) {
        std::printf("all acceptance criteria passed\n");
        fs::remove_all(g_work);
        return 0;
    }
    std::printf("%d criterion(s) failed; artifacts kept in %s\n", g_failures, g_work.string().c_str());
    return 1;
}
