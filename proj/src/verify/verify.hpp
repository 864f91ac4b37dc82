#pragma once

// Self-contained property suite behind `ctda verify`, also reused by the
// unit and acceptance tests. Generates its own random batches and compares
// the production kernels against the serial reference transcriptions.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctda/analysis.hpp"
#include "ctda/kernels.hpp"
#include "ctda/losses.hpp"
#include "ctda/trainer.hpp"

namespace ctda::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;
    double tolerance = 0.0;
    std::string details;
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    bool all_pass() const;
};

VerifyReport run_all(std::uint64_t seed);
void write_report(const VerifyReport& report, const std::filesystem::path& path);

// ---- shared batch generators ----------------------------------------------

// Clustered unit-norm batch: one center per class, a shared domain offset,
// isotropic noise, rows normalized exactly. Balanced per (class, domain)
// cell.
struct ClusterBatchSpec {
    int n_classes = 2;
    int per_cell = 8;  // samples per (class, domain) cell
    int dim = 16;
    double class_separation = 2.0;
    double domain_offset = 0.4;
    double noise = 0.3;
};

EmbeddingBatch random_cluster_batch(const ClusterBatchSpec& spec, std::uint64_t seed);

// Uniformly random unit rows with cyclic class labels (>= 2 per class) and
// alternating domains.
EmbeddingBatch random_unit_batch(int n, int m, int n_classes, std::uint64_t seed);

// Random fixed-point-free involution on [0, n).
std::vector<int> random_pairing(int n, std::uint64_t seed);

// ---- finite-difference probes ----------------------------------------------

// Relative Frobenius error between the analytic loss gradient w.r.t. the
// embeddings and central differences at step h.
double loss_grad_fd_error(LossKind kind, const Mat& z, const std::vector<int>& labels,
                          const std::vector<int>& pairing, double tau, double h = 1e-5);

// Worst relative error across all parameter blocks of the end-to-end model
// (feature map (+ head for the cross-entropy path)) by full coordinate
// central differences.
double supcon_end_to_end_fd_error(const FeatureMap& fm, const Mat& inputs, const std::vector<int>& labels,
                                  double tau, double h = 1e-5);
double ce_end_to_end_fd_error(const FeatureMap& fm, const LinearHead& head, const Mat& inputs,
                              const std::vector<int>& labels, double h = 1e-5);

// Stored-residual consistency of a decomposition record.
bool residual_identity_ok(const DecompositionRecord& rec, double tol = 1e-12);

// Pilot estimate of the inter-class-discrepancy / label-dependence ratio.
double estimate_alpha(const ClusterBatchSpec& spec, std::uint64_t seed, int n_batches);

}  // namespace ctda::verify
