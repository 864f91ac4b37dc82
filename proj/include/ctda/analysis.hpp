#pragma once

#include <vector>

#include "ctda/discrepancy.hpp"
#include "ctda/kernels.hpp"
#include "ctda/losses.hpp"

namespace ctda {

// Term-by-term evaluation of the high-temperature expansion of a contrastive
// loss around kernel expectations:
//   tau * loss ~ cmmd/4 + A - B/2 + C/(2 tau) + tau * log(|B|-1).
// residual is stored as tau*loss minus that right-hand side, exactly.
struct DecompositionRecord {
    double tau = 0.0;
    double loss = 0.0;          // contrastive loss value at tau
    double cmmd_quarter = 0.0;  // CMMD^2 / 4
    double term_a = 0.0;        // all-pairs kernel mean, self-pairs excluded
    double term_b = 0.0;        // per-class sum of within-(class,domain) kernel means
    double term_c = 0.0;        // E_X[ Var_{X'}[ k(X,X') ] ], self-pairs excluded
    double const_term = 0.0;    // tau * log(|B|-1)
    double residual = 0.0;

    double rhs() const { return cmmd_quarter + term_a - term_b / 2.0 + term_c / (2.0 * tau) + const_term; }
};

// Requires equal counts in every (class, domain) cell. For the paired loss a
// pairing must be supplied.
DecompositionRecord decompose(const EmbeddingBatch& batch, double tau, LossKind kind,
                              const std::vector<int>* pairing = nullptr);

// gamma solving (1 + sqrt(1 - 4 gamma)) / (2 gamma) = max{2, 2 k_max},
// gamma in (0, 1/4], found by bisection to 1e-12.
struct GammaConstant {
    double k_max = 1.0;
    double gamma = 0.25;
};

GammaConstant solve_gamma(double k_max);

// Lower bound on the loss through the inter-class discrepancy:
//   -immd^2/alpha + gamma * hsic_xx <= loss  (up to a Var[k] allowance).
struct BoundCheckResult {
    double lhs = 0.0;
    double loss = 0.0;
    double slack = 0.0;           // loss - lhs
    double var_allowance = 0.0;   // Var over cross pairs of k
    double immd_sq = 0.0;
    double hsic_xx = 0.0;
    bool satisfied_with_slack = false;  // slack + var_allowance >= 0
};

BoundCheckResult immd_bound_check(const EmbeddingBatch& batch, double tau, LossKind kind, double alpha_hat,
                                  const std::vector<int>* pairing = nullptr);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Correlation between the first differences of a logged term series and the
// first differences of the tau-scaled loss series. Needs >= 3 steps and
// nonzero variance in both difference series.
double derivative_correlation(const std::vector<double>& term_series, const std::vector<double>& loss_series,
                              double tau);

}  // namespace ctda
