#pragma once

#include <functional>
#include <vector>

#include "ctda/kernels.hpp"

namespace ctda {

enum class PriorWeighting { Empirical, Uniform };

// Plug-in mean-embedding estimators over a labeled, domain-tagged batch.
// Every (class, domain) cell an estimator touches must be nonempty; an empty
// cell is a hard error rather than a silent NaN.

// sum_c pi(c) * || mean_{c, domain 0} - mean_{c, domain 1} ||^2
double cmmd_sq(const EmbeddingBatch& batch, PriorWeighting weighting = PriorWeighting::Empirical);

// Average over ordered class pairs c1 != c2, weighted by
// pi(c1) pi(c2) / (1 - sum_c pi(c)^2), uniform over the four domain
// combinations, of || mean_{d2, c1} - mean_{d1, c2} ||^2.
double dcmmd_sq(const EmbeddingBatch& batch, PriorWeighting weighting = PriorWeighting::Empirical);

// Class pairs drawn independently from the mixture class priors (pooled
// domains); the diagonal contributes zero.
double immd_sq(const EmbeddingBatch& batch, PriorWeighting weighting = PriorWeighting::Empirical);

// Biased V-statistic estimator trace(K H L H) / (n-1)^2 with the centering
// matrix H = I - ones/n.
double hsic(const GramMatrix& k, const GramMatrix& l);

struct MixtureExpectationResult {
    double lhs = 0.0;  // pair mean of g over the pooled batch
    double rhs = 0.0;  // p^2 / 2p(1-p) / (1-p)^2 split at p = n1/n
};

// Checks the mixture-of-domains decomposition of a symmetric pair statistic.
// Pair means include the diagonal on both sides so the split is an exact
// identity at p = n1/n.
MixtureExpectationResult mixture_expectation_check(const EmbeddingBatch& batch,
                                                   const std::function<double(int, int)>& g);

struct DiscrepancyReport {
    double cmmd_sq = 0.0;
    double dcmmd_sq = 0.0;
    double immd_sq = 0.0;
    double hsic_xy = 0.0;  // against the supervised label kernel (delta_l = K, l0 = 0)
    double hsic_xx = 0.0;
    std::vector<double> class_priors;
    double mixture_p = 0.5;
};

DiscrepancyReport compute_report(const EmbeddingBatch& batch);

// Mean embedding of a (class, domain) cell; domain -1 pools both domains.
// Exposed for the analysis module and the estimators' shared core.
std::vector<double> cell_mean(const EmbeddingBatch& batch, int cls, int domain);
std::vector<double> class_priors(const EmbeddingBatch& batch, PriorWeighting weighting);

}  // namespace ctda
