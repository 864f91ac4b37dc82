#pragma once

// Serial, unvectorized transcriptions of the kernels, written directly from
// the defining formulas. They share no code with the production paths in
// ctda_core (beyond data types) and exist to check them: the unit tests, the
// verify subcommand and the benchmark all compare against these.

#include <vector>

#include "ctda/kernels.hpp"
#include "ctda/mat.hpp"

namespace ctda::reference {

// k[i][j] = sum_c z[i][c] * z[j][c], all entries by double loop.
GramMatrix naive_gram(const Mat& z);

// -(1/|B|) sum_i log( e^{z_i . z_j(i) / tau} / sum_{l != i} e^{z_i . z_l / tau} )
double naive_nt_xent(const Mat& z, const std::vector<int>& pairing, double tau);

// -(1/|B|) sum_i (1/|P(i)|) sum_{j in P(i)} log( e^{z_i . z_j / tau} / sum_{l != i} e^{z_i . z_l / tau} )
double naive_sup_contrastive(const Mat& z, const std::vector<int>& labels, double tau);

// sum_c pi_c || mean_{c,0} - mean_{c,1} ||^2 with explicit loops.
double naive_cmmd_sq(const EmbeddingBatch& batch);

// Expansion of the squared class-conditional mean distances into kernel
// means: 2 E_C[E_00[k] + E_11[k]] - 4 E_C[E_pos,0.5[k]], pair means taken
// over all ordered pairs (diagonal included) so the identity is exact.
double naive_cmmd_sq_expectation_form(const EmbeddingBatch& batch);

// Brute-force enumeration over (c1 != c2, d1, d2) mean pairs.
double naive_dcmmd_sq(const EmbeddingBatch& batch);

// Brute-force enumeration over mixture class-mean pairs.
double naive_immd_sq(const EmbeddingBatch& batch);

// trace(K H L H) / (n-1)^2 materializing H and the two products.
double naive_hsic(const GramMatrix& k, const GramMatrix& l);

// 16x16-style block means by quadruple loop.
std::vector<double> naive_block_pool(const std::vector<double>& pixels, int side, int target_side);

// Pairwise AUC by O(n^2) comparison counting, ties at 0.5.
double paircount_auc(const std::vector<double>& scores, const std::vector<int>& is_positive);
double paircount_auc_ovo(const Mat& scores, const std::vector<int>& labels);
double paircount_auc_ovr(const Mat& scores, const std::vector<int>& labels);

// Lag-1 horizontal autocorrelation by double sum.
double naive_lag1_autocorrelation(const std::vector<double>& pixels, int side);

}  // namespace ctda::reference
