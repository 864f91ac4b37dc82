#pragma once

#include <vector>

#include "ctda/kernels.hpp"
#include "ctda/mat.hpp"

namespace ctda {

enum class LossKind { NtXent, SupContrastive };

// Loss value plus the gradient with respect to the raw embedding rows. The
// unit-norm projection Jacobian is composed later by the trainer, so these
// gradients treat z as free variables.
struct LossResult {
    double value = 0.0;
    Mat grad_z;
};

// Paired contrastive loss. pairing must be an involution without fixed
// points (pairing[pairing[i]] == i, pairing[i] != i) and the batch size even.
LossResult nt_xent(const Mat& z, const std::vector<int>& pairing, double tau);
LossResult nt_xent(const EmbeddingBatch& batch, const std::vector<int>& pairing, double tau);

// Same-label positives. Every sample needs at least one other sample of its
// class; a singleton class is an error.
LossResult sup_contrastive(const Mat& z, const std::vector<int>& class_labels, double tau);
LossResult sup_contrastive(const EmbeddingBatch& batch, double tau);

// Mean softmax cross-entropy over rows of logits; grad is w.r.t. logits.
LossResult cross_entropy(const Mat& logits, const std::vector<int>& labels);

// Both sides of the rewriting of a contrastive loss as kernel expectations:
// lhs is the loss itself, rhs the expectation form
//   E_X[log E_{X' != X}[e^{k/tau}]] - (1/tau) E_pos[k] + log(|B|-1)
// with the positive-pair mean taken over pooled pairs. The two agree exactly
// for the paired loss and for class-balanced batches under same-label
// positives; the gap is reported, never an error.
struct ExpectationFormResult {
    double lhs = 0.0;
    double rhs = 0.0;
    double gap() const { return lhs - rhs; }
};

ExpectationFormResult empirical_expectation_form(const EmbeddingBatch& batch, double tau, LossKind kind,
                                                 const std::vector<int>* pairing = nullptr);

// Shared involution check.
void validate_pairing(const std::vector<int>& pairing, int n);

}  // namespace ctda
