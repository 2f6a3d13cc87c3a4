#pragma once

#include <optional>
#include <vector>

#include "domainmix/tape.hpp"

namespace domainmix::losses {

struct LossConfig {
  double lambda_m = 1.0;  // weight of the domain balance loss
  double lambda_s = 1.0;  // weight of the identity loss
  double margin = 0.3;
  int n_domains = 2;
  // Offset keeping the balance loss nonnegative; ln(n)/n makes its minimum
  // exactly zero at the uniform row.
  double balance_constant = 0.34657359027997264;  // ln(2)/2
  bool triplet_on_normalized = false;

  void validate() const;
};

// Mean cross-entropy -1/B * sum log probs[i, d_i] on discriminator
// outputs. Rows must sum to 1; labels must be valid column indices.
GradTape::NodeId domain_classification_loss(GradTape& tape, GradTape::NodeId probs, const std::vector<int>& domain_labels);

// 1/B * sum_i sum_j (x_ij ln x_ij + a), with 0 ln 0 = 0. Nonnegative for
// a >= ln(n)/n, with minimum at uniform rows.
GradTape::NodeId domain_balance_loss(GradTape& tape, GradTape::NodeId probs, double a);

// Mean softmax cross-entropy over the full M-way head (fused log-softmax,
// stable at any logit magnitude).
GradTape::NodeId identity_loss(GradTape& tape, GradTape::NodeId logits, const std::vector<int>& labels);

// Batch-hard triplet: per anchor the same-label sample at max L2 distance
// and the different-label sample at min L2 distance, hinged at the margin.
// Distance ties pick the lowest index. Each anchor needs at least one
// positive and one negative or std::runtime_error is thrown.
GradTape::NodeId triplet_loss(GradTape& tape, GradTape::NodeId features, const std::vector<int>& labels, double margin);

// lambda_m*L_db + lambda_s*L_id + L_tri. l_db may be absent (weight
// applied to nothing), matching configurations that disable the balance
// term.
GradTape::NodeId combined_loss(GradTape& tape, std::optional<GradTape::NodeId> l_db, GradTape::NodeId l_id,
                               GradTape::NodeId l_tri, const LossConfig& cfg);

}  // namespace domainmix::losses
