#pragma once

#include <set>
#include <string>
#include <vector>

#include "domainmix/matrix.hpp"

namespace domainmix::cluster {

struct DbscanParams {
  double eps = 0.35;
  int min_samples = 2;
  // Perturbed radii for the stability criteria; <= 0 means "derive from
  // eps" (1.02*eps and 0.98*eps).
  double eps_loose = 0.0;
  double eps_tight = 0.0;
  double indep_threshold = 0.9;
  double comp_threshold = 0.9;
  int quantity_bound = 4;

  double loose() const { return eps_loose > 0.0 ? eps_loose : 1.02 * eps; }
  double tight() const { return eps_tight > 0.0 ? eps_tight : 0.98 * eps; }
  void validate() const;
};

struct CriteriaFlags {
  bool independence = true;
  bool compactness = true;
  bool quantity = true;
};

// labels[i] in {-1} U {0..cluster_count-1}; -1 is noise. Cluster ids are
// contiguous in first-discovery order, so results are reproducible.
struct ClusterAssignment {
  std::vector<int> labels;
  int cluster_count = 0;
  std::vector<int> sizes;
};

// Standard DBSCAN over the rows of `features` with Euclidean distance.
// A point is core iff its closed eps-ball (itself included) holds at least
// min_samples points. Border points join the first core cluster that
// reaches them in scan order.
ClusterAssignment dbscan(const Matrix& features, double eps, int min_samples);

// Stability under growing eps: cluster i survives iff
// |C_i| / |host(C_i at loose eps)| >= indep_threshold, where the host is
// the loose cluster holding the majority of C_i (loose-noise points count
// as singleton hosts).
std::set<int> independence_keep(const Matrix& features, const ClusterAssignment& assignment, const DbscanParams& params);

// Stability under shrinking eps: cluster i survives iff the largest tight
// sub-cluster inside C_i covers at least comp_threshold of |C_i|.
std::set<int> compactness_keep(const Matrix& features, const ClusterAssignment& assignment, const DbscanParams& params);

// Size filter: keep clusters with at least `bound` members.
std::set<int> quantity_keep(const ClusterAssignment& assignment, int bound);

struct Selection {
  ClusterAssignment base;
  // Per-point pseudo label in 0..kept_count-1, or -1 for noise and
  // rejected clusters.
  std::vector<int> pseudo_label;
  int kept_count = 0;
  std::set<int> kept_independence, kept_compactness, kept_quantity, kept;
};

// Runs dbscan at params.eps and intersects the kept-sets of the enabled
// criteria; survivors are re-indexed contiguously in base-cluster order.
Selection select_reliable(const Matrix& features, const DbscanParams& params, const CriteriaFlags& flags);

// JSON debug record: {epoch, M, M_prime, sizes, kept_ids_per_criterion}.
std::string to_debug_json(const Selection& sel, int epoch);

}  // namespace domainmix::cluster
