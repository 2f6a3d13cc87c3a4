#include "domainmix/cluster.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <stdexcept>

#include "domainmix/util.hpp"
#include "json.hpp"

namespace domainmix::cluster {

namespace {

std::vector<std::vector<int>> neighbor_lists(const Matrix& features, double eps) {
  const int n = features.rows;
  const double eps_sq = eps * eps;
  std::vector<std::vector<int>> neighbors(n);
  parallel_for(n, [&](int i) {
    for (int j = 0; j < n; ++j) {
      if (row_sq_distance(features, i, features, j) <= eps_sq) neighbors[i].push_back(j);
    }
  });
  return neighbors;
}

std::vector<int> members_of(const ClusterAssignment& a, int cluster_id) {
  std::vector<int> out;
  for (size_t i = 0; i < a.labels.size(); ++i) {
    if (a.labels[i] == cluster_id) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace

void DbscanParams::validate() const {
  if (eps <= 0.0) throw std::invalid_argument("dbscan: eps must be > 0");
  if (min_samples < 1) throw std::invalid_argument("dbscan: min_samples must be >= 1");
  if (!(tight() < eps && eps < loose())) {
    throw std::invalid_argument("dbscan: need eps_tight < eps < eps_loose");
  }
  if (indep_threshold < 0.0 || indep_threshold > 1.0) {
    throw std::invalid_argument("dbscan: indep_threshold must be in [0,1]");
  }
  if (comp_threshold < 0.0 || comp_threshold > 1.0) {
    throw std::invalid_argument("dbscan: comp_threshold must be in [0,1]");
  }
  if (quantity_bound < 1) throw std::invalid_argument("dbscan: quantity_bound must be >= 1");
}

ClusterAssignment dbscan(const Matrix& features, double eps, int min_samples) {
  if (features.rows == 0) throw std::invalid_argument("dbscan: empty input");
  if (eps <= 0.0 || min_samples < 1) throw std::invalid_argument("dbscan: bad parameters");
  const int n = features.rows;
  const auto neighbors = neighbor_lists(features, eps);

  std::vector<bool> core(n);
  for (int i = 0; i < n; ++i) core[i] = static_cast<int>(neighbors[i].size()) >= min_samples;

  ClusterAssignment out;
  out.labels.assign(n, -1);
  // Grow one cluster at a time, seeds in scan order, so a border point in
  // reach of two clusters always lands in the earlier one.
  for (int seed = 0; seed < n; ++seed) {
    if (!core[seed] || out.labels[seed] != -1) continue;
    const int cid = out.cluster_count++;
    out.labels[seed] = cid;
    std::deque<int> frontier{seed};
    while (!frontier.empty()) {
      const int p = frontier.front();
      frontier.pop_front();
      for (const int q : neighbors[p]) {
        if (out.labels[q] != -1) continue;
        out.labels[q] = cid;
        if (core[q]) frontier.push_back(q);
      }
    }
  }
  out.sizes.assign(out.cluster_count, 0);
  for (const int l : out.labels) {
    if (l >= 0) ++out.sizes[l];
  }
  return out;
}

std::set<int> independence_keep(const Matrix& features, const ClusterAssignment& assignment, const DbscanParams& params) {
  params.validate();
  std::set<int> kept;
  if (assignment.cluster_count == 0) return kept;
  const ClusterAssignment loose = dbscan(features, params.loose(), params.min_samples);

  // Loose cluster sizes, treating loose-noise points as singleton hosts
  // keyed by -(index+2) so they cannot collide with cluster ids.
  auto host_of = [&](int point) { return loose.labels[point] >= 0 ? loose.labels[point] : -(point + 2); };
  for (int c = 0; c < assignment.cluster_count; ++c) {
    const std::vector<int> members = members_of(assignment, c);
    std::map<int, int> votes;
    for (const int p : members) ++votes[host_of(p)];
    int best_host = 0, best_votes = -1;
    for (const auto& [host, v] : votes) {
      if (v > best_votes) {
        best_host = host;
        best_votes = v;
      }
    }
    int host_size = 1;
    if (best_host >= 0) {
      host_size = 0;
      for (size_t p = 0; p < loose.labels.size(); ++p) {
        if (loose.labels[p] == best_host) ++host_size;
      }
    }
    const double ratio = static_cast<double>(members.size()) / static_cast<double>(host_size);
    if (ratio >= params.indep_threshold) kept.insert(c);
  }
  return kept;
}

std::set<int> compactness_keep(const Matrix& features, const ClusterAssignment& assignment, const DbscanParams& params) {
  params.validate();
  std::set<int> kept;
  if (assignment.cluster_count == 0) return kept;
  const ClusterAssignment tight = dbscan(features, params.tight(), params.min_samples);

  for (int c = 0; c < assignment.cluster_count; ++c) {
    const std::vector<int> members = members_of(assignment, c);
    std::map<int, int> tight_counts;  // tight cluster id -> members inside C_c
    for (const int p : members) {
      if (tight.labels[p] >= 0) ++tight_counts[tight.labels[p]];
    }
    int largest = 0;
    for (const auto& [id, count] : tight_counts) largest = std::max(largest, count);
    const double ratio = static_cast<double>(largest) / static_cast<double>(members.size());
    if (ratio >= params.comp_threshold) kept.insert(c);
  }
  return kept;
}

std::set<int> quantity_keep(const ClusterAssignment& assignment, int bound) {
  if (bound < 1) throw std::invalid_argument("quantity_keep: bound must be >= 1");
  std::set<int> kept;
  for (int c = 0; c < assignment.cluster_count; ++c) {
    if (assignment.sizes[c] >= bound) kept.insert(c);
  }
  return kept;
}

Selection select_reliable(const Matrix& features, const DbscanParams& params, const CriteriaFlags& flags) {
  params.validate();
  Selection sel;
  sel.base = dbscan(features, params.eps, params.min_samples);

  std::set<int> all;
  for (int c = 0; c < sel.base.cluster_count; ++c) all.insert(c);
  sel.kept_independence = flags.independence ? independence_keep(features, sel.base, params) : all;
  sel.kept_compactness = flags.compactness ? compactness_keep(features, sel.base, params) : all;
  sel.kept_quantity = flags.quantity ? quantity_keep(sel.base, params.quantity_bound) : all;

  for (const int c : all) {
    if (sel.kept_independence.count(c) && sel.kept_compactness.count(c) && sel.kept_quantity.count(c)) {
      sel.kept.insert(c);
    }
  }

  std::vector<int> remap(sel.base.cluster_count, -1);
  for (const int c : sel.kept) remap[c] = sel.kept_count++;
  sel.pseudo_label.assign(sel.base.labels.size(), -1);
  for (size_t i = 0; i < sel.base.labels.size(); ++i) {
    const int l = sel.base.labels[i];
    if (l >= 0) sel.pseudo_label[i] = remap[l];
  }
  return sel;
}

std::string to_debug_json(const Selection& sel, int epoch) {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["M"] = sel.base.cluster_count;
  j["M_prime"] = sel.kept_count;
  j["sizes"] = sel.base.sizes;
  j["kept_ids_per_criterion"] = {
      {"independence", std::vector<int>(sel.kept_independence.begin(), sel.kept_independence.end())},
      {"compactness", std::vector<int>(sel.kept_compactness.begin(), sel.kept_compactness.end())},
      {"quantity", std::vector<int>(sel.kept_quantity.begin(), sel.kept_quantity.end())},
      {"all", std::vector<int>(sel.kept.begin(), sel.kept.end())},
  };
  return j.dump();
}

}  // namespace domainmix::cluster
