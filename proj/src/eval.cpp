#include "domainmix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "domainmix/util.hpp"
#include "json.hpp"

namespace domainmix::eval {

namespace {

void check_inputs(const Matrix& qf, const std::vector<int>& qid, const Matrix& gf, const std::vector<int>& gid) {
  if (qf.rows == 0 || gf.rows == 0) throw std::invalid_argument("evaluate: empty query or gallery");
  if (qf.cols != gf.cols) throw std::invalid_argument("evaluate: feature dimension mismatch");
  if (static_cast<int>(qid.size()) != qf.rows || static_cast<int>(gid.size()) != gf.rows) {
    throw std::invalid_argument("evaluate: id count mismatch");
  }
  for (const int q : qid) {
    if (std::find(gid.begin(), gid.end(), q) == gid.end()) {
      throw std::runtime_error("evaluate: query identity " + std::to_string(q) + " has no gallery match");
    }
  }
}

std::vector<int> ids_of(const std::vector<synth::Sample>& samples) {
  std::vector<int> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.ground_truth().has_value()) {
      throw std::runtime_error("evaluate: sample " + std::to_string(s.id()) + " carries no identity");
    }
    ids.push_back(*s.ground_truth());
  }
  return ids;
}

}  // namespace

EvalReport evaluate_features(const Matrix& qf, const std::vector<int>& qid, const Matrix& gf, const std::vector<int>& gid) {
  check_inputs(qf, qid, gf, gid);
  const int n_query = qf.rows;
  const int n_gallery = gf.rows;

  EvalReport report;
  report.n_queries = n_query;
  report.n_gallery = n_gallery;
  report.per_query_ap.assign(n_query, 0.0);
  std::vector<int> first_match_rank(n_query, 0);  // 1-based

  parallel_for(n_query, [&](int q) {
    std::vector<std::pair<double, int>> order(n_gallery);
    for (int g = 0; g < n_gallery; ++g) {
      order[g] = {std::sqrt(row_sq_distance(qf, q, gf, g)), g};
    }
    // ascending distance == descending similarity; index breaks ties
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    int n_rel = 0;
    for (const int id : gid) {
      if (id == qid[q]) ++n_rel;
    }
    double ap = 0.0;
    int hits = 0;
    for (int k = 0; k < n_gallery; ++k) {
      if (gid[order[k].second] == qid[q]) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(k + 1);
        if (hits == 1) first_match_rank[q] = k + 1;
      }
    }
    report.per_query_ap[q] = ap / static_cast<double>(n_rel);
  });

  report.map = std::accumulate(report.per_query_ap.begin(), report.per_query_ap.end(), 0.0) / n_query;
  report.cmc.assign(n_gallery, 0.0);
  for (const int r : first_match_rank) report.cmc[r - 1] += 1.0;
  double acc = 0.0;
  for (double& v : report.cmc) {
    acc += v;
    v = acc / n_query;
  }
  return report;
}

EvalReport evaluate(const model::EncoderParams& enc, const std::vector<synth::Sample>& query,
                    const std::vector<synth::Sample>& gallery) {
  if (query.empty() || gallery.empty()) throw std::invalid_argument("evaluate: empty query or gallery");
  const int d = static_cast<int>(query.front().input().size());
  auto featurize = [&](const std::vector<synth::Sample>& samples) {
    Matrix x(static_cast<int>(samples.size()), d);
    for (size_t i = 0; i < samples.size(); ++i) {
      std::copy(samples[i].input().begin(), samples[i].input().end(), x.data.begin() + static_cast<long>(i) * d);
    }
    return model::normalize_features(model::encode(enc, x));
  };
  return evaluate_features(featurize(query), ids_of(query), featurize(gallery), ids_of(gallery));
}

double map_bruteforce(const Matrix& qf, const std::vector<int>& qid, const Matrix& gf, const std::vector<int>& gid) {
  check_inputs(qf, qid, gf, gid);
  double sum_ap = 0.0;
  for (int q = 0; q < qf.rows; ++q) {
    std::vector<int> order(gf.rows);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double da = std::sqrt(row_sq_distance(qf, q, gf, a));
      const double db = std::sqrt(row_sq_distance(qf, q, gf, b));
      if (da != db) return da < db;
      return a < b;
    });
    // rank-form AP: mean over the j-th relevant item of j / rank_j
    std::vector<int> relevant_ranks;
    for (int k = 0; k < gf.rows; ++k) {
      if (gid[order[k]] == qid[q]) relevant_ranks.push_back(k + 1);
    }
    if (relevant_ranks.empty()) {
      throw std::runtime_error("map_bruteforce: query " + std::to_string(q) + " has no relevant gallery item");
    }
    double ap = 0.0;
    for (size_t j = 0; j < relevant_ranks.size(); ++j) {
      ap += static_cast<double>(j + 1) / static_cast<double>(relevant_ranks[j]);
    }
    sum_ap += ap / static_cast<double>(relevant_ranks.size());
  }
  return sum_ap / qf.rows;
}

std::string report_to_json(const EvalReport& report, uint64_t config_hash) {
  nlohmann::json j;
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx", static_cast<unsigned long long>(config_hash));
  j["config_hash"] = hash_hex;
  j["mAP"] = report.map;
  j["rank1"] = report.rank1();
  j["cmc"] = report.cmc;
  j["n_queries"] = report.n_queries;
  j["n_gallery"] = report.n_gallery;
  j["per_query_ap"] = report.per_query_ap;
  return j.dump(2);
}

void write_per_query_csv(std::ostream& out, const EvalReport& report, uint64_t config_hash) {
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx", static_cast<unsigned long long>(config_hash));
  out << "# config_hash=" << hash_hex << "\n";
  out << "query,ap\n";
  for (size_t i = 0; i < report.per_query_ap.size(); ++i) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%zu,%.10g\n", i, report.per_query_ap[i]);
    out << buf;
  }
}

}  // namespace domainmix::eval
