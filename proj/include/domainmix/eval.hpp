#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "domainmix/matrix.hpp"
#include "domainmix/model.hpp"
#include "domainmix/synthgen.hpp"

namespace domainmix::eval {

struct EvalReport {
  double map = 0.0;
  std::vector<double> cmc;  // rank-1..rank-G
  std::vector<double> per_query_ap;
  int n_queries = 0;
  int n_gallery = 0;

  double rank1() const { return cmc.empty() ? 0.0 : cmc.front(); }
};

// Single-query retrieval on given feature rows. Ranking uses negative
// Euclidean distance; exact distance ties go to the lower gallery index.
// Every query identity must appear in the gallery (protocol error
// otherwise). AP is sum_k precision@k * rel_k / n_relevant.
EvalReport evaluate_features(const Matrix& query_features, const std::vector<int>& query_ids,
                             const Matrix& gallery_features, const std::vector<int>& gallery_ids);

// Encodes with the given encoder, L2-normalizes, then ranks.
EvalReport evaluate(const model::EncoderParams& enc, const std::vector<synth::Sample>& query,
                    const std::vector<synth::Sample>& gallery);

// Independent brute-force mAP used to certify evaluate(): full pair sort
// plus the rank-form AP identity (1/R * sum_j j / rank_j). Must agree with
// evaluate_features() to 1e-12.
double map_bruteforce(const Matrix& query_features, const std::vector<int>& query_ids,
                      const Matrix& gallery_features, const std::vector<int>& gallery_ids);

std::string report_to_json(const EvalReport& report, uint64_t config_hash);
void write_per_query_csv(std::ostream& out, const EvalReport& report, uint64_t config_hash);

}  // namespace domainmix::eval
