#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "domainmix/matrix.hpp"
#include "domainmix/rng.hpp"

namespace domainmix::synth {

enum class Domain : uint8_t { SynthA = 0, RealB = 1, TargetC = 2 };

const char* domain_name(Domain d);

// One data point. The identity of a RealB sample is ground truth for
// evaluation only; the training-facing accessor never exposes it.
class Sample {
 public:
  Sample(int64_t id, std::vector<double> input, Domain domain, std::optional<int> identity)
      : id_(id), input_(std::move(input)), domain_(domain), identity_(identity) {}

  int64_t id() const { return id_; }
  const std::vector<double>& input() const { return input_; }
  Domain domain() const { return domain_; }

  // Label visible to training: engaged for SynthA only.
  std::optional<int> train_label() const {
    return domain_ == Domain::SynthA ? identity_ : std::nullopt;
  }

  // Hidden ground truth, for evaluation and serialization.
  std::optional<int> ground_truth() const { return identity_; }

 private:
  int64_t id_;
  std::vector<double> input_;
  Domain domain_;
  std::optional<int> identity_;
};

// Affine change of frame applied to one domain's anchors: x -> scale*x + offset.
struct DomainTransform {
  Matrix scale;                 // d_in x d_in
  std::vector<double> offset;   // d_in
};

struct BenchmarkSpec {
  uint64_t seed = 42;
  int d_in = 16;
  int ids_a = 32, ids_b = 24, ids_c = 16;
  int per_id_a = 8, per_id_b = 8, per_id_c = 8;
  double sigma = 0.3;
  double query_fraction = 0.25;
  // Knobs for the transforms drawn from the seed when no explicit
  // transform is given. The drawn scale is R_d * D * R0: a shared random
  // mixing R0, a shared diagonal D that keeps signal_dims directions at
  // gain 1 and damps the rest to scale_floor, and a per-domain rotation
  // R_d of the given strength. Identity information thus concentrates in
  // a subspace that is approximately common to all three domains, while
  // the damped directions carry mostly noise.
  double offset_norm = 2.0;
  double rotation_strength = 0.3;
  int signal_dims = 6;
  double scale_floor = 0.1;
  std::optional<DomainTransform> transform_a, transform_b, transform_c;

  // Throws std::invalid_argument on violated constraints.
  void validate() const;
};

struct Benchmark {
  int d_in = 0;
  std::vector<Sample> train_a, train_b, query_c, gallery_c;

  Matrix inputs_of(const std::vector<Sample>& samples) const;
};

// Deterministic function of the spec. Identity ranges: A gets 0..ids_a-1,
// B gets ids_a..ids_a+ids_b-1, C the rest. Every query identity in C has at
// least one gallery sample.
Benchmark generate(const BenchmarkSpec& spec);

// Fresh samples from one domain (same anchors and transform as generate(),
// independent noise stream). Used for held-out diagnostics.
std::vector<Sample> sample_extra(const BenchmarkSpec& spec, Domain domain, int per_identity, uint64_t stream);

// Euclidean distance between the per-set mean input vectors.
double domain_gap_score(const std::vector<Sample>& a, const std::vector<Sample>& b);

// CSV with columns id,domain,identity,feat_0..feat_{D-1}. Domain tags are
// A, B, Cq (query) and Cg (gallery); identity is empty where absent.
// Reals are written with 17 significant digits so round-trips are lossless.
void write_benchmark_csv(std::ostream& out, const Benchmark& bench);
Benchmark read_benchmark_csv(std::istream& in);
void save_benchmark(const std::string& path, const Benchmark& bench);
Benchmark load_benchmark(const std::string& path);

}  // namespace domainmix::synth
