#include "domainmix/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace domainmix::synth {

namespace {

constexpr double kAnchorScale = 3.0;

std::vector<double> random_unit_vector(int d, Rng& rng) {
  std::vector<double> v(d);
  double sq = 0.0;
  do {
    sq = 0.0;
    for (double& x : v) {
      x = rng.normal();
      sq += x * x;
    }
  } while (sq == 0.0);
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
  return v;
}

// Orthonormalizes the columns of (I + tau*G); tau=0 gives the identity,
// small tau a gentle rotation. Condition number is 1 by construction.
Matrix rotation_like(int d, double tau, Rng& rng) {
  Matrix m = Matrix::identity(d);
  for (double& v : m.data) v += tau * rng.normal();
  for (int j = 0; j < d; ++j) {
    for (int k = 0; k < j; ++k) {
      double dot = 0.0;
      for (int i = 0; i < d; ++i) dot += m(i, j) * m(i, k);
      for (int i = 0; i < d; ++i) m(i, j) -= dot * m(i, k);
    }
    double sq = 0.0;
    for (int i = 0; i < d; ++i) sq += m(i, j) * m(i, j);
    const double inv = 1.0 / std::sqrt(sq);
    for (int i = 0; i < d; ++i) m(i, j) *= inv;
  }
  return m;
}

// Fully random orthonormal matrix (Gram-Schmidt of a Gaussian draw).
Matrix random_rotation(int d, Rng& rng) {
  Matrix g(d, d);
  for (double& v : g.data) v = rng.normal();
  for (int j = 0; j < d; ++j) {
    for (int k = 0; k < j; ++k) {
      double dot = 0.0;
      for (int i = 0; i < d; ++i) dot += g(i, j) * g(i, k);
      for (int i = 0; i < d; ++i) g(i, j) -= dot * g(i, k);
    }
    double sq = 0.0;
    for (int i = 0; i < d; ++i) sq += g(i, j) * g(i, j);
    const double inv = 1.0 / std::sqrt(sq);
    for (int i = 0; i < d; ++i) g(i, j) *= inv;
  }
  return g;
}

DomainTransform draw_transform(const BenchmarkSpec& spec, Domain domain) {
  // Shared core: mixing rotation and the signal/nuisance gain profile.
  Rng shared = Rng(spec.seed).split("transform.shared");
  const Matrix mixing = random_rotation(spec.d_in, shared);
  Matrix core(spec.d_in, spec.d_in);
  for (int i = 0; i < spec.d_in; ++i) {
    const double gain = i < spec.signal_dims ? 1.0 : spec.scale_floor;
    for (int j = 0; j < spec.d_in; ++j) core(i, j) = gain * mixing(i, j);
  }
  // Per-domain frame perturbation and offset.
  Rng rng = Rng(spec.seed).split("transform").split(static_cast<uint64_t>(domain));
  DomainTransform t;
  t.scale = matmul(rotation_like(spec.d_in, spec.rotation_strength, rng), core);
  t.offset = random_unit_vector(spec.d_in, rng);
  for (double& x : t.offset) x *= spec.offset_norm;
  return t;
}

const DomainTransform& resolve_transform(const BenchmarkSpec& spec, Domain domain, DomainTransform& storage) {
  const std::optional<DomainTransform>* explicit_t = nullptr;
  switch (domain) {
    case Domain::SynthA: explicit_t = &spec.transform_a; break;
    case Domain::RealB: explicit_t = &spec.transform_b; break;
    case Domain::TargetC: explicit_t = &spec.transform_c; break;
  }
  if (explicit_t->has_value()) return **explicit_t;
  storage = draw_transform(spec, domain);
  return storage;
}

// Anchor of one identity: point on the radius-3 hypersphere, a pure
// function of (seed, identity).
std::vector<double> anchor_of(const BenchmarkSpec& spec, int identity) {
  Rng rng = Rng(spec.seed).split("anchor").split(static_cast<uint64_t>(identity));
  std::vector<double> a = random_unit_vector(spec.d_in, rng);
  for (double& x : a) x *= kAnchorScale;
  return a;
}

std::vector<double> transformed_anchor(const DomainTransform& t, const std::vector<double>& anchor) {
  const int d = static_cast<int>(anchor.size());
  if (t.scale.rows != d || t.scale.cols != d || static_cast<int>(t.offset.size()) != d) {
    throw std::invalid_argument("domain transform dimensions do not match d_in");
  }
  std::vector<double> out(d, 0.0);
  for (int i = 0; i < d; ++i) {
    double s = t.offset[i];
    for (int j = 0; j < d; ++j) s += t.scale(i, j) * anchor[j];
    out[i] = s;
  }
  return out;
}

void identity_range(const BenchmarkSpec& spec, Domain domain, int& first, int& count) {
  switch (domain) {
    case Domain::SynthA: first = 0; count = spec.ids_a; return;
    case Domain::RealB: first = spec.ids_a; count = spec.ids_b; return;
    case Domain::TargetC: first = spec.ids_a + spec.ids_b; count = spec.ids_c; return;
  }
  throw std::invalid_argument("unknown domain");
}

std::vector<Sample> draw_domain(const BenchmarkSpec& spec, Domain domain, int per_identity, Rng noise_rng, int64_t& next_id) {
  DomainTransform storage;
  const DomainTransform& t = resolve_transform(spec, domain, storage);
  int first = 0, count = 0;
  identity_range(spec, domain, first, count);
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(count) * per_identity);
  for (int i = 0; i < count; ++i) {
    const int identity = first + i;
    const std::vector<double> center = transformed_anchor(t, anchor_of(spec, identity));
    for (int k = 0; k < per_identity; ++k) {
      std::vector<double> x = center;
      for (double& v : x) v += spec.sigma * noise_rng.normal();
      out.emplace_back(next_id++, std::move(x), domain, identity);
    }
  }
  return out;
}

void format_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

const char* domain_name(Domain d) {
  switch (d) {
    case Domain::SynthA: return "A";
    case Domain::RealB: return "B";
    case Domain::TargetC: return "C";
  }
  return "?";
}

void BenchmarkSpec::validate() const {
  if (d_in < 1) throw std::invalid_argument("benchmark: d_in must be >= 1");
  if (ids_a < 1 || ids_b < 1 || ids_c < 1) throw std::invalid_argument("benchmark: identity counts must be >= 1");
  if (per_id_a < 1 || per_id_b < 1) throw std::invalid_argument("benchmark: samples per identity must be >= 1");
  if (sigma < 0.0) throw std::invalid_argument("benchmark: sigma must be >= 0");
  if (!(query_fraction > 0.0 && query_fraction < 1.0)) {
    throw std::invalid_argument("benchmark: query_fraction must be in (0,1)");
  }
  if (per_id_c < 2) {
    throw std::invalid_argument("benchmark: per_id_c must be >= 2 so every query identity has a gallery match");
  }
  if (offset_norm < 0.0) throw std::invalid_argument("benchmark: offset_norm must be >= 0");
  if (rotation_strength < 0.0) throw std::invalid_argument("benchmark: rotation_strength must be >= 0");
  if (signal_dims < 1 || signal_dims > d_in) throw std::invalid_argument("benchmark: signal_dims must be in [1, d_in]");
  if (!(scale_floor > 0.0 && scale_floor <= 1.0)) throw std::invalid_argument("benchmark: scale_floor must be in (0,1]");
}

Matrix Benchmark::inputs_of(const std::vector<Sample>& samples) const {
  Matrix m(static_cast<int>(samples.size()), d_in);
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& in = samples[i].input();
    if (static_cast<int>(in.size()) != d_in) throw std::invalid_argument("sample dimension mismatch");
    std::copy(in.begin(), in.end(), m.data.begin() + static_cast<long>(i) * d_in);
  }
  return m;
}

Benchmark generate(const BenchmarkSpec& spec) {
  spec.validate();
  Benchmark bench;
  bench.d_in = spec.d_in;
  Rng root(spec.seed);
  int64_t next_id = 0;
  bench.train_a = draw_domain(spec, Domain::SynthA, spec.per_id_a, root.split("noise.A"), next_id);
  bench.train_b = draw_domain(spec, Domain::RealB, spec.per_id_b, root.split("noise.B"), next_id);
  std::vector<Sample> all_c = draw_domain(spec, Domain::TargetC, spec.per_id_c, root.split("noise.C"), next_id);

  // Stratified per-identity query/gallery split: every query identity keeps
  // at least one gallery sample.
  int n_query = static_cast<int>(std::lround(spec.query_fraction * spec.per_id_c));
  n_query = std::clamp(n_query, 1, spec.per_id_c - 1);
  Rng split_rng = root.split("query_split");
  for (int i = 0; i < spec.ids_c; ++i) {
    std::vector<int> order(spec.per_id_c);
    std::iota(order.begin(), order.end(), 0);
    split_rng.shuffle(order);
    for (int k = 0; k < spec.per_id_c; ++k) {
      const Sample& s = all_c[static_cast<size_t>(i) * spec.per_id_c + order[k]];
      if (k < n_query) {
        bench.query_c.push_back(s);
      } else {
        bench.gallery_c.push_back(s);
      }
    }
  }
  return bench;
}

std::vector<Sample> sample_extra(const BenchmarkSpec& spec, Domain domain, int per_identity, uint64_t stream) {
  spec.validate();
  if (per_identity < 1) throw std::invalid_argument("sample_extra: per_identity must be >= 1");
  Rng noise = Rng(spec.seed).split("noise.extra").split(stream).split(static_cast<uint64_t>(domain));
  int64_t next_id = 1'000'000'000LL + static_cast<int64_t>(stream) * 1'000'000LL;
  return draw_domain(spec, domain, per_identity, noise, next_id);
}

double domain_gap_score(const std::vector<Sample>& a, const std::vector<Sample>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("domain_gap_score: empty sample set");
  const size_t d = a.front().input().size();
  auto mean_of = [d](const std::vector<Sample>& s) {
    std::vector<double> m(d, 0.0);
    for (const Sample& x : s) {
      if (x.input().size() != d) throw std::invalid_argument("domain_gap_score: dimension mismatch");
      for (size_t i = 0; i < d; ++i) m[i] += x.input()[i];
    }
    for (double& v : m) v /= static_cast<double>(s.size());
    return m;
  };
  const std::vector<double> ma = mean_of(a);
  const std::vector<double> mb = mean_of(b);
  double sq = 0.0;
  for (size_t i = 0; i < d; ++i) {
    const double diff = ma[i] - mb[i];
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

void write_benchmark_csv(std::ostream& out, const Benchmark& bench) {
  std::string line = "id,domain,identity";
  for (int j = 0; j < bench.d_in; ++j) line += ",feat_" + std::to_string(j);
  out << line << "\n";
  auto write_set = [&](const std::vector<Sample>& samples, const char* tag) {
    for (const Sample& s : samples) {
      line.clear();
      line += std::to_string(s.id());
      line += ',';
      line += tag;
      line += ',';
      if (s.ground_truth().has_value()) line += std::to_string(*s.ground_truth());
      for (const double v : s.input()) {
        line += ',';
        format_double(line, v);
      }
      out << line << "\n";
    }
  };
  write_set(bench.train_a, "A");
  write_set(bench.train_b, "B");
  write_set(bench.query_c, "Cq");
  write_set(bench.gallery_c, "Cg");
}

Benchmark read_benchmark_csv(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("benchmark csv: empty file");
  int d = 0;
  {
    std::stringstream ss(header);
    std::string col;
    int idx = 0;
    while (std::getline(ss, col, ',')) {
      if (idx >= 3) {
        if (col != "feat_" + std::to_string(idx - 3)) {
          throw std::runtime_error("benchmark csv: unexpected column '" + col + "'");
        }
        ++d;
      }
      ++idx;
    }
    if (idx < 4) throw std::runtime_error("benchmark csv: missing feature columns");
  }

  Benchmark bench;
  bench.d_in = d;
  std::string row;
  size_t line_no = 1;
  while (std::getline(in, row)) {
    ++line_no;
    if (row.empty()) continue;
    std::stringstream ss(row);
    std::string id_s, tag, identity_s;
    if (!std::getline(ss, id_s, ',') || !std::getline(ss, tag, ',') || !std::getline(ss, identity_s, ',')) {
      throw std::runtime_error("benchmark csv: malformed row at line " + std::to_string(line_no));
    }
    std::vector<double> feat(d);
    std::string cell;
    for (int j = 0; j < d; ++j) {
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error("benchmark csv: missing features at line " + std::to_string(line_no));
      }
      feat[j] = std::stod(cell);
    }
    std::optional<int> identity;
    if (!identity_s.empty()) identity = std::stoi(identity_s);
    const int64_t id = std::stoll(id_s);
    if (tag == "A") {
      bench.train_a.emplace_back(id, std::move(feat), Domain::SynthA, identity);
    } else if (tag == "B") {
      bench.train_b.emplace_back(id, std::move(feat), Domain::RealB, identity);
    } else if (tag == "Cq") {
      bench.query_c.emplace_back(id, std::move(feat), Domain::TargetC, identity);
    } else if (tag == "Cg") {
      bench.gallery_c.emplace_back(id, std::move(feat), Domain::TargetC, identity);
    } else {
      throw std::runtime_error("benchmark csv: unknown domain tag '" + tag + "' at line " + std::to_string(line_no));
    }
  }
  return bench;
}

void save_benchmark(const std::string& path, const Benchmark& bench) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  write_benchmark_csv(out, bench);
  if (!out) throw std::runtime_error("write failed: " + path);
}

Benchmark load_benchmark(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open benchmark: " + path);
  return read_benchmark_csv(in);
}

}  // namespace domainmix::synth
