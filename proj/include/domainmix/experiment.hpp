#pragma once

#include <string>
#include <vector>

#include "domainmix/config.hpp"
#include "domainmix/train.hpp"

namespace domainmix::cli {

struct SeedOutcome {
  uint64_t seed = 0;
  double map = 0.0;
  double rank1 = 0.0;
};

struct PresetSummary {
  std::string preset;
  uint64_t config_hash = 0;
  uint64_t benchmark_hash = 0;
  std::vector<SeedOutcome> outcomes;
  double median_map = 0.0;
  double median_rank1 = 0.0;
};

double median(std::vector<double> values);

// One training run for one seed of the spec (preset already applied).
// Fills bench_out with the benchmark it generated when non-null.
train::RunResult run_single(const RunSpec& spec, uint64_t run_seed, synth::Benchmark* bench_out = nullptr,
                            const train::RunHooks* hooks = nullptr);

// All seeds of one preset, in memory. Used by the CLI and the acceptance
// battery alike. When `results` is non-null it receives the per-seed runs.
PresetSummary run_preset_battery(RunSpec spec, std::vector<train::RunResult>* results = nullptr);

// Runs every seed, writing per-seed log.csv / report.json / checkpoint.bin
// plus aggregate.json under <out_dir>/<preset>/. A MANIFEST.json marks the
// directory incomplete until the last artifact landed.
void run_experiment(const RunSpec& spec);

struct CompareRow {
  std::string preset;
  double median_map = 0.0;
  double median_rank1 = 0.0;
  double delta_map = 0.0;
  double delta_rank1 = 0.0;
};

// Loads aggregate.json files, checks they share one benchmark hash, and
// tabulates medians with deltas against the "dbscan" baseline (which must
// be among the inputs).
std::vector<CompareRow> compare_presets(const std::vector<std::string>& aggregate_paths);
std::string render_markdown(const std::vector<CompareRow>& rows);
std::string render_csv(const std::vector<CompareRow>& rows);

}  // namespace domainmix::cli
