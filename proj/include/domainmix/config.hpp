#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "domainmix/synthgen.hpp"
#include "domainmix/train.hpp"

namespace domainmix::cli {

struct RunSpec {
  synth::BenchmarkSpec benchmark;
  train::TrainConfig train_cfg;
  std::string preset = "domainmix_unlabeled";
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir = "out";
};

// Flat key/value config with [benchmark], [train], [loss], [cluster] and
// [run] sections. Every key has a default, so an empty file (or no file)
// runs the desk-scale defaults. Unknown sections or keys are errors.
RunSpec parse_run_spec(std::istream& in);
RunSpec load_run_spec(const std::string& path);  // empty path -> defaults

const std::vector<std::string>& preset_names();
// Overwrites the ablation switches for the named preset; throws
// std::invalid_argument for unknown names.
void apply_preset(RunSpec& spec, const std::string& name);

// Canonical text of every setting, in fixed order; the config hash is
// FNV-1a over it.
std::string canonical_config(const RunSpec& spec);
uint64_t config_hash(const RunSpec& spec);
// Hash of the benchmark settings plus the seed list: runs are comparable
// only when they saw identical benchmarks.
uint64_t benchmark_hash(const RunSpec& spec);

// Benchmark seed for one run: a deterministic mix of the benchmark seed
// and the run seed, so each seed trains on its own benchmark draw.
uint64_t benchmark_seed_for_run(const RunSpec& spec, uint64_t run_seed);

std::string hash_hex(uint64_t h);

}  // namespace domainmix::cli
