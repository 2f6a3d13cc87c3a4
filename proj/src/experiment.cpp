#include "domainmix/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace domainmix::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad JSON in " + path + ": " + e.what());
  }
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

train::RunResult run_single(const RunSpec& spec, uint64_t run_seed, synth::Benchmark* bench_out,
                            const train::RunHooks* hooks) {
  synth::BenchmarkSpec bench_spec = spec.benchmark;
  bench_spec.seed = benchmark_seed_for_run(spec, run_seed);
  synth::Benchmark bench = synth::generate(bench_spec);

  train::TrainConfig cfg = spec.train_cfg;
  cfg.seed = run_seed;
  train::RunResult result = train::run(cfg, bench, hooks);
  if (bench_out != nullptr) *bench_out = std::move(bench);
  return result;
}

PresetSummary run_preset_battery(RunSpec spec, std::vector<train::RunResult>* results) {
  apply_preset(spec, spec.preset);
  PresetSummary summary;
  summary.preset = spec.preset;
  summary.config_hash = config_hash(spec);
  summary.benchmark_hash = benchmark_hash(spec);

  std::vector<double> maps, rank1s;
  for (const uint64_t seed : spec.seeds) {
    train::RunResult r = run_single(spec, seed);
    const train::EpochLog& last = r.logs.back();
    summary.outcomes.push_back({seed, last.map_c, last.rank1_c});
    maps.push_back(last.map_c);
    rank1s.push_back(last.rank1_c);
    if (results != nullptr) results->push_back(std::move(r));
  }
  summary.median_map = median(maps);
  summary.median_rank1 = median(rank1s);
  return summary;
}

void run_experiment(const RunSpec& raw_spec) {
  RunSpec spec = raw_spec;
  apply_preset(spec, spec.preset);
  spec.train_cfg.validate();
  spec.benchmark.validate();
  if (spec.seeds.empty()) throw std::invalid_argument("run_experiment: seed list is empty");

  const uint64_t cfg_hash = config_hash(spec);
  const uint64_t bench_hash = benchmark_hash(spec);
  const fs::path preset_dir = fs::path(spec.out_dir) / spec.preset;
  fs::create_directories(preset_dir);

  nlohmann::json manifest;
  manifest["status"] = "running";
  manifest["preset"] = spec.preset;
  manifest["config_hash"] = hash_hex(cfg_hash);
  manifest["benchmark_hash"] = hash_hex(bench_hash);
  manifest["seeds"] = spec.seeds;
  write_text(preset_dir / "MANIFEST.json", manifest.dump(2));

  PresetSummary summary;
  summary.preset = spec.preset;
  summary.config_hash = cfg_hash;
  summary.benchmark_hash = bench_hash;

  for (const uint64_t seed : spec.seeds) {
    synth::Benchmark bench;
    const train::RunResult result = run_single(spec, seed, &bench);

    const fs::path seed_dir = preset_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir);

    std::ofstream log(seed_dir / "log.csv");
    if (!log) throw std::runtime_error("cannot write " + (seed_dir / "log.csv").string());
    train::write_epoch_log_csv(log, result.logs, cfg_hash);
    log.close();

    write_text(seed_dir / "report.json", eval::report_to_json(result.reports.back(), cfg_hash));
    model::save_checkpoint((seed_dir / "checkpoint.bin").string(), result.params, spec.train_cfg.total_epochs - 1,
                           cfg_hash);

    const train::EpochLog& last = result.logs.back();
    summary.outcomes.push_back({seed, last.map_c, last.rank1_c});
  }

  std::vector<double> maps, rank1s;
  for (const auto& o : summary.outcomes) {
    maps.push_back(o.map);
    rank1s.push_back(o.rank1);
  }
  summary.median_map = median(maps);
  summary.median_rank1 = median(rank1s);

  nlohmann::json agg;
  agg["preset"] = summary.preset;
  agg["config_hash"] = hash_hex(summary.config_hash);
  agg["benchmark_hash"] = hash_hex(summary.benchmark_hash);
  agg["median_mAP"] = summary.median_map;
  agg["median_rank1"] = summary.median_rank1;
  nlohmann::json outcomes = nlohmann::json::array();
  for (const auto& o : summary.outcomes) {
    outcomes.push_back({{"seed", o.seed}, {"mAP", o.map}, {"rank1", o.rank1}});
  }
  agg["seeds"] = outcomes;
  write_text(preset_dir / "aggregate.json", agg.dump(2));

  manifest["status"] = "complete";
  write_text(preset_dir / "MANIFEST.json", manifest.dump(2));
}

std::vector<CompareRow> compare_presets(const std::vector<std::string>& aggregate_paths) {
  if (aggregate_paths.size() < 1) throw std::invalid_argument("compare_presets: no aggregates given");

  struct Loaded {
    std::string preset;
    std::string bench_hash;
    double map, rank1;
  };
  std::vector<Loaded> loaded;
  for (const std::string& path : aggregate_paths) {
    const nlohmann::json j = load_json(path);
    loaded.push_back({j.at("preset").get<std::string>(), j.at("benchmark_hash").get<std::string>(),
                      j.at("median_mAP").get<double>(), j.at("median_rank1").get<double>()});
  }
  for (const auto& l : loaded) {
    if (l.bench_hash != loaded.front().bench_hash) {
      throw std::runtime_error("compare_presets: benchmark hash mismatch between '" + loaded.front().preset +
                               "' and '" + l.preset + "'; runs are not comparable");
    }
  }

  const auto baseline = std::find_if(loaded.begin(), loaded.end(), [](const Loaded& l) { return l.preset == "dbscan"; });
  if (baseline == loaded.end()) {
    throw std::runtime_error("compare_presets: need a 'dbscan' baseline aggregate among the inputs");
  }

  std::vector<CompareRow> rows;
  for (const auto& l : loaded) {
    rows.push_back({l.preset, l.map, l.rank1, l.map - baseline->map, l.rank1 - baseline->rank1});
  }
  return rows;
}

std::string render_markdown(const std::vector<CompareRow>& rows) {
  std::string out = "| preset | median mAP | median rank-1 | d(mAP) | d(rank-1) |\n";
  out += "|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    out += "| " + r.preset + " | " + fmt(r.median_map) + " | " + fmt(r.median_rank1) + " | " + fmt(r.delta_map) +
           " | " + fmt(r.delta_rank1) + " |\n";
  }
  return out;
}

std::string render_csv(const std::vector<CompareRow>& rows) {
  std::string out = "preset,median_mAP,median_rank1,delta_mAP,delta_rank1\n";
  for (const auto& r : rows) {
    out += r.preset + "," + fmt(r.median_map) + "," + fmt(r.median_rank1) + "," + fmt(r.delta_map) + "," +
           fmt(r.delta_rank1) + "\n";
  }
  return out;
}

}  // namespace domainmix::cli
