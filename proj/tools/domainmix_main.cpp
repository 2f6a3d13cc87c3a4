#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "domainmix/config.hpp"
#include "domainmix/eval.hpp"
#include "domainmix/experiment.hpp"
#include "domainmix/model.hpp"
#include "domainmix/synthgen.hpp"

namespace {

using namespace domainmix;

int cmd_run(const std::string& config_path, const std::string& preset, const std::string& seeds_csv,
            const std::string& out_dir) {
  cli::RunSpec spec = cli::load_run_spec(config_path);
  if (!preset.empty()) spec.preset = preset;
  if (!out_dir.empty()) spec.out_dir = out_dir;
  if (!seeds_csv.empty()) {
    spec.seeds.clear();
    std::stringstream ss(seeds_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) spec.seeds.push_back(std::stoull(item));
    }
    if (spec.seeds.empty()) throw std::invalid_argument("--seeds produced an empty list");
  }
  cli::apply_preset(spec, spec.preset);
  std::cout << "preset " << spec.preset << ", " << spec.seeds.size() << " seed(s), config "
            << cli::hash_hex(cli::config_hash(spec)) << "\n";
  cli::run_experiment(spec);
  const std::filesystem::path agg = std::filesystem::path(spec.out_dir) / spec.preset / "aggregate.json";
  std::cout << "wrote " << agg.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& benchmark_path, const std::string& report_path,
             const std::string& per_query_path) {
  const model::Checkpoint ckpt = model::load_checkpoint(checkpoint_path);
  const synth::Benchmark bench = synth::load_benchmark(benchmark_path);
  if (bench.query_c.empty() || bench.gallery_c.empty()) {
    throw std::runtime_error("benchmark has no query/gallery split for domain C");
  }
  if (bench.d_in != ckpt.params.enc.input_dim()) {
    throw std::runtime_error("checkpoint expects d_in=" + std::to_string(ckpt.params.enc.input_dim()) +
                             " but benchmark has d_in=" + std::to_string(bench.d_in));
  }
  const eval::EvalReport report = eval::evaluate(ckpt.params.enc, bench.query_c, bench.gallery_c);
  std::cout << "mAP " << report.map << "  rank-1 " << report.rank1() << "  (" << report.n_queries << " queries, "
            << report.n_gallery << " gallery)\n";
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw std::runtime_error("cannot write " + report_path);
    out << eval::report_to_json(report, ckpt.config_hash);
  }
  if (!per_query_path.empty()) {
    std::ofstream out(per_query_path);
    if (!out) throw std::runtime_error("cannot write " + per_query_path);
    eval::write_per_query_csv(out, report, ckpt.config_hash);
  }
  return 0;
}

int cmd_gen_benchmark(const std::string& spec_path, const std::string& out_path) {
  const cli::RunSpec spec = cli::load_run_spec(spec_path);
  const synth::Benchmark bench = synth::generate(spec.benchmark);
  synth::save_benchmark(out_path, bench);
  std::cout << "wrote " << out_path << " (" << bench.train_a.size() << " A, " << bench.train_b.size() << " B, "
            << bench.query_c.size() << " Cq, " << bench.gallery_c.size() << " Cg)\n";
  return 0;
}

int cmd_compare(const std::vector<std::string>& aggregates, const std::string& out_path, const std::string& format) {
  const std::vector<cli::CompareRow> rows = cli::compare_presets(aggregates);
  const std::string rendered = format == "csv" ? cli::render_csv(rows) : cli::render_markdown(rows);
  if (out_path.empty()) {
    std::cout << rendered;
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << rendered;
    std::cout << "wrote " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DomainMix training lab: dynamic pseudo-label datasets, adaptive classifier init, and "
               "adversarial domain-invariant training on a synthetic three-domain benchmark"};
  app.require_subcommand(1);

  std::string config_path, preset, seeds_csv, out_dir;
  auto* run = app.add_subcommand("run", "train one preset over a list of seeds and write artifacts");
  run->add_option("--config", config_path, "config file (flat key=value sections)");
  run->add_option("--preset", preset, "ablation preset name");
  run->add_option("--seeds", seeds_csv, "comma-separated seed list");
  run->add_option("--out", out_dir, "output directory");

  std::string checkpoint_path, benchmark_path, report_path, per_query_path;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a benchmark's domain C");
  ev->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  ev->add_option("--benchmark", benchmark_path, "benchmark CSV")->required();
  ev->add_option("--report", report_path, "write the JSON report here");
  ev->add_option("--per-query", per_query_path, "write per-query AP CSV here");

  std::string gen_spec_path, gen_out_path;
  auto* gen = app.add_subcommand("gen-benchmark", "generate a benchmark CSV from a config");
  gen->add_option("--spec", gen_spec_path, "config file with a [benchmark] section");
  gen->add_option("--out", gen_out_path, "output CSV path")->required();

  std::vector<std::string> aggregates;
  std::string compare_out, compare_format = "markdown";
  auto* cmp = app.add_subcommand("compare", "tabulate preset aggregates against the dbscan baseline");
  cmp->add_option("aggregates", aggregates, "aggregate.json files")->required();
  cmp->add_option("--out", compare_out, "write the table here instead of stdout");
  cmp->add_option("--format", compare_format, "markdown or csv")->check(CLI::IsMember({"markdown", "csv"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, preset, seeds_csv, out_dir);
    if (ev->parsed()) return cmd_eval(checkpoint_path, benchmark_path, report_path, per_query_path);
    if (gen->parsed()) return cmd_gen_benchmark(gen_spec_path, gen_out_path);
    if (cmp->parsed()) return cmd_compare(aggregates, compare_out, compare_format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
