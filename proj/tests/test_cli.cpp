#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "domainmix/config.hpp"
#include "domainmix/experiment.hpp"
#include "json.hpp"

using namespace domainmix;
using namespace domainmix::cli;

namespace fs = std::filesystem;

namespace {

RunSpec tiny_run_spec(const std::string& out_dir) {
  RunSpec spec;
  spec.benchmark.seed = 31;
  spec.benchmark.d_in = 6;
  spec.benchmark.ids_a = 4;
  spec.benchmark.ids_b = 4;
  spec.benchmark.ids_c = 4;
  spec.benchmark.per_id_a = 4;
  spec.benchmark.per_id_b = 4;
  spec.benchmark.per_id_c = 4;
  spec.train_cfg.total_epochs = 2;
  spec.train_cfg.warmup_epochs = 1;
  spec.train_cfg.iters_per_epoch = 4;
  spec.train_cfg.batch_p = 2;
  spec.train_cfg.batch_k = 2;
  spec.train_cfg.encoder_hidden = 8;
  spec.train_cfg.d_feat = 6;
  spec.train_cfg.disc_hidden = 6;
  spec.train_cfg.lr_milestones = {};
  spec.train_cfg.dbscan.eps = 0.7;
  spec.train_cfg.dbscan.min_samples = 2;
  spec.train_cfg.dbscan.quantity_bound = 2;
  spec.seeds = {1, 2};
  spec.out_dir = out_dir;
  return spec;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("empty input gives the desk-scale defaults") {
    std::stringstream empty("");
    const RunSpec spec = parse_run_spec(empty);
    CHECK(spec.benchmark.d_in == 16);
    CHECK(spec.benchmark.ids_a == 32);
    CHECK(spec.train_cfg.total_epochs == 12);
    CHECK(spec.train_cfg.warmup_epochs == 6);
    CHECK(spec.train_cfg.batch_p == 8);
    CHECK(spec.train_cfg.batch_k == 4);
    CHECK(spec.train_cfg.lr_milestones == std::vector<int>({8, 10}));
    CHECK(spec.train_cfg.weight_decay == 5e-4);
    CHECK(spec.train_cfg.loss.lambda_m == 1.0);
    CHECK(spec.train_cfg.loss.lambda_s == 1.0);
    CHECK(spec.train_cfg.loss.margin == 0.3);
    CHECK(spec.seeds.size() == 5);
  }
  SUBCASE("sections and keys are applied") {
    std::stringstream in(
        "# comment\n"
        "[benchmark]\n"
        "d_in = 8\n"
        "sigma = 0.2\n"
        "[train]\n"
        "total_epochs = 3\n"
        "lr_milestones = 1, 2\n"
        "criteria_quantity = false\n"
        "[loss]\n"
        "lambda_m = 0.5\n"
        "[cluster]\n"
        "eps = 0.4\n"
        "[run]\n"
        "seeds = 7, 8, 9\n"
        "preset = dbscan_q\n");
    const RunSpec spec = parse_run_spec(in);
    CHECK(spec.benchmark.d_in == 8);
    CHECK(spec.benchmark.sigma == 0.2);
    CHECK(spec.train_cfg.total_epochs == 3);
    CHECK(spec.train_cfg.lr_milestones == std::vector<int>({1, 2}));
    CHECK_FALSE(spec.train_cfg.criteria.quantity);
    CHECK(spec.train_cfg.loss.lambda_m == 0.5);
    CHECK(spec.train_cfg.dbscan.eps == 0.4);
    CHECK(spec.seeds == std::vector<uint64_t>({7, 8, 9}));
    CHECK(spec.preset == "dbscan_q");
  }
  SUBCASE("unknown keys and sections are rejected") {
    std::stringstream bad1("[train]\nnot_a_key = 3\n");
    CHECK_THROWS_AS(parse_run_spec(bad1), std::invalid_argument);
    std::stringstream bad2("[nope]\nx = 1\n");
    CHECK_THROWS_AS(parse_run_spec(bad2), std::invalid_argument);
    std::stringstream bad3("d_in = 8\n");  // key before any section
    CHECK_THROWS_AS(parse_run_spec(bad3), std::invalid_argument);
  }
}

TEST_CASE("presets set the documented switches") {
  RunSpec spec;
  apply_preset(spec, "dbscan");
  CHECK_FALSE(spec.train_cfg.criteria.independence);
  CHECK_FALSE(spec.train_cfg.criteria.compactness);
  CHECK_FALSE(spec.train_cfg.criteria.quantity);
  CHECK(spec.train_cfg.adaptive_init);

  apply_preset(spec, "dbscan_q");
  CHECK_FALSE(spec.train_cfg.criteria.independence);
  CHECK(spec.train_cfg.criteria.quantity);

  apply_preset(spec, "dbscan_ic");
  CHECK(spec.train_cfg.criteria.independence);
  CHECK(spec.train_cfg.criteria.compactness);
  CHECK_FALSE(spec.train_cfg.criteria.quantity);

  apply_preset(spec, "no_aci");
  CHECK_FALSE(spec.train_cfg.adaptive_init);
  CHECK(spec.train_cfg.criteria.quantity);

  apply_preset(spec, "no_db");
  CHECK(spec.train_cfg.loss.lambda_m == 0.0);
  CHECK(spec.train_cfg.adaptive_init);

  spec.train_cfg.loss.lambda_m = 1.0;
  apply_preset(spec, "only_A");
  CHECK_FALSE(spec.train_cfg.use_real_domain);
  CHECK(spec.train_cfg.loss.lambda_m == 0.0);

  spec.train_cfg.loss.lambda_m = 1.0;
  apply_preset(spec, "domainmix_labeled");
  CHECK(spec.train_cfg.real_labels_ground_truth);
  CHECK(spec.train_cfg.loss.lambda_m == 1.0);

  apply_preset(spec, "domainmix_unlabeled");
  CHECK(spec.train_cfg.criteria.independence);
  CHECK(spec.train_cfg.criteria.quantity);
  CHECK_FALSE(spec.train_cfg.real_labels_ground_truth);

  CHECK_THROWS_AS(apply_preset(spec, "bogus"), std::invalid_argument);
  CHECK(preset_names().size() == 9);
}

TEST_CASE("config hashes") {
  RunSpec a;
  RunSpec b;
  CHECK(config_hash(a) == config_hash(b));
  b.train_cfg.lr0 *= 2.0;
  CHECK(config_hash(a) != config_hash(b));
  // benchmark hash ignores training keys but tracks benchmark keys and seeds
  CHECK(benchmark_hash(a) == benchmark_hash(b));
  b.benchmark.sigma = 0.3;
  CHECK(benchmark_hash(a) != benchmark_hash(b));
  RunSpec c;
  c.seeds = {9};
  CHECK(benchmark_hash(a) != benchmark_hash(c));
}

TEST_CASE("run_experiment writes artifacts and is byte-deterministic") {
  TempDir dir1("domainmix_test_exp1");
  TempDir dir2("domainmix_test_exp2");
  RunSpec spec = tiny_run_spec(dir1.path.string());
  spec.preset = "dbscan";
  run_experiment(spec);

  const fs::path preset_dir = dir1.path / "dbscan";
  CHECK(fs::exists(preset_dir / "MANIFEST.json"));
  CHECK(fs::exists(preset_dir / "aggregate.json"));
  CHECK(fs::exists(preset_dir / "seed_1" / "log.csv"));
  CHECK(fs::exists(preset_dir / "seed_1" / "report.json"));
  CHECK(fs::exists(preset_dir / "seed_1" / "checkpoint.bin"));
  CHECK(fs::exists(preset_dir / "seed_2" / "log.csv"));

  const auto manifest = nlohmann::json::parse(slurp(preset_dir / "MANIFEST.json"));
  CHECK(manifest.at("status") == "complete");

  // the config hash is embedded in both the CSV and the JSON artifacts
  RunSpec hashed = spec;
  apply_preset(hashed, hashed.preset);
  const std::string expected_hash = hash_hex(config_hash(hashed));
  CHECK(slurp(preset_dir / "seed_1" / "log.csv").find(expected_hash) != std::string::npos);
  const auto report = nlohmann::json::parse(slurp(preset_dir / "seed_1" / "report.json"));
  CHECK(report.at("config_hash") == expected_hash);

  RunSpec again = tiny_run_spec(dir2.path.string());
  again.preset = "dbscan";
  run_experiment(again);
  CHECK(slurp(preset_dir / "seed_1" / "log.csv") == slurp(dir2.path / "dbscan" / "seed_1" / "log.csv"));
  CHECK(slurp(preset_dir / "seed_2" / "log.csv") == slurp(dir2.path / "dbscan" / "seed_2" / "log.csv"));
}

TEST_CASE("compare_presets") {
  TempDir dir("domainmix_test_cmp");
  auto write_aggregate = [&](const std::string& name, const std::string& bench_hash, double map) {
    nlohmann::json j;
    j["preset"] = name;
    j["config_hash"] = "00";
    j["benchmark_hash"] = bench_hash;
    j["median_mAP"] = map;
    j["median_rank1"] = map + 0.1;
    j["seeds"] = nlohmann::json::array();
    std::ofstream out(dir.path / (name + ".json"));
    out << j.dump();
  };
  write_aggregate("dbscan", "aaaa", 0.5);
  write_aggregate("dbscan_q", "aaaa", 0.6);

  SUBCASE("self comparison has zero deltas") {
    const auto rows = compare_presets({(dir.path / "dbscan.json").string()});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].delta_map == 0.0);
    CHECK(rows[0].delta_rank1 == 0.0);
  }
  SUBCASE("deltas are against the dbscan baseline") {
    const auto rows =
        compare_presets({(dir.path / "dbscan.json").string(), (dir.path / "dbscan_q.json").string()});
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].preset == "dbscan_q");
    CHECK(rows[1].delta_map == doctest::Approx(0.1));
    const std::string md = render_markdown(rows);
    CHECK(md.find("dbscan_q") != std::string::npos);
    const std::string csv = render_csv(rows);
    CHECK(csv.find("preset,median_mAP") != std::string::npos);
  }
  SUBCASE("benchmark hash mismatch is refused") {
    write_aggregate("no_db", "bbbb", 0.4);
    CHECK_THROWS_AS(
        compare_presets({(dir.path / "dbscan.json").string(), (dir.path / "no_db.json").string()}),
        std::runtime_error);
  }
  SUBCASE("a missing baseline is an error") {
    CHECK_THROWS_AS(compare_presets({(dir.path / "dbscan_q.json").string()}), std::runtime_error);
    CHECK_THROWS_AS(compare_presets({(dir.path / "missing.json").string()}), std::runtime_error);
  }
}

TEST_CASE("benchmark seeds differ per run seed but are reproducible") {
  const RunSpec spec;
  CHECK(benchmark_seed_for_run(spec, 1) == benchmark_seed_for_run(spec, 1));
  CHECK(benchmark_seed_for_run(spec, 1) != benchmark_seed_for_run(spec, 2));
}
