#include "domainmix/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "domainmix/rng.hpp"

namespace domainmix::cli {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad integer list for " + key + ": '" + v + "'");
    }
  }
  return out;
}

std::vector<uint64_t> parse_u64_list(const std::string& v, const std::string& key) {
  std::vector<uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad seed list for " + key + ": '" + v + "'");
    }
  }
  return out;
}

// One settable key: a reader used while parsing and a printer used for the
// canonical (hashed) form.
struct KeyHandler {
  std::function<void(RunSpec&, const std::string&)> set;
  std::function<std::string(const RunSpec&)> get;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt_u64_list(const std::vector<uint64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

using HandlerMap = std::map<std::string, KeyHandler>;

#define INT_KEY(section, name, field)                                                                   \
  {section "." name,                                                                                    \
   {[](RunSpec& s, const std::string& v) {                                                              \
      try {                                                                                             \
        s.field = std::stoi(v);                                                                         \
      } catch (const std::exception&) {                                                                 \
        throw std::invalid_argument("config: bad integer for " section "." name ": '" + v + "'");      \
      }                                                                                                 \
    },                                                                                                  \
    [](const RunSpec& s) { return std::to_string(s.field); }}}

#define DOUBLE_KEY(section, name, field)                                                                \
  {section "." name,                                                                                    \
   {[](RunSpec& s, const std::string& v) {                                                              \
      try {                                                                                             \
        s.field = std::stod(v);                                                                         \
      } catch (const std::exception&) {                                                                 \
        throw std::invalid_argument("config: bad number for " section "." name ": '" + v + "'");       \
      }                                                                                                 \
    },                                                                                                  \
    [](const RunSpec& s) { return fmt_double(s.field); }}}

#define BOOL_KEY(section, name, field)                                                                  \
  {section "." name,                                                                                    \
   {[](RunSpec& s, const std::string& v) { s.field = parse_bool(v, section "." name); },                \
    [](const RunSpec& s) { return s.field ? std::string("true") : std::string("false"); }}}

const HandlerMap& handlers() {
  static const HandlerMap m = {
      {"benchmark.seed",
       {[](RunSpec& s, const std::string& v) { s.benchmark.seed = std::stoull(v); },
        [](const RunSpec& s) { return std::to_string(s.benchmark.seed); }}},
      INT_KEY("benchmark", "d_in", benchmark.d_in),
      INT_KEY("benchmark", "ids_a", benchmark.ids_a),
      INT_KEY("benchmark", "ids_b", benchmark.ids_b),
      INT_KEY("benchmark", "ids_c", benchmark.ids_c),
      INT_KEY("benchmark", "per_id_a", benchmark.per_id_a),
      INT_KEY("benchmark", "per_id_b", benchmark.per_id_b),
      INT_KEY("benchmark", "per_id_c", benchmark.per_id_c),
      DOUBLE_KEY("benchmark", "sigma", benchmark.sigma),
      DOUBLE_KEY("benchmark", "query_fraction", benchmark.query_fraction),
      DOUBLE_KEY("benchmark", "offset_norm", benchmark.offset_norm),
      DOUBLE_KEY("benchmark", "rotation_strength", benchmark.rotation_strength),
      INT_KEY("benchmark", "signal_dims", benchmark.signal_dims),
      DOUBLE_KEY("benchmark", "scale_floor", benchmark.scale_floor),

      INT_KEY("train", "total_epochs", train_cfg.total_epochs),
      INT_KEY("train", "warmup_epochs", train_cfg.warmup_epochs),
      INT_KEY("train", "iters_per_epoch", train_cfg.iters_per_epoch),
      INT_KEY("train", "disc_period", train_cfg.disc_period),
      INT_KEY("train", "batch_p", train_cfg.batch_p),
      INT_KEY("train", "batch_k", train_cfg.batch_k),
      DOUBLE_KEY("train", "lr0", train_cfg.lr0),
      {"train.lr_milestones",
       {[](RunSpec& s, const std::string& v) { s.train_cfg.lr_milestones = parse_int_list(v, "train.lr_milestones"); },
        [](const RunSpec& s) { return fmt_int_list(s.train_cfg.lr_milestones); }}},
      DOUBLE_KEY("train", "lr_decay", train_cfg.lr_decay),
      DOUBLE_KEY("train", "weight_decay", train_cfg.weight_decay),
      INT_KEY("train", "encoder_hidden", train_cfg.encoder_hidden),
      INT_KEY("train", "d_feat", train_cfg.d_feat),
      INT_KEY("train", "disc_hidden", train_cfg.disc_hidden),
      BOOL_KEY("train", "disc_on_normalized", train_cfg.disc_on_normalized),
      DOUBLE_KEY("train", "disc_input_gain", train_cfg.disc_input_gain),
      BOOL_KEY("train", "use_real_domain", train_cfg.use_real_domain),
      BOOL_KEY("train", "real_labels_ground_truth", train_cfg.real_labels_ground_truth),
      BOOL_KEY("train", "adaptive_init", train_cfg.adaptive_init),
      BOOL_KEY("train", "criteria_independence", train_cfg.criteria.independence),
      BOOL_KEY("train", "criteria_compactness", train_cfg.criteria.compactness),
      BOOL_KEY("train", "criteria_quantity", train_cfg.criteria.quantity),

      DOUBLE_KEY("loss", "lambda_m", train_cfg.loss.lambda_m),
      DOUBLE_KEY("loss", "lambda_s", train_cfg.loss.lambda_s),
      DOUBLE_KEY("loss", "margin", train_cfg.loss.margin),
      DOUBLE_KEY("loss", "balance_constant", train_cfg.loss.balance_constant),
      BOOL_KEY("loss", "triplet_on_normalized", train_cfg.loss.triplet_on_normalized),

      DOUBLE_KEY("cluster", "eps", train_cfg.dbscan.eps),
      INT_KEY("cluster", "min_samples", train_cfg.dbscan.min_samples),
      DOUBLE_KEY("cluster", "eps_loose", train_cfg.dbscan.eps_loose),
      DOUBLE_KEY("cluster", "eps_tight", train_cfg.dbscan.eps_tight),
      DOUBLE_KEY("cluster", "indep_threshold", train_cfg.dbscan.indep_threshold),
      DOUBLE_KEY("cluster", "comp_threshold", train_cfg.dbscan.comp_threshold),
      INT_KEY("cluster", "quantity_bound", train_cfg.dbscan.quantity_bound),

      {"run.preset",
       {[](RunSpec& s, const std::string& v) { s.preset = v; },
        [](const RunSpec& s) { return s.preset; }}},
      {"run.seeds",
       {[](RunSpec& s, const std::string& v) {
          s.seeds = parse_u64_list(v, "run.seeds");
          if (s.seeds.empty()) throw std::invalid_argument("config: run.seeds must not be empty");
        },
        [](const RunSpec& s) { return fmt_u64_list(s.seeds); }}},
      {"run.out_dir",
       {[](RunSpec& s, const std::string& v) { s.out_dir = v; },
        [](const RunSpec& s) { return s.out_dir; }}},
  };
  return m;
}

#undef INT_KEY
#undef DOUBLE_KEY
#undef BOOL_KEY

}  // namespace

RunSpec parse_run_spec(std::istream& in) {
  RunSpec spec;
  std::string line;
  std::string section;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw std::invalid_argument("config: malformed section at line " + std::to_string(line_no));
      section = trim(line.substr(1, line.size() - 2));
      if (section != "benchmark" && section != "train" && section != "loss" && section != "cluster" && section != "run") {
        throw std::invalid_argument("config: unknown section [" + section + "]");
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: expected key = value at line " + std::to_string(line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw std::invalid_argument("config: key '" + key + "' outside any section");
    const std::string full = section + "." + key;
    const auto it = handlers().find(full);
    if (it == handlers().end()) throw std::invalid_argument("config: unknown key '" + full + "'");
    it->second.set(spec, value);
  }
  return spec;
}

RunSpec load_run_spec(const std::string& path) {
  if (path.empty()) return RunSpec{};
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return parse_run_spec(in);
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {
      "dbscan",  "dbscan_ic", "dbscan_q",           "dbscan_icq",
      "no_aci",  "no_db",     "only_A",             "domainmix_labeled",
      "domainmix_unlabeled",
  };
  return names;
}

void apply_preset(RunSpec& spec, const std::string& name) {
  auto& t = spec.train_cfg;
  // Common baseline: full method switches, then per-preset overrides.
  t.use_real_domain = true;
  t.real_labels_ground_truth = false;
  t.adaptive_init = true;
  t.criteria = {true, true, true};

  if (name == "dbscan") {
    t.criteria = {false, false, false};
  } else if (name == "dbscan_ic") {
    t.criteria = {true, true, false};
  } else if (name == "dbscan_q") {
    t.criteria = {false, false, true};
  } else if (name == "dbscan_icq" || name == "domainmix_unlabeled") {
    t.criteria = {true, true, true};
  } else if (name == "no_aci") {
    t.adaptive_init = false;
  } else if (name == "no_db") {
    t.loss.lambda_m = 0.0;
  } else if (name == "only_A") {
    t.use_real_domain = false;
    t.loss.lambda_m = 0.0;
  } else if (name == "domainmix_labeled") {
    t.real_labels_ground_truth = true;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  spec.preset = name;
}

std::string canonical_config(const RunSpec& spec) {
  std::string out;
  for (const auto& [key, handler] : handlers()) {
    if (key == "run.out_dir") continue;  // where artifacts land is not part of the experiment
    out += key;
    out += '=';
    out += handler.get(spec);
    out += '\n';
  }
  return out;
}

uint64_t config_hash(const RunSpec& spec) { return Rng::fnv1a(canonical_config(spec)); }

uint64_t benchmark_hash(const RunSpec& spec) {
  std::string out;
  for (const auto& [key, handler] : handlers()) {
    if (key.rfind("benchmark.", 0) == 0 || key == "run.seeds") {
      out += key;
      out += '=';
      out += handler.get(spec);
      out += '\n';
    }
  }
  return Rng::fnv1a(out);
}

uint64_t benchmark_seed_for_run(const RunSpec& spec, uint64_t run_seed) {
  return Rng(spec.benchmark.seed).split("per-run-benchmark").split(run_seed).next_u64();
}

std::string hash_hex(uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace domainmix::cli
