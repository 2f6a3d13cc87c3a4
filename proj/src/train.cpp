#include "domainmix/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace domainmix::train {

namespace {

Matrix random_uniform_matrix(int rows, int cols, double limit, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform(-limit, limit);
  return m;
}

std::vector<std::vector<int>> rows_per_class(const std::vector<int>& labels, int n_classes) {
  std::vector<std::vector<int>> out(n_classes);
  for (size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(static_cast<int>(i));
  return out;
}

void warn_once(const std::string& message) {
  static std::map<std::string, bool> seen;
  if (!seen[message]) {
    seen[message] = true;
    std::cerr << "[domainmix] warning: " << message << "\n";
  }
}

struct BatchView {
  Matrix inputs;
  std::vector<int> labels;
  std::vector<int> domains;
};

BatchView gather_batch(const EpochDataset& ds, const std::vector<int>& batch) {
  BatchView view;
  view.inputs = gather_rows(ds.inputs, batch);
  view.labels.reserve(batch.size());
  view.domains.reserve(batch.size());
  for (const int row : batch) {
    view.labels.push_back(ds.labels[row]);
    view.domains.push_back(ds.domain_labels[row]);
  }
  return view;
}

}  // namespace

void TrainConfig::validate() const {
  if (total_epochs < 1) throw std::invalid_argument("train: total_epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs > total_epochs) {
    throw std::invalid_argument("train: warmup_epochs must be in [0, total_epochs]");
  }
  if (iters_per_epoch < 1) throw std::invalid_argument("train: iters_per_epoch must be >= 1");
  if (disc_period < 2) throw std::invalid_argument("train: disc_period must be >= 2");
  if (batch_p < 2 || batch_k < 2) {
    throw std::invalid_argument("train: need P >= 2 and K >= 2 so every anchor has positives and negatives");
  }
  if (lr0 <= 0.0) throw std::invalid_argument("train: lr0 must be > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("train: lr_decay must be in (0,1]");
  if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (encoder_hidden < 1 || d_feat < 1 || disc_hidden < 1) throw std::invalid_argument("train: bad layer sizes");
  if (disc_input_gain <= 0.0) throw std::invalid_argument("train: disc_input_gain must be > 0");
  if (!std::is_sorted(lr_milestones.begin(), lr_milestones.end())) {
    throw std::invalid_argument("train: lr_milestones must be sorted");
  }
  loss.validate();
  dbscan.validate();
}

double lr_at(const TrainConfig& cfg, int epoch) {
  int decays = 0;
  for (const int m : cfg.lr_milestones) {
    if (m <= epoch) ++decays;
  }
  return cfg.lr0 * std::pow(cfg.lr_decay, decays);
}

EpochDataset build_epoch_dataset(const model::EncoderParams& enc, const synth::Benchmark& bench, const TrainConfig& cfg) {
  if (bench.train_a.empty()) throw std::invalid_argument("build_epoch_dataset: no synthetic training data");

  // Synthetic classes come first and keep their labels 0..N-1.
  int n_synth = 0;
  for (const auto& s : bench.train_a) {
    const auto label = s.train_label();
    if (!label.has_value()) throw std::invalid_argument("build_epoch_dataset: unlabeled synthetic sample");
    n_synth = std::max(n_synth, *label + 1);
  }

  std::vector<const synth::Sample*> chosen;
  std::vector<int> labels;
  for (const auto& s : bench.train_a) {
    chosen.push_back(&s);
    labels.push_back(*s.train_label());
  }

  EpochDataset ds;
  ds.n_synth_classes = n_synth;

  if (cfg.use_real_domain && !bench.train_b.empty()) {
    const Matrix xb = bench.inputs_of(bench.train_b);
    ds.features_b_normalized = model::normalize_features(model::encode(enc, xb));

    if (cfg.real_labels_ground_truth) {
      // The fully-labeled ablation: ground-truth identities of B stand in
      // for pseudo-labels and clustering is bypassed.
      std::map<int, int> remap;
      for (const auto& s : bench.train_b) {
        if (!s.ground_truth().has_value()) {
          throw std::invalid_argument("build_epoch_dataset: labeled-real mode needs identities for domain B");
        }
        remap.emplace(*s.ground_truth(), 0);
      }
      int next = 0;
      for (auto& [id, idx] : remap) idx = next++;
      ds.cluster_members.assign(remap.size(), {});
      for (size_t i = 0; i < bench.train_b.size(); ++i) {
        const int cls = remap.at(*bench.train_b[i].ground_truth());
        ds.cluster_members[cls].push_back(static_cast<int>(i));
        chosen.push_back(&bench.train_b[i]);
        labels.push_back(n_synth + cls);
      }
    } else {
      cluster::Selection sel = cluster::select_reliable(ds.features_b_normalized, cfg.dbscan, cfg.criteria);
      ds.cluster_members.assign(sel.kept_count, {});
      for (size_t i = 0; i < bench.train_b.size(); ++i) {
        const int pl = sel.pseudo_label[i];
        if (pl < 0) continue;  // noise or rejected cluster: excluded this epoch
        ds.cluster_members[pl].push_back(static_cast<int>(i));
        chosen.push_back(&bench.train_b[i]);
        labels.push_back(n_synth + pl);
      }
      ds.selection = std::move(sel);
    }
  }

  ds.n_classes = n_synth + ds.m_prime();
  ds.labels = std::move(labels);
  ds.inputs = Matrix(static_cast<int>(chosen.size()), bench.d_in);
  for (size_t i = 0; i < chosen.size(); ++i) {
    const auto& in = chosen[i]->input();
    std::copy(in.begin(), in.end(), ds.inputs.data.begin() + static_cast<long>(i) * bench.d_in);
  }
  ds.domain_labels.reserve(chosen.size());
  for (const auto* s : chosen) {
    ds.domain_labels.push_back(s->domain() == synth::Domain::SynthA ? 0 : 1);
  }
  ds.n_pseudo_samples = static_cast<int>(chosen.size() - bench.train_a.size());
  return ds;
}

std::vector<int> pk_sample(const EpochDataset& ds, int p, int k, Rng& rng) {
  if (p < 1 || k < 1) throw std::invalid_argument("pk_sample: P and K must be >= 1");
  const auto class_rows = rows_per_class(ds.labels, ds.n_classes);
  std::vector<int> available;
  for (int c = 0; c < ds.n_classes; ++c) {
    if (!class_rows[c].empty()) available.push_back(c);
  }
  if (available.empty()) throw std::invalid_argument("pk_sample: dataset has no classes");
  int effective_p = p;
  if (static_cast<int>(available.size()) < p) {
    effective_p = static_cast<int>(available.size());
    warn_once("pk_sample: only " + std::to_string(available.size()) + " classes available, shrinking P from " +
              std::to_string(p));
  }

  // Partial Fisher-Yates: the first effective_p entries are a uniform
  // draw without replacement.
  for (int i = 0; i < effective_p; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(available.size() - i));
    std::swap(available[i], available[j]);
  }

  std::vector<int> batch;
  batch.reserve(static_cast<size_t>(effective_p) * k);
  for (int i = 0; i < effective_p; ++i) {
    const auto& rows = class_rows[available[i]];
    if (static_cast<int>(rows.size()) >= k) {
      std::vector<int> pool = rows;
      for (int j = 0; j < k; ++j) {
        const int pick = j + static_cast<int>(rng.uniform_int(pool.size() - j));
        std::swap(pool[j], pool[pick]);
        batch.push_back(pool[j]);
      }
    } else {
      for (int j = 0; j < k; ++j) {
        batch.push_back(rows[rng.uniform_int(rows.size())]);
      }
    }
  }
  return batch;
}

BackboneStepResult train_step_backbone(const EpochDataset& ds, const std::vector<int>& batch, ModelState& state,
                                       const TrainConfig& cfg, double lambda_m_override) {
  const BatchView view = gather_batch(ds, batch);

  GradTape tape;
  const auto x = tape.constant(view.inputs);
  const auto f = model::encode_on_tape(tape, state.params.enc, x, /*trainable=*/true);
  const auto logits = model::classify_on_tape(tape, state.params.head, f, /*trainable=*/true);
  const auto l_id = losses::identity_loss(tape, logits, view.labels);
  const auto tri_in = cfg.loss.triplet_on_normalized ? tape.normalize_rows(f) : f;
  const auto l_tri = losses::triplet_loss(tape, tri_in, view.labels, cfg.loss.margin);

  std::optional<GradTape::NodeId> l_db;
  if (lambda_m_override != 0.0) {
    // Balance loss flows through the frozen discriminator into the encoder.
    const auto disc_in = cfg.disc_on_normalized ? tape.scale(tape.normalize_rows(f), cfg.disc_input_gain) : f;
    const auto disc_logits = model::discriminator_logits_on_tape(tape, state.params.disc, disc_in, /*trainable=*/false);
    const auto probs = tape.softmax(disc_logits);
    l_db = losses::domain_balance_loss(tape, probs, cfg.loss.balance_constant);
  }

  losses::LossConfig effective = cfg.loss;
  effective.lambda_m = lambda_m_override;
  const auto total = losses::combined_loss(tape, l_db, l_id, l_tri, effective);

  BackboneStepResult result;
  result.loss_total = tape.scalar(total);
  result.loss_id = tape.scalar(l_id);
  result.loss_tri = tape.scalar(l_tri);
  if (l_db.has_value()) {
    result.loss_db = tape.scalar(*l_db);
    result.db_active = true;
  }
  if (!std::isfinite(result.loss_total)) {
    throw std::runtime_error("train_step_backbone: non-finite loss (id=" + std::to_string(result.loss_id) +
                             " tri=" + std::to_string(result.loss_tri) + " db=" + std::to_string(result.loss_db) + ")");
  }

  tape.backward(total);
  auto refs = model::backbone_param_refs(state.params);
  state.adam_backbone.step(refs, tape.param_grads());
  return result;
}

DiscStepResult train_step_discriminator(const EpochDataset& ds, const std::vector<int>& batch, ModelState& state,
                                        const TrainConfig& cfg) {
  const BatchView view = gather_batch(ds, batch);

  const bool has_synth = std::find(view.domains.begin(), view.domains.end(), 0) != view.domains.end();
  const bool has_real = std::find(view.domains.begin(), view.domains.end(), 1) != view.domains.end();
  DiscStepResult result;
  if (!has_synth || !has_real) {
    warn_once("train_step_discriminator: single-domain batch, skipping discriminator update");
    result.skipped = true;
    return result;
  }

  // Backbone fixed: features enter the tape as constants.
  Matrix features = model::encode(state.params.enc, view.inputs);
  if (cfg.disc_on_normalized) {
    features = scale(model::normalize_features(features), cfg.disc_input_gain);
  }

  GradTape tape;
  const auto f = tape.constant(features);
  const auto logits = model::discriminator_logits_on_tape(tape, state.params.disc, f, /*trainable=*/true);
  const auto probs = tape.softmax(logits);
  const auto l_d = losses::domain_classification_loss(tape, probs, view.domains);

  result.loss_d = tape.scalar(l_d);
  if (!std::isfinite(result.loss_d)) {
    throw std::runtime_error("train_step_discriminator: non-finite loss");
  }
  const Matrix& pv = tape.value(probs);
  int correct = 0;
  for (int i = 0; i < pv.rows; ++i) {
    const int pred = pv(i, 1) > pv(i, 0) ? 1 : 0;
    if (pred == view.domains[i]) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / pv.rows;

  tape.backward(l_d);
  auto refs = model::discriminator_param_refs(state.params);
  state.adam_disc.step(refs, tape.param_grads());
  return result;
}

Matrix discriminator_probs(const model::ModelParams& params, const Matrix& inputs, const TrainConfig& cfg) {
  Matrix feats = model::encode(params.enc, inputs);
  if (cfg.disc_on_normalized) {
    feats = scale(model::normalize_features(feats), cfg.disc_input_gain);
  }
  return model::discriminate(params.disc, feats);
}

RunResult run(const TrainConfig& cfg, const synth::Benchmark& bench, const RunHooks* hooks) {
  cfg.validate();
  if (bench.train_a.empty()) throw std::invalid_argument("run: benchmark has no synthetic training data");

  Rng root(cfg.seed);
  ModelState state;
  state.params.enc = model::make_encoder(bench.d_in, cfg.encoder_hidden, cfg.d_feat, root.split("init.encoder"));
  state.params.disc = model::make_discriminator(cfg.d_feat, cfg.disc_hidden, root.split("init.discriminator"));
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr0;
  adam_cfg.weight_decay = cfg.weight_decay;
  state.adam_backbone = AdamState(adam_cfg);
  state.adam_disc = AdamState(adam_cfg);

  const Matrix inputs_a = bench.inputs_of(bench.train_a);
  std::vector<int> labels_a;
  labels_a.reserve(bench.train_a.size());
  for (const auto& s : bench.train_a) labels_a.push_back(*s.train_label());

  std::optional<model::ClassifierHead> prev_head;
  Rng w2_rng = root.split("random_w2");

  RunResult result;
  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    const double lr = lr_at(cfg, epoch);
    state.adam_backbone.set_lr(lr);
    state.adam_disc.set_lr(lr);

    EpochDataset ds = build_epoch_dataset(state.params.enc, bench, cfg);
    if (hooks != nullptr && hooks->on_clusters && ds.selection.has_value()) {
      hooks->on_clusters(epoch, *ds.selection);
    }

    // Classifier re-init: W1 persists across epochs (class means of the
    // synthetic features at epoch 0); W2 is rebuilt for this epoch's
    // pseudo classes.
    Matrix w2;
    if (ds.m_prime() == 0) {
      w2 = Matrix(cfg.d_feat, 0);
    } else if (cfg.adaptive_init) {
      w2 = model::class_mean_columns(ds.features_b_normalized, ds.cluster_members);
    } else {
      Rng epoch_w2 = w2_rng.split(static_cast<uint64_t>(epoch));
      w2 = random_uniform_matrix(cfg.d_feat, ds.m_prime(), std::sqrt(6.0 / cfg.d_feat), epoch_w2);
    }
    Matrix w1_fresh;
    if (!prev_head.has_value()) {
      const Matrix fa = model::normalize_features(model::encode(state.params.enc, inputs_a));
      w1_fresh = model::class_mean_columns(fa, rows_per_class(labels_a, ds.n_synth_classes));
    }
    state.params.head = model::adaptive_init(prev_head, w1_fresh, w2);
    // The pseudo block is a new variable every epoch; its moments restart.
    state.adam_backbone.reset_slot("head.w_pseudo");

    if (hooks != nullptr && hooks->on_epoch_start) hooks->on_epoch_start(epoch, state);

    Rng batch_rng = root.split("batches").split(static_cast<uint64_t>(epoch));
    EpochLog log;
    log.epoch = epoch;
    log.m_prime = ds.m_prime();
    log.n_pseudo = ds.n_pseudo_samples;
    log.lr = lr;
    int n_backbone = 0, n_db = 0, n_disc = 0;

    for (int iter = 0; iter < cfg.iters_per_epoch; ++iter) {
      const std::vector<int> batch = pk_sample(ds, cfg.batch_p, cfg.batch_k, batch_rng);
      StepKind kind;
      if (epoch >= cfg.warmup_epochs && iter % cfg.disc_period == 0) {
        const DiscStepResult r = train_step_discriminator(ds, batch, state, cfg);
        kind = r.skipped ? StepKind::DiscriminatorSkipped : StepKind::Discriminator;
        if (!r.skipped) {
          log.loss_d += r.loss_d;
          ++n_disc;
        }
      } else {
        // Warm-up trains with the re-ID metrics only.
        const double lambda_m = epoch < cfg.warmup_epochs ? 0.0 : cfg.loss.lambda_m;
        const BackboneStepResult r = train_step_backbone(ds, batch, state, cfg, lambda_m);
        kind = StepKind::Backbone;
        log.loss_id += r.loss_id;
        log.loss_tri += r.loss_tri;
        ++n_backbone;
        if (r.db_active) {
          log.loss_db += r.loss_db;
          ++n_db;
        }
      }
      if (hooks != nullptr && hooks->on_step) hooks->on_step(epoch, iter, kind, state);
    }

    if (n_backbone > 0) {
      log.loss_id /= n_backbone;
      log.loss_tri /= n_backbone;
    }
    if (n_db > 0) log.loss_db /= n_db;
    if (n_disc > 0) log.loss_d /= n_disc;

    // End-of-epoch discriminator accuracy over the whole epoch dataset.
    {
      const Matrix probs = discriminator_probs(state.params, ds.inputs, cfg);
      int correct = 0;
      for (int i = 0; i < probs.rows; ++i) {
        const int pred = probs(i, 1) > probs(i, 0) ? 1 : 0;
        if (pred == ds.domain_labels[i]) ++correct;
      }
      log.disc_acc = static_cast<double>(correct) / probs.rows;
    }

    const eval::EvalReport report = eval::evaluate(state.params.enc, bench.query_c, bench.gallery_c);
    log.map_c = report.map;
    log.rank1_c = report.rank1();
    result.reports.push_back(report);
    result.logs.push_back(log);

    prev_head = state.params.head;
  }

  result.params = std::move(state.params);
  return result;
}

void write_epoch_log_csv(std::ostream& out, const std::vector<EpochLog>& logs, uint64_t config_hash) {
  char buf[384];
  std::snprintf(buf, sizeof(buf), "# config_hash=%016llx\n", static_cast<unsigned long long>(config_hash));
  out << buf;
  out << "epoch,M_prime,n_pseudo,loss_db,loss_d,loss_id,loss_tri,disc_acc,lr,map_C,rank1_C\n";
  for (const EpochLog& l : logs) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", l.epoch, l.m_prime,
                  l.n_pseudo, l.loss_db, l.loss_d, l.loss_id, l.loss_tri, l.disc_acc, l.lr, l.map_c, l.rank1_c);
    out << buf;
  }
}

}  // namespace domainmix::train
