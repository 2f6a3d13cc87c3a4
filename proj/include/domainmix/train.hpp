#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "domainmix/adam.hpp"
#include "domainmix/cluster.hpp"
#include "domainmix/eval.hpp"
#include "domainmix/losses.hpp"
#include "domainmix/model.hpp"
#include "domainmix/synthgen.hpp"

namespace domainmix::train {

struct TrainConfig {
  int total_epochs = 30;
  int warmup_epochs = 6;
  int iters_per_epoch = 240;
  // Every disc_period-th batch of a post-warm-up epoch trains the
  // discriminator; the rest train the backbone.
  int disc_period = 2;
  int batch_p = 8;  // identities per batch
  int batch_k = 4;  // samples per identity
  double lr0 = 1e-3;
  std::vector<int> lr_milestones = {24, 27};
  double lr_decay = 0.1;
  double weight_decay = 5e-4;
  uint64_t seed = 1;
  int encoder_hidden = 64;
  int d_feat = 32;
  int disc_hidden = 32;
  losses::LossConfig loss;
  cluster::DbscanParams dbscan;
  cluster::CriteriaFlags criteria;
  // The discriminator reads L2-normalized features scaled by a fixed gain.
  // Raw encoder features grow without bound over training, which hands the
  // discriminator a trivial radial cue and stalls the adversarial game;
  // the fixed-norm sphere keeps the two players comparable. The gain sets
  // how fast discriminator logits can grow per optimizer step.
  bool disc_on_normalized = true;
  double disc_input_gain = 1.0;
  // Ablation switches: drop domain B entirely, use its ground-truth labels
  // instead of clustering, or replace the cluster-mean W2 init with a
  // random one.
  bool use_real_domain = true;
  bool real_labels_ground_truth = false;
  bool adaptive_init = true;

  void validate() const;
};

// lr after all milestone decays with epoch index >= milestone applied.
double lr_at(const TrainConfig& cfg, int epoch);

// The dynamically generated training set of one epoch: labeled synthetic
// samples plus the reliable pseudo-labeled real samples.
struct EpochDataset {
  Matrix inputs;                   // rows = samples, cols = d_in
  std::vector<int> labels;         // 0..n_classes-1
  std::vector<int> domain_labels;  // 0 synthetic, 1 real
  int n_synth_classes = 0;         // N; labels 0..N-1 are synthetic
  int n_classes = 0;               // M = N + M'
  int n_pseudo_samples = 0;

  // For adaptive init: normalized features of domain B under the epoch's
  // encoder and the member rows of each surviving cluster.
  Matrix features_b_normalized;
  std::vector<std::vector<int>> cluster_members;
  std::optional<cluster::Selection> selection;  // engaged when clustering ran

  int m_prime() const { return static_cast<int>(cluster_members.size()); }
};

EpochDataset build_epoch_dataset(const model::EncoderParams& enc, const synth::Benchmark& bench, const TrainConfig& cfg);

// P identities uniformly without replacement (shrinks P with a warning if
// fewer exist), then K samples each: without replacement when the class is
// large enough, with replacement otherwise.
std::vector<int> pk_sample(const EpochDataset& ds, int p, int k, Rng& rng);

struct ModelState {
  model::ModelParams params;
  AdamState adam_backbone;
  AdamState adam_disc;
};

struct BackboneStepResult {
  double loss_total = 0.0;
  double loss_db = 0.0;
  double loss_id = 0.0;
  double loss_tri = 0.0;
  bool db_active = false;
};

struct DiscStepResult {
  double loss_d = 0.0;
  double accuracy = 0.0;
  bool skipped = false;
};

// One Adam step on encoder + head with the combined objective; the
// discriminator is wired as constants. lambda_m_override replaces the
// configured weight (warm-up forces 0).
BackboneStepResult train_step_backbone(const EpochDataset& ds, const std::vector<int>& batch, ModelState& state,
                                       const TrainConfig& cfg, double lambda_m_override);

// One Adam step on the discriminator with the domain classification loss;
// encoder and head are untouched. Single-domain batches are skipped.
DiscStepResult train_step_discriminator(const EpochDataset& ds, const std::vector<int>& batch, ModelState& state,
                                        const TrainConfig& cfg);

// Discriminator probabilities for a batch of raw benchmark inputs under
// the configured feature wiring (used by training telemetry and the
// domain-invariance diagnostics).
Matrix discriminator_probs(const model::ModelParams& params, const Matrix& inputs, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  int m_prime = 0;
  int n_pseudo = 0;
  double loss_db = 0.0;
  double loss_d = 0.0;
  double loss_id = 0.0;
  double loss_tri = 0.0;
  double disc_acc = 0.0;
  double lr = 0.0;
  double map_c = 0.0;
  double rank1_c = 0.0;
};

enum class StepKind { Backbone, Discriminator, DiscriminatorSkipped };

struct RunHooks {
  std::function<void(int epoch, const cluster::Selection& sel)> on_clusters;
  // Fires after the epoch's dataset and classifier re-init, before the
  // first batch; the reference point for per-step freeze checks.
  std::function<void(int epoch, const ModelState& state)> on_epoch_start;
  std::function<void(int epoch, int iter, StepKind kind, const ModelState& state)> on_step;
};

struct RunResult {
  model::ModelParams params;
  std::vector<EpochLog> logs;
  std::vector<eval::EvalReport> reports;  // one per epoch, on domain C
};

RunResult run(const TrainConfig& cfg, const synth::Benchmark& bench, const RunHooks* hooks = nullptr);

// CSV log stream: comment line with the config hash, then one row per
// epoch (columns epoch,M_prime,n_pseudo,loss_db,loss_d,loss_id,loss_tri,
// disc_acc,lr,map_C,rank1_C).
void write_epoch_log_csv(std::ostream& out, const std::vector<EpochLog>& logs, uint64_t config_hash);

}  // namespace domainmix::train
