#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "domainmix/matrix.hpp"
#include "domainmix/rng.hpp"
#include "domainmix/tape.hpp"

namespace domainmix::model {

// Three-layer MLP (two hidden ReLU layers, linear output).
struct MlpParams {
  Matrix w1, b1, w2, b2, w3, b3;

  int input_dim() const { return w1.rows; }
  int output_dim() const { return w3.cols; }
};

using EncoderParams = MlpParams;
using DiscriminatorParams = MlpParams;

EncoderParams make_encoder(int d_in, int hidden, int d_feat, Rng rng);
// Output width is the number of domains (2).
DiscriminatorParams make_discriminator(int d_feat, int hidden, Rng rng);

// Raw (unnormalized) features, batch rows in, batch rows out.
Matrix encode(const EncoderParams& enc, const Matrix& x);
// Same forward recorded on a tape. trainable=false registers the weights
// as constants so no gradient can reach them.
GradTape::NodeId encode_on_tape(GradTape& tape, const EncoderParams& enc, GradTape::NodeId x, bool trainable);

// Row-wise L2 normalization; zero rows are left as zero.
Matrix normalize_features(const Matrix& f);

// Identity classifier W = (W1 | W2): a fixed synthetic block and a
// pseudo-label block rebuilt every epoch. The bias is identically zero.
struct ClassifierHead {
  Matrix w_synth;   // d_feat x N
  Matrix w_pseudo;  // d_feat x M'

  int n_synth() const { return w_synth.cols; }
  int n_pseudo() const { return w_pseudo.cols; }
  int width() const { return n_synth() + n_pseudo(); }
};

// logits = f * (W1 | W2); columns 0..N-1 are synthetic classes.
Matrix classify_identity(const ClassifierHead& head, const Matrix& f);
GradTape::NodeId classify_on_tape(GradTape& tape, const ClassifierHead& head, GradTape::NodeId f, bool trainable);

// Column i = mean of the rows of `features` listed in members[i].
// Throws std::logic_error on an empty member list.
Matrix class_mean_columns(const Matrix& features, const std::vector<std::vector<int>>& members);

// W1 comes from the previous epoch when there is one (and from w1_fresh at
// epoch 0); W2 is handed in as this epoch's cluster-mean columns.
ClassifierHead adaptive_init(const std::optional<ClassifierHead>& prev, const Matrix& w1_fresh, const Matrix& w2_cluster_means);

// Softmax over domain logits; rows sum to 1.
Matrix discriminate(const DiscriminatorParams& disc, const Matrix& f);
GradTape::NodeId discriminator_logits_on_tape(GradTape& tape, const DiscriminatorParams& disc, GradTape::NodeId f, bool trainable);

struct ModelParams {
  EncoderParams enc;
  ClassifierHead head;
  DiscriminatorParams disc;
};

// Optimizer wiring: (name, matrix) pairs matching the tape's parameter
// names. The backbone group is the encoder plus the classifier head.
std::vector<std::pair<std::string, Matrix*>> backbone_param_refs(ModelParams& p);
std::vector<std::pair<std::string, Matrix*>> discriminator_param_refs(ModelParams& p);

// Freeze-contract hashes over raw weight bytes.
uint64_t backbone_hash(const ModelParams& p);
uint64_t discriminator_hash(const ModelParams& p);

// Checkpoint file: 8-byte little-endian header length, JSON header
// (epoch, config hash, parameter shapes), then all weights as 64-bit
// little-endian doubles in header order.
struct Checkpoint {
  ModelParams params;
  int epoch = 0;
  uint64_t config_hash = 0;
};

void save_checkpoint(const std::string& path, const ModelParams& params, int epoch, uint64_t config_hash);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace domainmix::model
