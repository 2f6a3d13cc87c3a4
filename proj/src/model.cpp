#include "domainmix/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace domainmix::model {

namespace {

Matrix kaiming_uniform(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  Matrix m(fan_in, fan_out);
  for (double& v : m.data) v = rng.uniform(-limit, limit);
  return m;
}

MlpParams make_mlp(int d_in, int hidden, int d_out, Rng& rng) {
  MlpParams p;
  p.w1 = kaiming_uniform(d_in, hidden, rng);
  p.b1 = Matrix::zeros(1, hidden);
  p.w2 = kaiming_uniform(hidden, hidden, rng);
  p.b2 = Matrix::zeros(1, hidden);
  p.w3 = kaiming_uniform(hidden, d_out, rng);
  p.b3 = Matrix::zeros(1, d_out);
  return p;
}

GradTape::NodeId mlp_on_tape(GradTape& tape, const MlpParams& p, GradTape::NodeId x, bool trainable, const std::string& prefix) {
  auto reg = [&](const char* name, const Matrix& m) {
    return trainable ? tape.param(prefix + name, m) : tape.constant(m);
  };
  const auto w1 = reg(".w1", p.w1);
  const auto b1 = reg(".b1", p.b1);
  const auto w2 = reg(".w2", p.w2);
  const auto b2 = reg(".b2", p.b2);
  const auto w3 = reg(".w3", p.w3);
  const auto b3 = reg(".b3", p.b3);
  const auto h1 = tape.relu(tape.affine(x, w1, b1));
  const auto h2 = tape.relu(tape.affine(h1, w2, b2));
  return tape.affine(h2, w3, b3);
}

Matrix mlp_forward(const MlpParams& p, const Matrix& x) {
  const Matrix h1 = relu_forward(affine_forward(x, p.w1, p.b1));
  const Matrix h2 = relu_forward(affine_forward(h1, p.w2, p.b2));
  return affine_forward(h2, p.w3, p.b3);
}

uint64_t combine_hashes(std::initializer_list<uint64_t> hs) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const uint64_t v : hs) {
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (v >> (8 * byte)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

struct NamedParam {
  std::string name;
  const Matrix* matrix;
};

std::vector<NamedParam> checkpoint_order(const ModelParams& p) {
  return {
      {"enc.w1", &p.enc.w1},   {"enc.b1", &p.enc.b1},   {"enc.w2", &p.enc.w2},
      {"enc.b2", &p.enc.b2},   {"enc.w3", &p.enc.w3},   {"enc.b3", &p.enc.b3},
      {"head.w_synth", &p.head.w_synth},               {"head.w_pseudo", &p.head.w_pseudo},
      {"disc.w1", &p.disc.w1}, {"disc.b1", &p.disc.b1}, {"disc.w2", &p.disc.w2},
      {"disc.b2", &p.disc.b2}, {"disc.w3", &p.disc.w3}, {"disc.b3", &p.disc.b3},
  };
}

std::vector<std::pair<std::string, Matrix*>> mutable_checkpoint_order(ModelParams& p) {
  std::vector<std::pair<std::string, Matrix*>> out;
  for (const auto& np : checkpoint_order(p)) {
    out.emplace_back(np.name, const_cast<Matrix*>(np.matrix));
  }
  return out;
}

void append_u64_le(std::string& out, uint64_t v) {
  for (int byte = 0; byte < 8; ++byte) out.push_back(static_cast<char>((v >> (8 * byte)) & 0xff));
}

uint64_t read_u64_le(const unsigned char* p) {
  uint64_t v = 0;
  for (int byte = 0; byte < 8; ++byte) v |= static_cast<uint64_t>(p[byte]) << (8 * byte);
  return v;
}

}  // namespace

EncoderParams make_encoder(int d_in, int hidden, int d_feat, Rng rng) {
  if (d_in < 1 || hidden < 1 || d_feat < 1) throw std::invalid_argument("make_encoder: bad dimensions");
  return make_mlp(d_in, hidden, d_feat, rng);
}

DiscriminatorParams make_discriminator(int d_feat, int hidden, Rng rng) {
  if (d_feat < 1 || hidden < 1) throw std::invalid_argument("make_discriminator: bad dimensions");
  return make_mlp(d_feat, hidden, 2, rng);
}

Matrix encode(const EncoderParams& enc, const Matrix& x) { return mlp_forward(enc, x); }

GradTape::NodeId encode_on_tape(GradTape& tape, const EncoderParams& enc, GradTape::NodeId x, bool trainable) {
  return mlp_on_tape(tape, enc, x, trainable, "enc");
}

Matrix normalize_features(const Matrix& f) { return l2_normalize_rows(f); }

Matrix classify_identity(const ClassifierHead& head, const Matrix& f) {
  if (head.width() < 1) throw std::invalid_argument("classify_identity: empty head");
  Matrix logits(f.rows, head.width());
  const Matrix ls = matmul(f, head.w_synth);
  for (int i = 0; i < f.rows; ++i) {
    for (int j = 0; j < ls.cols; ++j) logits(i, j) = ls(i, j);
  }
  if (head.n_pseudo() > 0) {
    const Matrix lp = matmul(f, head.w_pseudo);
    for (int i = 0; i < f.rows; ++i) {
      for (int j = 0; j < lp.cols; ++j) logits(i, head.n_synth() + j) = lp(i, j);
    }
  }
  return logits;
}

GradTape::NodeId classify_on_tape(GradTape& tape, const ClassifierHead& head, GradTape::NodeId f, bool trainable) {
  if (head.width() < 1) throw std::invalid_argument("classify_on_tape: empty head");
  auto reg = [&](const char* name, const Matrix& m) {
    return trainable ? tape.param(name, m) : tape.constant(m);
  };
  const auto synth_logits = tape.matmul(f, reg("head.w_synth", head.w_synth));
  if (head.n_pseudo() == 0) return synth_logits;
  const auto pseudo_logits = tape.matmul(f, reg("head.w_pseudo", head.w_pseudo));
  return tape.concat_cols(synth_logits, pseudo_logits);
}

Matrix class_mean_columns(const Matrix& features, const std::vector<std::vector<int>>& members) {
  Matrix out(features.cols, static_cast<int>(members.size()));
  for (size_t c = 0; c < members.size(); ++c) {
    if (members[c].empty()) {
      throw std::logic_error("class_mean_columns: class " + std::to_string(c) + " has no members");
    }
    for (const int row : members[c]) {
      if (row < 0 || row >= features.rows) throw std::invalid_argument("class_mean_columns: row out of range");
      for (int d = 0; d < features.cols; ++d) out(d, static_cast<int>(c)) += features(row, d);
    }
    const double inv = 1.0 / static_cast<double>(members[c].size());
    for (int d = 0; d < features.cols; ++d) out(d, static_cast<int>(c)) *= inv;
  }
  return out;
}

ClassifierHead adaptive_init(const std::optional<ClassifierHead>& prev, const Matrix& w1_fresh, const Matrix& w2_cluster_means) {
  ClassifierHead head;
  head.w_synth = prev.has_value() ? prev->w_synth : w1_fresh;
  if (head.w_synth.cols < 1) throw std::invalid_argument("adaptive_init: synthetic block is empty");
  if (w2_cluster_means.cols > 0 && w2_cluster_means.rows != head.w_synth.rows) {
    throw std::invalid_argument("adaptive_init: feature dimension mismatch between blocks");
  }
  head.w_pseudo = w2_cluster_means;
  return head;
}

Matrix discriminate(const DiscriminatorParams& disc, const Matrix& f) {
  return softmax_rows(mlp_forward(disc, f));
}

GradTape::NodeId discriminator_logits_on_tape(GradTape& tape, const DiscriminatorParams& disc, GradTape::NodeId f, bool trainable) {
  return mlp_on_tape(tape, disc, f, trainable, "disc");
}

std::vector<std::pair<std::string, Matrix*>> backbone_param_refs(ModelParams& p) {
  return {
      {"enc.w1", &p.enc.w1}, {"enc.b1", &p.enc.b1}, {"enc.w2", &p.enc.w2},
      {"enc.b2", &p.enc.b2}, {"enc.w3", &p.enc.w3}, {"enc.b3", &p.enc.b3},
      {"head.w_synth", &p.head.w_synth}, {"head.w_pseudo", &p.head.w_pseudo},
  };
}

std::vector<std::pair<std::string, Matrix*>> discriminator_param_refs(ModelParams& p) {
  return {
      {"disc.w1", &p.disc.w1}, {"disc.b1", &p.disc.b1}, {"disc.w2", &p.disc.w2},
      {"disc.b2", &p.disc.b2}, {"disc.w3", &p.disc.w3}, {"disc.b3", &p.disc.b3},
  };
}

uint64_t backbone_hash(const ModelParams& p) {
  return combine_hashes({content_hash(p.enc.w1), content_hash(p.enc.b1), content_hash(p.enc.w2),
                         content_hash(p.enc.b2), content_hash(p.enc.w3), content_hash(p.enc.b3),
                         content_hash(p.head.w_synth), content_hash(p.head.w_pseudo)});
}

uint64_t discriminator_hash(const ModelParams& p) {
  return combine_hashes({content_hash(p.disc.w1), content_hash(p.disc.b1), content_hash(p.disc.w2),
                         content_hash(p.disc.b2), content_hash(p.disc.w3), content_hash(p.disc.b3)});
}

void save_checkpoint(const std::string& path, const ModelParams& params, int epoch, uint64_t config_hash) {
  nlohmann::json header;
  header["format"] = "domainmix-checkpoint-v1";
  header["epoch"] = epoch;
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx", static_cast<unsigned long long>(config_hash));
  header["config_hash"] = hash_hex;
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& np : checkpoint_order(params)) {
    plist.push_back({{"name", np.name}, {"rows", np.matrix->rows}, {"cols", np.matrix->cols}});
  }
  header["params"] = plist;
  const std::string header_str = header.dump();

  std::string blob;
  append_u64_le(blob, header_str.size());
  blob += header_str;
  for (const auto& np : checkpoint_order(params)) {
    for (const double v : np.matrix->data) {
      append_u64_le(blob, std::bit_cast<uint64_t>(v));
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 8) throw std::runtime_error("checkpoint truncated: " + path);

  const uint64_t header_len = read_u64_le(reinterpret_cast<const unsigned char*>(blob.data()));
  if (8 + header_len > blob.size()) throw std::runtime_error("checkpoint header truncated: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(8, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  if (header.value("format", "") != "domainmix-checkpoint-v1") {
    throw std::runtime_error("unrecognized checkpoint format");
  }

  Checkpoint ckpt;
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.config_hash = std::stoull(header.at("config_hash").get<std::string>(), nullptr, 16);

  const auto refs = mutable_checkpoint_order(ckpt.params);
  const auto& plist = header.at("params");
  if (plist.size() != refs.size()) throw std::runtime_error("checkpoint parameter list mismatch");

  size_t offset = 8 + header_len;
  for (size_t i = 0; i < refs.size(); ++i) {
    const auto& entry = plist.at(i);
    if (entry.at("name").get<std::string>() != refs[i].first) {
      throw std::runtime_error("checkpoint parameter order mismatch at '" + refs[i].first + "'");
    }
    const int rows = entry.at("rows").get<int>();
    const int cols = entry.at("cols").get<int>();
    if (rows < 0 || cols < 0) throw std::runtime_error("checkpoint shape invalid for '" + refs[i].first + "'");
    Matrix m(rows, cols);
    const size_t bytes = m.size() * 8;
    if (offset + bytes > blob.size()) {
      throw std::runtime_error("checkpoint payload does not match declared shapes");
    }
    for (size_t k = 0; k < m.size(); ++k) {
      m.data[k] = std::bit_cast<double>(read_u64_le(reinterpret_cast<const unsigned char*>(blob.data() + offset + k * 8)));
    }
    offset += bytes;
    *refs[i].second = std::move(m);
  }
  if (offset != blob.size()) throw std::runtime_error("checkpoint payload does not match declared shapes");
  return ckpt;
}

}  // namespace domainmix::model
