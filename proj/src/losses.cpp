#include "domainmix/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace domainmix::losses {

namespace {

// Log argument floor; keeps values and gradients finite when a probability
// underflows to 0 at extreme logit gaps.
constexpr double kLogClamp = 1e-300;

double safe_log(double x) { return std::log(x < kLogClamp ? kLogClamp : x); }

void check_prob_rows(const Matrix& probs) {
  for (int i = 0; i < probs.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < probs.cols; ++j) s += probs(i, j);
    if (std::fabs(s - 1.0) > 1e-6) {
      throw std::invalid_argument("loss: probability row " + std::to_string(i) + " does not sum to 1");
    }
  }
}

}  // namespace

void LossConfig::validate() const {
  if (n_domains < 2) throw std::invalid_argument("loss config: n_domains must be >= 2");
  if (margin < 0.0) throw std::invalid_argument("loss config: margin must be >= 0");
  const double floor = std::log(static_cast<double>(n_domains)) / static_cast<double>(n_domains);
  if (balance_constant < floor - 1e-12) {
    throw std::invalid_argument("loss config: balance_constant must be >= ln(n)/n to keep the balance loss nonnegative");
  }
}

GradTape::NodeId domain_classification_loss(GradTape& tape, GradTape::NodeId probs, const std::vector<int>& domain_labels) {
  const Matrix& p = tape.value(probs);
  if (p.rows == 0) throw std::invalid_argument("domain_classification_loss: empty batch");
  if (static_cast<int>(domain_labels.size()) != p.rows) {
    throw std::invalid_argument("domain_classification_loss: label count mismatch");
  }
  check_prob_rows(p);
  for (const int d : domain_labels) {
    if (d < 0 || d >= p.cols) throw std::invalid_argument("domain_classification_loss: domain label out of range");
  }
  const int batch = p.rows;
  double loss = 0.0;
  for (int i = 0; i < batch; ++i) loss -= safe_log(p(i, domain_labels[i]));
  loss /= batch;

  const std::vector<int> labels = domain_labels;
  return tape.make_node(Matrix::filled(1, 1, loss), {probs}, [probs, labels](GradTape& t, GradTape::NodeId self) {
    if (!t.requires_grad(probs)) return;
    const double g = t.grad(self)(0, 0);
    const Matrix& pv = t.value(probs);
    Matrix& gp = t.grad_ref(probs);
    const double scale = g / static_cast<double>(pv.rows);
    for (int i = 0; i < pv.rows; ++i) {
      const int d = labels[i];
      const double pi = pv(i, d);
      gp(i, d) -= scale / (pi < kLogClamp ? kLogClamp : pi);
    }
  });
}

GradTape::NodeId domain_balance_loss(GradTape& tape, GradTape::NodeId probs, double a) {
  const Matrix& p = tape.value(probs);
  if (p.rows == 0) throw std::invalid_argument("domain_balance_loss: empty batch");
  const int batch = p.rows;
  double loss = 0.0;
  for (int i = 0; i < batch; ++i) {
    for (int j = 0; j < p.cols; ++j) {
      const double x = p(i, j);
      loss += (x > 0.0 ? x * std::log(x) : 0.0) + a;  // 0 ln 0 := 0
    }
  }
  loss /= batch;
  return tape.make_node(Matrix::filled(1, 1, loss), {probs}, [probs](GradTape& t, GradTape::NodeId self) {
    if (!t.requires_grad(probs)) return;
    const Matrix& pv = t.value(probs);
    Matrix& gp = t.grad_ref(probs);
    const double scale = t.grad(self)(0, 0) / static_cast<double>(pv.rows);
    for (size_t k = 0; k < pv.data.size(); ++k) {
      gp.data[k] += scale * (safe_log(pv.data[k]) + 1.0);
    }
  });
}

GradTape::NodeId identity_loss(GradTape& tape, GradTape::NodeId logits, const std::vector<int>& labels) {
  const Matrix& z = tape.value(logits);
  if (z.rows == 0 || z.cols == 0) throw std::invalid_argument("identity_loss: empty logits");
  if (static_cast<int>(labels.size()) != z.rows) throw std::invalid_argument("identity_loss: label count mismatch");
  for (const int y : labels) {
    if (y < 0 || y >= z.cols) {
      throw std::invalid_argument("identity_loss: label " + std::to_string(y) + " outside 0.." + std::to_string(z.cols - 1));
    }
  }
  // Fused log-softmax cross-entropy: loss_i = logsumexp(z_i) - z_i[y_i].
  const int batch = z.rows;
  double loss = 0.0;
  for (int i = 0; i < batch; ++i) {
    double mx = z(i, 0);
    for (int j = 1; j < z.cols; ++j) mx = std::max(mx, z(i, j));
    double sum = 0.0;
    for (int j = 0; j < z.cols; ++j) sum += std::exp(z(i, j) - mx);
    loss += mx + std::log(sum) - z(i, labels[i]);
  }
  loss /= batch;

  const std::vector<int> ys = labels;
  return tape.make_node(Matrix::filled(1, 1, loss), {logits}, [logits, ys](GradTape& t, GradTape::NodeId self) {
    if (!t.requires_grad(logits)) return;
    const Matrix& zv = t.value(logits);
    const Matrix sm = softmax_rows(zv);
    Matrix& gz = t.grad_ref(logits);
    const double scale = t.grad(self)(0, 0) / static_cast<double>(zv.rows);
    for (int i = 0; i < zv.rows; ++i) {
      for (int j = 0; j < zv.cols; ++j) {
        gz(i, j) += scale * (sm(i, j) - (j == ys[i] ? 1.0 : 0.0));
      }
    }
  });
}

GradTape::NodeId triplet_loss(GradTape& tape, GradTape::NodeId features, const std::vector<int>& labels, double margin) {
  const Matrix& f = tape.value(features);
  const int batch = f.rows;
  if (batch == 0) throw std::invalid_argument("triplet_loss: empty batch");
  if (static_cast<int>(labels.size()) != batch) throw std::invalid_argument("triplet_loss: label count mismatch");
  if (margin < 0.0) throw std::invalid_argument("triplet_loss: margin must be >= 0");

  // Batch-hard mining: farthest positive, closest negative, ties to the
  // lowest index.
  std::vector<int> pos(batch, -1), neg(batch, -1);
  std::vector<double> d_ap(batch), d_an(batch);
  for (int i = 0; i < batch; ++i) {
    double best_pos = -1.0, best_neg = 0.0;
    for (int j = 0; j < batch; ++j) {
      if (j == i) continue;
      const double d = std::sqrt(row_sq_distance(f, i, f, j));
      if (labels[j] == labels[i]) {
        if (d > best_pos) {
          best_pos = d;
          pos[i] = j;
        }
      } else {
        if (neg[i] == -1 || d < best_neg) {
          best_neg = d;
          neg[i] = j;
        }
      }
    }
    if (pos[i] == -1) {
      throw std::runtime_error("triplet_loss: anchor " + std::to_string(i) + " has no positive in the batch");
    }
    if (neg[i] == -1) {
      throw std::runtime_error("triplet_loss: anchor " + std::to_string(i) + " has no negative in the batch");
    }
    d_ap[i] = best_pos;
    d_an[i] = best_neg;
  }

  double loss = 0.0;
  for (int i = 0; i < batch; ++i) loss += std::max(0.0, margin + d_ap[i] - d_an[i]);
  loss /= batch;

  return tape.make_node(
      Matrix::filled(1, 1, loss), {features},
      [features, pos, neg, d_ap, d_an, margin](GradTape& t, GradTape::NodeId self) {
        if (!t.requires_grad(features)) return;
        const Matrix& fv = t.value(features);
        Matrix& gf = t.grad_ref(features);
        const int n = fv.rows;
        const double scale = t.grad(self)(0, 0) / static_cast<double>(n);
        for (int i = 0; i < n; ++i) {
          if (margin + d_ap[i] - d_an[i] <= 0.0) continue;  // inactive hinge: subgradient 0
          const int p = pos[i];
          const int q = neg[i];
          for (int d = 0; d < fv.cols; ++d) {
            const double up = d_ap[i] > 0.0 ? (fv(i, d) - fv(p, d)) / d_ap[i] : 0.0;
            const double un = d_an[i] > 0.0 ? (fv(i, d) - fv(q, d)) / d_an[i] : 0.0;
            gf(i, d) += scale * (up - un);
            gf(p, d) -= scale * up;
            gf(q, d) += scale * un;
          }
        }
      });
}

GradTape::NodeId combined_loss(GradTape& tape, std::optional<GradTape::NodeId> l_db, GradTape::NodeId l_id,
                               GradTape::NodeId l_tri, const LossConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<double, GradTape::NodeId>> terms;
  if (l_db.has_value()) terms.emplace_back(cfg.lambda_m, *l_db);
  terms.emplace_back(cfg.lambda_s, l_id);
  terms.emplace_back(1.0, l_tri);
  return tape.weighted_sum(terms);
}

}  // namespace domainmix::losses
