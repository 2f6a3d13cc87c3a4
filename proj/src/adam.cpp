#include "domainmix/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace domainmix {

void AdamState::step(const std::vector<std::pair<std::string, Matrix*>>& params,
                     const std::map<std::string, Matrix>& grads) {
  ++step_count_;
  for (const auto& [name, p] : params) {
    if (p->empty()) continue;
    const auto it = grads.find(name);
    if (it == grads.end()) {
      throw std::runtime_error("adam_step: no gradient for parameter '" + name + "'");
    }
    const Matrix& g = it->second;
    if (!g.same_shape(*p)) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for '" + name + "'");
    }
    if (!g.all_finite()) {
      throw std::runtime_error("adam_step: non-finite gradient for parameter '" + name + "'");
    }

    Slot& slot = slots_[name];
    if (!slot.m.same_shape(*p)) {
      slot.m = Matrix::zeros(p->rows, p->cols);
      slot.v = Matrix::zeros(p->rows, p->cols);
      slot.t = 0;
    }
    ++slot.t;

    if (cfg_.weight_decay != 0.0) {
      const double keep = 1.0 - cfg_.lr * cfg_.weight_decay;
      for (double& w : p->data) w *= keep;
    }

    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(slot.t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(slot.t));
    for (size_t i = 0; i < p->data.size(); ++i) {
      const double gi = g.data[i];
      slot.m.data[i] = cfg_.beta1 * slot.m.data[i] + (1.0 - cfg_.beta1) * gi;
      slot.v.data[i] = cfg_.beta2 * slot.v.data[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double m_hat = slot.m.data[i] / bc1;
      const double v_hat = slot.v.data[i] / bc2;
      p->data[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
}

}  // namespace domainmix
