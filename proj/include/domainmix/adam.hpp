#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "domainmix/matrix.hpp"

namespace domainmix {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// Adam with decoupled weight decay. Moment buffers are keyed by parameter
// name; a slot whose shape changes (the pseudo-class block is resized every
// epoch) is restarted from zero.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamConfig& config() const { return cfg_; }
  int64_t step_count() const { return step_count_; }

  // One update over the given parameters. Decay is applied as
  // p <- p - lr*wd*p before the Adam delta. Zero-size parameters are
  // skipped; a missing or non-finite gradient raises std::runtime_error
  // naming the slot.
  void step(const std::vector<std::pair<std::string, Matrix*>>& params, const std::map<std::string, Matrix>& grads);

  void reset_slot(const std::string& name) { slots_.erase(name); }

 private:
  struct Slot {
    Matrix m, v;
    int64_t t = 0;
  };

  AdamConfig cfg_;
  std::map<std::string, Slot> slots_;
  int64_t step_count_ = 0;
};

}  // namespace domainmix
