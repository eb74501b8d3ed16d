#pragma once

#include "ireg/nn/parameters.hpp"

namespace ireg::nn {

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global-norm clipping threshold; <= 0 disables clipping.
  double clip_norm = 1.0;
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamConfig config);

  /// Applies one update from `grads` (already averaged over the batch).
  void step(ParameterSet& params, const Gradients& grads);
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const AdamConfig& config() const { return config_; }
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

}  // namespace ireg::nn
