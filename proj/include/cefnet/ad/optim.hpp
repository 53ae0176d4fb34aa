#pragma once

#include <cstdint>
#include <vector>

#include "cefnet/ad/tensor.hpp"

namespace cefnet::ad {

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update of `params` from their accumulated gradients.
/// Returns false, leaving parameters and state untouched, when any gradient
/// is non-finite.
bool adam_step(std::vector<Tensor>& params, AdamState& state, double lr);

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

  bool step() { return adam_step(params_, state_, lr_); }
  void zero_grad();

  const AdamState& state() const { return state_; }
  double lr() const { return lr_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
  double lr_;
};

}  // namespace cefnet::ad
