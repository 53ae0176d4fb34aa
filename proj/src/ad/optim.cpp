#include "cefnet/ad/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace cefnet::ad {

bool adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  if (!(state.beta1 > 0.0 && state.beta1 < 1.0 && state.beta2 > 0.0 && state.beta2 < 1.0)) {
    throw std::invalid_argument("adam: betas must lie in (0, 1)");
  }
  if (state.first_moment.empty()) {
    for (auto& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw std::invalid_argument("adam: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel()) {
      throw std::invalid_argument("adam: moment shape mismatch for parameter " + std::to_string(i));
    }
    for (double g : params[i].grad()) {
      if (!std::isfinite(g)) return false;
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto grad = params[i].grad();
    if (grad.empty()) continue;
    auto w = params[i].data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * grad[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * grad[j] * grad[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.epsilon);
    }
  }
  return true;
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(lr) {
  state_.beta1 = beta1;
  state_.beta2 = beta2;
  state_.epsilon = epsilon;
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace cefnet::ad
