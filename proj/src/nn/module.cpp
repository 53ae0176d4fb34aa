#include "cefnet/nn/module.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace cefnet::nn {

void Module::train(bool on) {
  training_ = on;
  for (auto& c : children_) c.module->train(on);
}

Tensor& Module::register_parameter(std::string name, Tensor t) {
  t.set_requires_grad(true);
  params_.push_back({std::move(name), std::move(t)});
  return params_.back().tensor;
}

void Module::register_buffer(std::string name, std::vector<double>& values) {
  buffers_.push_back({std::move(name), &values});
}

void Module::register_module(std::string name, Module& child) { children_.push_back({std::move(name), &child}); }

void Module::collect(const std::string& prefix, std::vector<StateEntry>& out) {
  for (auto& p : params_) out.push_back({prefix + p.name, p.tensor.shape(), p.tensor.data(), true});
  for (auto& b : buffers_) out.push_back({prefix + b.name, {b.values->size()}, *b.values, false});
  for (auto& c : children_) c.module->collect(prefix + c.name + ".", out);
}

std::vector<StateEntry> Module::state() {
  std::vector<StateEntry> out;
  collect("", out);
  return out;
}

std::vector<Tensor> Module::parameters() {
  std::vector<Tensor> out;
  for (auto& p : params_) out.push_back(p.tensor);
  for (auto& c : children_) {
    auto sub = c.module->parameters();
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

std::size_t Module::parameter_count() {
  std::size_t n = 0;
  for (auto& p : parameters()) n += p.numel();
  return n;
}

void Module::zero_grad() {
  for (auto& p : parameters()) p.zero_grad();
}

Snapshot Module::snapshot() {
  Snapshot snap;
  for (auto& e : state()) snap.push_back({e.name, e.shape, std::vector<double>(e.values.begin(), e.values.end())});
  return snap;
}

void Module::restore(const Snapshot& snap) {
  std::unordered_map<std::string, const StateRecord*> by_name;
  for (const auto& r : snap) by_name[r.name] = &r;
  for (auto& e : state()) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) throw std::invalid_argument("state entry '" + e.name + "' missing from snapshot");
    const auto& rec = *it->second;
    if (rec.values.size() != e.values.size()) {
      throw std::invalid_argument("state entry '" + e.name + "' has shape " + ad::shape_str(rec.shape) +
                                  ", expected " + ad::shape_str(e.shape));
    }
    std::copy(rec.values.begin(), rec.values.end(), e.values.begin());
  }
}

double uniform(Rng& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Tensor fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(ad::numel_of(shape));
  for (auto& x : v) x = uniform(rng, -bound, bound);
  return Tensor::from(shape, std::move(v));
}

}  // namespace cefnet::nn
