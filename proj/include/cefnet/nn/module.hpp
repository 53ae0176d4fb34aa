#pragma once

#include <span>
#include <string>
#include <vector>

#include "cefnet/ad/ops.hpp"
#include "cefnet/ad/tensor.hpp"

namespace cefnet::nn {

using ad::Rng;
using ad::Shape;
using ad::Tensor;

/// A named, shaped view of module state. Parameters are trainable; buffers
/// (batch-norm running statistics) are not.
struct StateEntry {
  std::string name;
  Shape shape;
  std::span<double> values;
  bool trainable = true;
};

/// Owning copy of a state entry, used for checkpoints and best-epoch snapshots.
struct StateRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

using Snapshot = std::vector<StateRecord>;

class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  void train(bool on = true);
  void eval() { train(false); }
  bool training() const noexcept { return training_; }

  std::vector<StateEntry> state();
  std::vector<Tensor> parameters();
  std::size_t parameter_count();
  void zero_grad();

  Snapshot snapshot();
  /// Copies matching records back in; every entry must be present with the
  /// same shape.
  void restore(const Snapshot& snap);

 protected:
  Tensor& register_parameter(std::string name, Tensor t);
  void register_buffer(std::string name, std::vector<double>& values);
  void register_module(std::string name, Module& child);

 private:
  struct Param {
    std::string name;
    Tensor tensor;
  };
  struct Buffer {
    std::string name;
    std::vector<double>* values;
  };
  struct Child {
    std::string name;
    Module* module;
  };
  void collect(const std::string& prefix, std::vector<StateEntry>& out);

  bool training_ = true;
  std::vector<Param> params_;
  std::vector<Buffer> buffers_;
  std::vector<Child> children_;
};

/// Uniform draw in [lo, hi) from the top 53 bits of the generator.
double uniform(Rng& rng, double lo, double hi);
/// Fan-in scaled uniform initialisation, bound 1/sqrt(fan_in).
Tensor fan_in_uniform(const Shape& shape, std::size_t fan_in, Rng& rng);

}  // namespace cefnet::nn
