#pragma once

#include <memory>
#include <vector>

#include "cefnet/nn/layers.hpp"

namespace cefnet::model {

using ad::Tensor;
using nn::Rng;

/// Fixed sinusoidal table [length, width]: even columns sin, odd columns cos,
/// frequency 1 / 10000^(2i / width).
Tensor positional_encoding(std::size_t length, std::size_t width);

struct EyeEncoderConfig {
  std::size_t input_dim = 6;
  std::size_t embed_dim = 128;
  std::size_t num_heads = 2;
  std::size_t num_layers = 2;
  std::size_t ff_dim = 256;
  bool positional = true;
};

/// Post-norm encoder layer: LN(x + MHA(x, x)), then LN(h + FF(h)).
class EncoderLayer : public nn::Module {
 public:
  EncoderLayer(std::size_t embed, std::size_t heads, std::size_t ff, Rng& rng);
  Tensor forward(const Tensor& x);

  nn::MultiHeadAttention& attention() { return attn_; }

 private:
  nn::MultiHeadAttention attn_;
  nn::LayerNorm norm1_;
  nn::Linear ff1_, ff2_;
  nn::LayerNorm norm2_;
};

class EyeEncoder : public nn::Module {
 public:
  EyeEncoder(const EyeEncoderConfig& config, Rng& rng);

  /// x[B, M, input_dim] -> S_eye [B, M, embed]
  Tensor forward(const Tensor& x);

  EncoderLayer& layer(std::size_t i) { return *layers_.at(i); }
  std::size_t num_layers() const { return layers_.size(); }
  nn::Linear& input_projection() { return input_proj_; }
  const EyeEncoderConfig& config() const { return config_; }

 private:
  EyeEncoderConfig config_;
  nn::Linear input_proj_;
  std::vector<std::unique_ptr<EncoderLayer>> layers_;
};

}  // namespace cefnet::model
