#include "cefnet/model/eye_encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cefnet::model {

Tensor positional_encoding(std::size_t length, std::size_t width) {
  if (width % 2 != 0) throw std::invalid_argument("positional encoding width must be even, got " + std::to_string(width));
  Tensor pe = Tensor::zeros({length, width});
  auto p = pe.data();
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < width / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * freq;
      p[pos * width + 2 * i] = std::sin(angle);
      p[pos * width + 2 * i + 1] = std::cos(angle);
    }
  }
  return pe;
}

EncoderLayer::EncoderLayer(std::size_t embed, std::size_t heads, std::size_t ff, Rng& rng)
    : attn_(embed, heads, rng), norm1_(embed), ff1_(embed, ff, rng), ff2_(ff, embed, rng), norm2_(embed) {
  register_module("attn", attn_);
  register_module("norm1", norm1_);
  register_module("ff1", ff1_);
  register_module("ff2", ff2_);
  register_module("norm2", norm2_);
}

Tensor EncoderLayer::forward(const Tensor& x) {
  Tensor h = norm1_.forward(ad::add(x, attn_.forward(x, x)));
  return norm2_.forward(ad::add(h, ff2_.forward(ad::relu(ff1_.forward(h)))));
}

EyeEncoder::EyeEncoder(const EyeEncoderConfig& config, Rng& rng)
    : config_(config), input_proj_(config.input_dim, config.embed_dim, rng) {
  if (config.positional && config.embed_dim % 2 != 0) {
    throw std::invalid_argument("eye encoder width must be even for positional encoding");
  }
  register_module("input_proj", input_proj_);
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    layers_.push_back(std::make_unique<EncoderLayer>(config.embed_dim, config.num_heads, config.ff_dim, rng));
    register_module("layer" + std::to_string(i), *layers_.back());
  }
}

Tensor EyeEncoder::forward(const Tensor& x) {
  if (x.ndim() != 3 || x.dim(2) != config_.input_dim) {
    throw std::invalid_argument("eye input must be [B, M, " + std::to_string(config_.input_dim) + "], got " +
                                ad::shape_str(x.shape()));
  }
  Tensor h = input_proj_.forward(x);
  if (config_.positional) h = ad::add(h, positional_encoding(x.dim(1), config_.embed_dim));
  for (auto& layer : layers_) h = layer->forward(h);
  return h;
}

}  // namespace cefnet::model
