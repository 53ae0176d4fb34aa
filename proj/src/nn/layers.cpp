#include "cefnet/nn/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cefnet::nn {

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, ad::Pair kernel, ad::Pair stride, ad::Pair pad,
               Rng& rng, bool with_bias)
    : kernel_(kernel), stride_(stride), pad_(pad) {
  const std::size_t fan_in = in_channels * kernel.h * kernel.w;
  weight_ = register_parameter("weight", fan_in_uniform({out_channels, in_channels, kernel.h, kernel.w}, fan_in, rng));
  if (with_bias) bias_ = register_parameter("bias", fan_in_uniform({out_channels}, fan_in, rng));
}

Tensor Conv2d::forward(const Tensor& x) const { return ad::conv2d(x, weight_, bias_, stride_, pad_); }

BatchNorm2d::BatchNorm2d(std::size_t channels, double momentum, double eps) {
  gamma_ = register_parameter("gamma", Tensor::full({channels}, 1.0));
  beta_ = register_parameter("beta", Tensor::zeros({channels}));
  stats_.momentum = momentum;
  stats_.eps = eps;
  stats_.running_mean.assign(channels, 0.0);
  stats_.running_var.assign(channels, 1.0);
  register_buffer("running_mean", stats_.running_mean);
  register_buffer("running_var", stats_.running_var);
}

Tensor BatchNorm2d::forward(const Tensor& x) { return ad::batch_norm2d(x, gamma_, beta_, stats_, training()); }

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  weight_ = register_parameter("weight", fan_in_uniform({in, out}, in, rng));
  if (with_bias) bias_ = register_parameter("bias", fan_in_uniform({out}, in, rng));
}

LayerNorm::LayerNorm(std::size_t width, double eps) : eps_(eps) {
  gamma_ = register_parameter("gamma", Tensor::full({width}, 1.0));
  beta_ = register_parameter("beta", Tensor::zeros({width}));
}

Lstm::Lstm(std::size_t input_size, std::size_t hidden_size, std::size_t num_layers, Rng& rng)
    : input_(input_size), hidden_(hidden_size) {
  if (num_layers == 0) throw std::invalid_argument("lstm needs at least one layer");
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::size_t din = l == 0 ? input_size : hidden_size;
    const std::string p = "l" + std::to_string(l) + ".";
    LayerParams lp;
    lp.w_input = register_parameter(p + "w_input", fan_in_uniform({din, 4 * hidden_size}, hidden_size, rng));
    lp.w_hidden = register_parameter(p + "w_hidden", fan_in_uniform({hidden_size, 4 * hidden_size}, hidden_size, rng));
    lp.bias = register_parameter(p + "bias", fan_in_uniform({4 * hidden_size}, hidden_size, rng));
    layers_.push_back(lp);
  }
}

Tensor Lstm::forward(const Tensor& x) const {
  Tensor h = x;
  for (const auto& lp : layers_) h = ad::lstm_layer(h, lp.w_input, lp.w_hidden, lp.bias);
  return h;
}

MultiHeadAttention::MultiHeadAttention(std::size_t embed_dim, std::size_t num_heads, Rng& rng)
    : embed_(embed_dim), heads_(num_heads) {
  if (num_heads == 0 || embed_dim % num_heads != 0) {
    throw std::invalid_argument("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
                                std::to_string(num_heads));
  }
  const std::size_t dk = embed_dim / num_heads;
  for (std::size_t i = 0; i < num_heads; ++i) {
    const std::string p = "head" + std::to_string(i) + ".";
    wq_.push_back(register_parameter(p + "w_query", fan_in_uniform({embed_dim, dk}, embed_dim, rng)));
    wk_.push_back(register_parameter(p + "w_key", fan_in_uniform({embed_dim, dk}, embed_dim, rng)));
    wv_.push_back(register_parameter(p + "w_value", fan_in_uniform({embed_dim, dk}, embed_dim, rng)));
  }
  wo_ = register_parameter("w_out", fan_in_uniform({embed_dim, embed_dim}, embed_dim, rng));
}

Tensor MultiHeadAttention::forward(const Tensor& query, const Tensor& context) {
  if (query.ndim() != 3 || context.ndim() != 3) {
    throw std::invalid_argument("attention inputs must be [B, T, E], got " + ad::shape_str(query.shape()) + " and " +
                                ad::shape_str(context.shape()));
  }
  if (query.dim(2) != embed_ || context.dim(2) != embed_) {
    throw std::invalid_argument("attention width mismatch: query " + std::to_string(query.dim(2)) + ", context " +
                                std::to_string(context.dim(2)) + ", expected " + std::to_string(embed_));
  }
  if (query.dim(0) != context.dim(0)) throw std::invalid_argument("attention batch sizes differ");
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(head_dim()));
  std::vector<Tensor> heads;
  last_attention_.clear();
  for (std::size_t i = 0; i < heads_; ++i) {
    Tensor q = ad::matmul(query, wq_[i]);
    Tensor k = ad::matmul(context, wk_[i]);
    Tensor v = ad::matmul(context, wv_[i]);
    Tensor scores = ad::scale(ad::matmul(q, ad::transpose_last2(k)), inv_sqrt_dk);
    Tensor weights = ad::softmax(scores, 2);
    last_attention_.push_back(weights);
    heads.push_back(ad::matmul(weights, v));
  }
  Tensor joined = heads.size() == 1 ? heads[0] : ad::concat(heads, 2);
  return ad::matmul(joined, wo_);
}

}  // namespace cefnet::nn
