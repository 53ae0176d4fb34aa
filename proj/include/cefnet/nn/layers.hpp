#pragma once

#include <vector>

#include "cefnet/nn/module.hpp"

namespace cefnet::nn {

class Conv2d : public Module {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, ad::Pair kernel, ad::Pair stride, ad::Pair pad, Rng& rng,
         bool with_bias = true);
  Tensor forward(const Tensor& x) const;

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  ad::Pair kernel() const { return kernel_; }
  ad::Pair stride() const { return stride_; }
  ad::Pair pad() const { return pad_; }
  std::size_t out_channels() const { return weight_.dim(0); }

 private:
  ad::Pair kernel_, stride_, pad_;
  Tensor weight_;
  Tensor bias_;
};

class BatchNorm2d : public Module {
 public:
  explicit BatchNorm2d(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x);

  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  const ad::BatchNormStats& stats() const { return stats_; }

 private:
  Tensor gamma_;
  Tensor beta_;
  ad::BatchNormStats stats_;
};

class Linear : public Module {
 public:
  Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  Tensor forward(const Tensor& x) const { return ad::linear(x, weight_, bias_); }

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }

 private:
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm : public Module {
 public:
  explicit LayerNorm(std::size_t width, double eps = 1e-5);
  Tensor forward(const Tensor& x) const { return ad::layer_norm(x, gamma_, beta_, eps_); }

  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }

 private:
  Tensor gamma_;
  Tensor beta_;
  double eps_;
};

/// Stacked LSTM; zero initial state on every call.
class Lstm : public Module {
 public:
  Lstm(std::size_t input_size, std::size_t hidden_size, std::size_t num_layers, Rng& rng);
  /// [B, T, Din] -> [B, T, H] (top layer, every step)
  Tensor forward(const Tensor& x) const;

  struct LayerParams {
    Tensor w_input;
    Tensor w_hidden;
    Tensor bias;
  };
  std::vector<LayerParams>& layers() { return layers_; }
  std::size_t hidden_size() const { return hidden_; }
  std::size_t input_size() const { return input_; }

 private:
  std::size_t input_;
  std::size_t hidden_;
  std::vector<LayerParams> layers_;
};

/// Multi-head attention with per-head query/key/value projections
/// [embed, d_k] and an output projection [embed, embed], no biases.
class MultiHeadAttention : public Module {
 public:
  MultiHeadAttention(std::size_t embed_dim, std::size_t num_heads, Rng& rng);

  /// query[B, Tq, E], context[B, Tk, E] -> [B, Tq, E]
  Tensor forward(const Tensor& query, const Tensor& context);

  std::size_t embed_dim() const { return embed_; }
  std::size_t num_heads() const { return heads_; }
  std::size_t head_dim() const { return embed_ / heads_; }

  Tensor& w_query(std::size_t head) { return wq_.at(head); }
  Tensor& w_key(std::size_t head) { return wk_.at(head); }
  Tensor& w_value(std::size_t head) { return wv_.at(head); }
  Tensor& w_out() { return wo_; }

  /// Attention weights [B, Tq, Tk] per head from the most recent forward.
  const std::vector<Tensor>& last_attention() const { return last_attention_; }

 private:
  std::size_t embed_;
  std::size_t heads_;
  std::vector<Tensor> wq_, wk_, wv_;
  Tensor wo_;
  std::vector<Tensor> last_attention_;
};

}  // namespace cefnet::nn
