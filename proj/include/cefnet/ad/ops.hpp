#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "cefnet/ad/tensor.hpp"

namespace cefnet::ad {

using Rng = std::mt19937_64;

struct Pair {
  std::size_t h = 1;
  std::size_t w = 1;
};

// Elementwise and structural ops. `add` broadcasts b over the leading axes
// of a when b's shape is a suffix of a's shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor max(const Tensor& a, std::size_t axis);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor transpose_last2(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
std::pair<Tensor, Tensor> split_channels(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// a[..., M, K] x b[K, N] (shared right operand) or a[..., M, K] x b[..., K, N]
/// with identical leading axes.
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] * weight[in, out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& a, std::size_t axis);
/// Normalises over the last axis. gamma/beta may be undefined (no affine).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

struct BatchNormStats {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// x[N, C, H, W]. Training mode normalises with batch statistics and updates
/// the running estimates; eval mode uses the running estimates.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                    bool training);

/// input[B, Cin, H, W], weight[Cout, Cin, kh, kw], bias[Cout] (may be undefined).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Pair stride, Pair pad);
std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

Tensor max_pool2d(const Tensor& input, Pair kernel, Pair stride);
/// [N, C, H, W] -> [N, C]
Tensor global_avg_pool2d(const Tensor& input);
Tensor global_max_pool2d(const Tensor& input);

/// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

/// Mean cross-entropy of logits[B, C] against integer labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// One LSTM layer over x[B, T, Din] with zero initial state. Gate blocks in
/// w_input[Din, 4H], w_hidden[H, 4H] and bias[4H] are ordered (i, f, g, o).
/// Returns the hidden state at every step, [B, T, H].
Tensor lstm_layer(const Tensor& x, const Tensor& w_input, const Tensor& w_hidden, const Tensor& bias);

}  // namespace cefnet::ad
