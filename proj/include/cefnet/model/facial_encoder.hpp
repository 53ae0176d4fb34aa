#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "cefnet/nn/layers.hpp"

namespace cefnet::model {

using ad::Tensor;
using nn::Rng;

/// Which block sits after the last DCNN layer. Conv3x3/Conv5x5 are the
/// matched-channel replacements used to compare against DACM.
enum class DirectionalBlock { Dacm, Conv3x3, Conv5x5 };

struct ConvLayerSpec {
  std::size_t channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t pad;
};

struct FacialEncoderConfig {
  // 7x7 stem followed by four 3x3 layers; max pooling after the stem.
  std::vector<ConvLayerSpec> layers{{32, 7, 2, 3}, {64, 3, 2, 1}, {64, 3, 2, 1}, {128, 3, 2, 1}, {128, 3, 1, 1}};
  std::size_t pool_kernel = 2;
  std::size_t pool_stride = 2;
  std::optional<DirectionalBlock> directional = DirectionalBlock::Dacm;
  std::size_t embed_dim = 128;
  std::size_t lstm_layers = 2;
};

/// Channel split into two halves: two stacked 1x3 conv-BN-ReLU stages on the
/// first half, two stacked 3x1 stages on the second, concatenated and added
/// back onto the input.
class Dacm : public nn::Module {
 public:
  Dacm(std::size_t channels, Rng& rng);

  struct Branches {
    Tensor s1, s2;
    Tensor s_h, s_v;
    Tensor s_cat;
  };

  Tensor forward(const Tensor& s_image);
  Branches branches(const Tensor& s_image);

  nn::Conv2d& horizontal_conv(std::size_t i) { return *h_conv_.at(i); }
  nn::Conv2d& vertical_conv(std::size_t i) { return *v_conv_.at(i); }
  nn::BatchNorm2d& horizontal_bn(std::size_t i) { return *h_bn_.at(i); }
  nn::BatchNorm2d& vertical_bn(std::size_t i) { return *v_bn_.at(i); }

 private:
  std::size_t channels_;
  std::vector<std::unique_ptr<nn::Conv2d>> h_conv_, v_conv_;
  std::vector<std::unique_ptr<nn::BatchNorm2d>> h_bn_, v_bn_;
};

/// Single k x k conv-BN-ReLU over all channels, with the same residual
/// connection as DACM.
class PlainConvBlock : public nn::Module {
 public:
  PlainConvBlock(std::size_t channels, std::size_t kernel, Rng& rng);
  Tensor forward(const Tensor& x);

 private:
  nn::Conv2d conv_;
  nn::BatchNorm2d bn_;
};

class FacialEncoder : public nn::Module {
 public:
  FacialEncoder(const FacialEncoderConfig& config, Rng& rng);

  /// frames[N, 3, H, W] -> per-frame maps [N, C, h, w]
  Tensor dcnn_forward(const Tensor& frames);
  Tensor directional_forward(const Tensor& maps);
  /// maps[B*T, C, h, w] -> [B, T, embed]
  Tensor temporal_encode(const Tensor& maps, std::size_t batch, std::size_t steps);
  /// frames[B, T, 3, H, W] -> S_img [B, T, embed]
  Tensor forward(const Tensor& frames);

  /// Output of the directional block from the last forward (Grad-CAM target).
  const Tensor& directional_output() const { return directional_output_; }
  void retain_directional_grad(bool on) { retain_directional_ = on; }
  bool has_directional_block() const { return config_.directional.has_value(); }

  /// Spatial size after each DCNN stage; throws naming the first layer that
  /// cannot be applied.
  std::vector<std::pair<std::size_t, std::size_t>> plan_shapes(std::size_t height, std::size_t width) const;

  nn::Conv2d& conv(std::size_t i) { return *convs_.at(i); }
  nn::BatchNorm2d& conv_bn(std::size_t i) { return *bns_.at(i); }
  Dacm* dacm() { return dacm_.get(); }
  nn::Lstm& lstm() { return *lstm_; }
  nn::Linear* projection() { return projection_.get(); }
  const FacialEncoderConfig& config() const { return config_; }

 private:
  FacialEncoderConfig config_;
  std::vector<std::unique_ptr<nn::Conv2d>> convs_;
  std::vector<std::unique_ptr<nn::BatchNorm2d>> bns_;
  std::unique_ptr<Dacm> dacm_;
  std::unique_ptr<PlainConvBlock> plain_;
  std::unique_ptr<nn::Linear> projection_;
  std::unique_ptr<nn::Lstm> lstm_;
  Tensor directional_output_;
  bool retain_directional_ = false;
};

}  // namespace cefnet::model
