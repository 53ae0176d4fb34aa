#include "cefnet/model/facial_encoder.hpp"

#include <stdexcept>
#include <string>

namespace cefnet::model {

Dacm::Dacm(std::size_t channels, Rng& rng) : channels_(channels) {
  if (channels % 2 != 0) throw std::invalid_argument("DACM needs an even channel count, got " + std::to_string(channels));
  const std::size_t half = channels / 2;
  for (std::size_t i = 0; i < 2; ++i) {
    h_conv_.push_back(std::make_unique<nn::Conv2d>(half, half, ad::Pair{1, 3}, ad::Pair{1, 1}, ad::Pair{0, 1}, rng, false));
    h_bn_.push_back(std::make_unique<nn::BatchNorm2d>(half));
    v_conv_.push_back(std::make_unique<nn::Conv2d>(half, half, ad::Pair{3, 1}, ad::Pair{1, 1}, ad::Pair{1, 0}, rng, false));
    v_bn_.push_back(std::make_unique<nn::BatchNorm2d>(half));
  }
  for (std::size_t i = 0; i < 2; ++i) {
    register_module("h_conv" + std::to_string(i), *h_conv_[i]);
    register_module("h_bn" + std::to_string(i), *h_bn_[i]);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    register_module("v_conv" + std::to_string(i), *v_conv_[i]);
    register_module("v_bn" + std::to_string(i), *v_bn_[i]);
  }
}

Dacm::Branches Dacm::branches(const Tensor& s_image) {
  if (s_image.ndim() != 4 || s_image.dim(1) != channels_) {
    throw std::invalid_argument("DACM expects [N, " + std::to_string(channels_) + ", H, W], got " +
                                ad::shape_str(s_image.shape()));
  }
  Branches b;
  std::tie(b.s1, b.s2) = ad::split_channels(s_image);
  b.s_h = b.s1;
  b.s_v = b.s2;
  for (std::size_t i = 0; i < 2; ++i) {
    b.s_h = ad::relu(h_bn_[i]->forward(h_conv_[i]->forward(b.s_h)));
    b.s_v = ad::relu(v_bn_[i]->forward(v_conv_[i]->forward(b.s_v)));
  }
  b.s_cat = ad::concat({b.s_h, b.s_v}, 1);
  return b;
}

Tensor Dacm::forward(const Tensor& s_image) { return ad::add(s_image, branches(s_image).s_cat); }

PlainConvBlock::PlainConvBlock(std::size_t channels, std::size_t kernel, Rng& rng)
    : conv_(channels, channels, {kernel, kernel}, {1, 1}, {kernel / 2, kernel / 2}, rng, false), bn_(channels) {
  register_module("conv", conv_);
  register_module("bn", bn_);
}

Tensor PlainConvBlock::forward(const Tensor& x) { return ad::add(x, ad::relu(bn_.forward(conv_.forward(x)))); }

FacialEncoder::FacialEncoder(const FacialEncoderConfig& config, Rng& rng) : config_(config) {
  if (config.layers.empty()) throw std::invalid_argument("facial encoder needs at least one conv layer");
  std::size_t in = 3;
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    convs_.push_back(std::make_unique<nn::Conv2d>(in, l.channels, ad::Pair{l.kernel, l.kernel},
                                                  ad::Pair{l.stride, l.stride}, ad::Pair{l.pad, l.pad}, rng, false));
    bns_.push_back(std::make_unique<nn::BatchNorm2d>(l.channels));
    register_module("conv" + std::to_string(i), *convs_.back());
    register_module("bn" + std::to_string(i), *bns_.back());
    in = l.channels;
  }
  if (config.directional) {
    switch (*config.directional) {
      case DirectionalBlock::Dacm:
        dacm_ = std::make_unique<Dacm>(in, rng);
        register_module("dacm", *dacm_);
        break;
      case DirectionalBlock::Conv3x3:
      case DirectionalBlock::Conv5x5:
        plain_ = std::make_unique<PlainConvBlock>(in, *config.directional == DirectionalBlock::Conv3x3 ? 3 : 5, rng);
        register_module("plain", *plain_);
        break;
    }
  }
  if (in != config.embed_dim) {
    projection_ = std::make_unique<nn::Linear>(in, config.embed_dim, rng);
    register_module("proj", *projection_);
  }
  lstm_ = std::make_unique<nn::Lstm>(config.embed_dim, config.embed_dim, config.lstm_layers, rng);
  register_module("lstm", *lstm_);
}

std::vector<std::pair<std::size_t, std::size_t>> FacialEncoder::plan_shapes(std::size_t height,
                                                                            std::size_t width) const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t h = height;
  std::size_t w = width;
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const auto& l = config_.layers[i];
    if (h + 2 * l.pad < l.kernel || w + 2 * l.pad < l.kernel) {
      throw std::invalid_argument("input " + std::to_string(height) + "x" + std::to_string(width) +
                                  " is too small for the stride plan: conv layer " + std::to_string(i + 1) + " (" +
                                  std::to_string(l.kernel) + "x" + std::to_string(l.kernel) + ") sees " +
                                  std::to_string(h) + "x" + std::to_string(w));
    }
    h = ad::conv_out_size(h, l.kernel, l.stride, l.pad);
    w = ad::conv_out_size(w, l.kernel, l.stride, l.pad);
    if (i == 0) {
      if (h < config_.pool_kernel || w < config_.pool_kernel) {
        throw std::invalid_argument("input " + std::to_string(height) + "x" + std::to_string(width) +
                                    " is too small for the stride plan: max-pool after conv layer 1 sees " +
                                    std::to_string(h) + "x" + std::to_string(w));
      }
      h = ad::conv_out_size(h, config_.pool_kernel, config_.pool_stride, 0);
      w = ad::conv_out_size(w, config_.pool_kernel, config_.pool_stride, 0);
    }
    out.emplace_back(h, w);
  }
  return out;
}

Tensor FacialEncoder::dcnn_forward(const Tensor& frames) {
  if (frames.ndim() != 4 || frames.dim(1) != 3) {
    throw std::invalid_argument("facial frames must be [N, 3, H, W], got " + ad::shape_str(frames.shape()));
  }
  plan_shapes(frames.dim(2), frames.dim(3));
  Tensor x = frames;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = ad::relu(bns_[i]->forward(convs_[i]->forward(x)));
    if (i == 0) {
      x = ad::max_pool2d(x, {config_.pool_kernel, config_.pool_kernel}, {config_.pool_stride, config_.pool_stride});
    }
  }
  return x;
}

Tensor FacialEncoder::directional_forward(const Tensor& maps) {
  Tensor out = maps;
  if (dacm_) out = dacm_->forward(maps);
  if (plain_) out = plain_->forward(maps);
  if (retain_directional_ && out.requires_grad()) out.retain_grad();
  directional_output_ = out;
  return out;
}

Tensor FacialEncoder::temporal_encode(const Tensor& maps, std::size_t batch, std::size_t steps) {
  if (maps.ndim() != 4 || maps.dim(0) != batch * steps) {
    throw std::invalid_argument("temporal_encode: expected " + std::to_string(batch * steps) + " frame maps, got " +
                                ad::shape_str(maps.shape()));
  }
  Tensor v = ad::reshape(ad::global_avg_pool2d(maps), {batch, steps, maps.dim(1)});
  if (projection_) v = projection_->forward(v);
  return lstm_->forward(v);
}

Tensor FacialEncoder::forward(const Tensor& frames) {
  if (frames.ndim() != 5) {
    throw std::invalid_argument("facial input must be [B, T, 3, H, W], got " + ad::shape_str(frames.shape()));
  }
  const std::size_t b = frames.dim(0);
  const std::size_t t = frames.dim(1);
  Tensor flat = ad::reshape(frames, {b * t, frames.dim(2), frames.dim(3), frames.dim(4)});
  return temporal_encode(directional_forward(dcnn_forward(flat)), b, t);
}

}  // namespace cefnet::model
