#pragma once

#include <memory>
#include <optional>
#include <string>

#include "cefnet/model/eye_encoder.hpp"
#include "cefnet/model/facial_encoder.hpp"

namespace cefnet::model {

/// Which modality supplies the query. FaceToEye: Q from S_img, K/V from S_eye.
enum class GuidanceMode { FaceToEye, EyeToFace, Bidirectional };
enum class Modality { EyeAndFace, EyeOnly, FaceOnly };

// Class indices; AD is the positive class.
inline constexpr int kLabelHC = 0;
inline constexpr int kLabelAD = 1;

struct FusionConfig {
  Modality modality = Modality::EyeAndFace;
  std::optional<GuidanceMode> guidance_mode = GuidanceMode::FaceToEye;
  std::size_t num_heads = 2;
  std::size_t embed_dim = 128;
  bool global_enhancement = true;
  bool use_dacm = true;
  bool use_cefam = true;
  DirectionalBlock directional_block = DirectionalBlock::Dacm;
  std::size_t classifier_hidden = 64;
  double dropout_rate = 0.5;

  FacialEncoderConfig face;  // embed_dim and directional are overwritten from the fields above
  EyeEncoderConfig eye;      // embed_dim is overwritten

  /// Throws std::invalid_argument describing the first inconsistency.
  void validate() const;
  std::size_t head_dim() const { return embed_dim / num_heads; }
  /// Width of the vector entering the classifier.
  std::size_t classifier_input() const;
  std::string describe() const;
};

std::string to_string(GuidanceMode mode);
std::string to_string(Modality modality);
std::string to_string(DirectionalBlock block);

/// Multi-head cross-attention of query[B, Tq, E] over kv[B, Tk, E].
Tensor cross_attention(const Tensor& query, const Tensor& kv, nn::MultiHeadAttention& attn);
/// LayerNorm(attn + query_origin); shapes must match.
Tensor residual_fuse(const Tensor& attn, const Tensor& query_origin, const nn::LayerNorm& norm);
/// Mean plus max over the token axis: [..., T, E] -> [..., E].
Tensor global_enhance(const Tensor& s_eye);

/// Cross-attention followed by the query-side residual and LayerNorm.
class CrossModalBlock : public nn::Module {
 public:
  CrossModalBlock(std::size_t embed, std::size_t heads, Rng& rng);
  Tensor forward(const Tensor& query, const Tensor& kv);

  nn::MultiHeadAttention& attention() { return attn_; }
  nn::LayerNorm& norm() { return norm_; }

 private:
  nn::MultiHeadAttention attn_;
  nn::LayerNorm norm_;
};

/// FC1 -> ReLU -> dropout -> FC2, producing two logits.
class Classifier : public nn::Module {
 public:
  Classifier(std::size_t in, std::size_t hidden, double dropout_rate, Rng& rng);
  Tensor forward(const Tensor& x);

  nn::Linear& fc1() { return fc1_; }
  nn::Linear& fc2() { return fc2_; }
  Rng& dropout_rng() { return dropout_rng_; }

 private:
  nn::Linear fc1_, fc2_;
  double rate_;
  Rng dropout_rng_;
};

struct Encoded {
  Tensor s_img;  // [B, T, E] or undefined
  Tensor s_eye;  // [B, M, E] or undefined
};

class FusionNetwork : public nn::Module {
 public:
  FusionNetwork(const FusionConfig& config, Rng& rng);

  /// frames[B, T, 3, H, W], eye[B, M, 6]; the unused modality may be undefined.
  Encoded encode(const Tensor& frames, const Tensor& eye);
  /// Fused sequence for the configured guidance mode (CEFAM variants only).
  Tensor fuse(const Tensor& s_img, const Tensor& s_eye);
  /// Pooled features -> logits [B, 2].
  Tensor head(const Encoded& enc);
  Tensor forward(const Tensor& frames, const Tensor& eye) { return head(encode(frames, eye)); }

  const FusionConfig& config() const { return config_; }
  bool uses_face() const { return config_.modality != Modality::EyeOnly; }
  bool uses_eye() const { return config_.modality != Modality::FaceOnly; }
  FacialEncoder* facial() { return facial_.get(); }
  EyeEncoder* eye() { return eye_.get(); }
  /// 0: the configured direction (or face->eye in bidirectional mode); 1: eye->face in bidirectional mode.
  CrossModalBlock* cross(std::size_t i = 0) { return i == 0 ? cross_.get() : cross_reverse_.get(); }
  Classifier& classifier() { return *classifier_; }

 private:
  FusionConfig config_;
  std::unique_ptr<FacialEncoder> facial_;
  std::unique_ptr<EyeEncoder> eye_;
  std::unique_ptr<CrossModalBlock> cross_;
  std::unique_ptr<CrossModalBlock> cross_reverse_;
  std::unique_ptr<Classifier> classifier_;
};

std::unique_ptr<FusionNetwork> build_model(const FusionConfig& config, Rng& rng);

/// Softmax over the class axis of logits[B, 2].
Tensor class_probabilities(const Tensor& logits);

}  // namespace cefnet::model
