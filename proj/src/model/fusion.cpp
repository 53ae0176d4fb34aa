#include "cefnet/model/fusion.hpp"

#include <sstream>
#include <stdexcept>

namespace cefnet::model {

namespace {
[[noreturn]] void reject(const std::string& why) { throw std::invalid_argument("inconsistent model config: " + why); }
}  // namespace

std::string to_string(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::FaceToEye: return "face_to_eye";
    case GuidanceMode::EyeToFace: return "eye_to_face";
    case GuidanceMode::Bidirectional: return "bidirectional";
  }
  return "?";
}

std::string to_string(Modality modality) {
  switch (modality) {
    case Modality::EyeAndFace: return "eye_and_face";
    case Modality::EyeOnly: return "eye_only";
    case Modality::FaceOnly: return "face_only";
  }
  return "?";
}

std::string to_string(DirectionalBlock block) {
  switch (block) {
    case DirectionalBlock::Dacm: return "dacm";
    case DirectionalBlock::Conv3x3: return "conv3x3";
    case DirectionalBlock::Conv5x5: return "conv5x5";
  }
  return "?";
}

void FusionConfig::validate() const {
  if (num_heads == 0 || embed_dim % num_heads != 0) {
    reject("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (classifier_hidden == 0) reject("classifier_hidden must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) reject("dropout_rate must be in [0, 1)");
  if (use_cefam && !guidance_mode) reject("use_cefam requires a guidance mode");
  if (!use_cefam && guidance_mode) reject("guidance mode set while use_cefam is false");
  if (global_enhancement && !use_cefam) reject("global_enhancement requires use_cefam");
  if (global_enhancement && guidance_mode == GuidanceMode::Bidirectional) {
    reject("global_enhancement is not defined for bidirectional guidance");
  }
  if (modality != Modality::EyeAndFace && use_cefam) reject("a single-modality model cannot use cross attention");
  if (modality == Modality::EyeOnly && use_dacm) reject("use_dacm needs the facial branch");
}

std::size_t FusionConfig::classifier_input() const {
  if (modality != Modality::EyeAndFace) return embed_dim;
  if (!use_cefam) return 2 * embed_dim;
  if (guidance_mode == GuidanceMode::Bidirectional) return 2 * embed_dim;
  return global_enhancement ? 2 * embed_dim : embed_dim;
}

std::string FusionConfig::describe() const {
  std::ostringstream os;
  os << "modality=" << to_string(modality) << " dacm=" << (use_dacm ? to_string(directional_block) : "off")
     << " cefam=" << (use_cefam ? to_string(*guidance_mode) : "off") << " global=" << (global_enhancement ? "on" : "off")
     << " heads=" << num_heads << " embed=" << embed_dim;
  return os.str();
}

Tensor cross_attention(const Tensor& query, const Tensor& kv, nn::MultiHeadAttention& attn) {
  return attn.forward(query, kv);
}

Tensor residual_fuse(const Tensor& attn, const Tensor& query_origin, const nn::LayerNorm& norm) {
  if (attn.shape() != query_origin.shape()) {
    throw std::invalid_argument("residual_fuse: shapes differ, " + ad::shape_str(attn.shape()) + " vs " +
                                ad::shape_str(query_origin.shape()));
  }
  return norm.forward(ad::add(attn, query_origin));
}

Tensor global_enhance(const Tensor& s_eye) {
  if (s_eye.ndim() < 2) throw std::invalid_argument("global_enhance needs [..., T, E], got " + ad::shape_str(s_eye.shape()));
  const std::size_t axis = s_eye.ndim() - 2;
  return ad::add(ad::mean(s_eye, axis), ad::max(s_eye, axis));
}

CrossModalBlock::CrossModalBlock(std::size_t embed, std::size_t heads, Rng& rng) : attn_(embed, heads, rng), norm_(embed) {
  register_module("attn", attn_);
  register_module("norm", norm_);
}

Tensor CrossModalBlock::forward(const Tensor& query, const Tensor& kv) {
  return residual_fuse(cross_attention(query, kv, attn_), query, norm_);
}

Classifier::Classifier(std::size_t in, std::size_t hidden, double dropout_rate, Rng& rng)
    : fc1_(in, hidden, rng), fc2_(hidden, 2, rng), rate_(dropout_rate), dropout_rng_(rng()) {
  register_module("fc1", fc1_);
  register_module("fc2", fc2_);
}

Tensor Classifier::forward(const Tensor& x) {
  if (x.ndim() != 2 || x.dim(1) != fc1_.in_features()) {
    throw std::invalid_argument("classifier expects [B, " + std::to_string(fc1_.in_features()) + "], got " +
                                ad::shape_str(x.shape()));
  }
  return fc2_.forward(ad::dropout(ad::relu(fc1_.forward(x)), rate_, training(), dropout_rng_));
}

FusionNetwork::FusionNetwork(const FusionConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  if (uses_face()) {
    FacialEncoderConfig fc = config_.face;
    fc.embed_dim = config_.embed_dim;
    fc.directional = config_.use_dacm ? std::optional<DirectionalBlock>(config_.directional_block) : std::nullopt;
    config_.face = fc;
    facial_ = std::make_unique<FacialEncoder>(fc, rng);
    register_module("face", *facial_);
  }
  if (uses_eye()) {
    EyeEncoderConfig ec = config_.eye;
    ec.embed_dim = config_.embed_dim;
    config_.eye = ec;
    eye_ = std::make_unique<EyeEncoder>(ec, rng);
    register_module("eye", *eye_);
  }
  if (config_.use_cefam) {
    cross_ = std::make_unique<CrossModalBlock>(config_.embed_dim, config_.num_heads, rng);
    register_module("cefam", *cross_);
    if (config_.guidance_mode == GuidanceMode::Bidirectional) {
      cross_reverse_ = std::make_unique<CrossModalBlock>(config_.embed_dim, config_.num_heads, rng);
      register_module("cefam_reverse", *cross_reverse_);
    }
  }
  classifier_ = std::make_unique<Classifier>(config_.classifier_input(), config_.classifier_hidden,
                                             config_.dropout_rate, rng);
  register_module("classifier", *classifier_);
}

Encoded FusionNetwork::encode(const Tensor& frames, const Tensor& eye) {
  Encoded enc;
  if (uses_face()) {
    if (!frames.defined()) throw std::invalid_argument("model needs facial frames");
    enc.s_img = facial_->forward(frames);
  }
  if (uses_eye()) {
    if (!eye.defined()) throw std::invalid_argument("model needs an eye sequence");
    enc.s_eye = eye_->forward(eye);
  }
  if (enc.s_img.defined() && enc.s_eye.defined() && enc.s_img.dim(0) != enc.s_eye.dim(0)) {
    throw std::invalid_argument("facial and eye batches differ");
  }
  return enc;
}

Tensor FusionNetwork::fuse(const Tensor& s_img, const Tensor& s_eye) {
  if (!cross_) throw std::logic_error("fuse called on a model without cross attention");
  switch (*config_.guidance_mode) {
    case GuidanceMode::FaceToEye: return cross_->forward(s_img, s_eye);
    case GuidanceMode::EyeToFace: return cross_->forward(s_eye, s_img);
    case GuidanceMode::Bidirectional: break;
  }
  // Per-direction residuals, pooled then concatenated along features.
  Tensor a = ad::mean(cross_->forward(s_img, s_eye), 1);
  Tensor b = ad::mean(cross_reverse_->forward(s_eye, s_img), 1);
  return ad::concat({a, b}, 1);
}

Tensor FusionNetwork::head(const Encoded& enc) {
  Tensor features;
  if (config_.modality == Modality::FaceOnly) {
    features = ad::mean(enc.s_img, 1);
  } else if (config_.modality == Modality::EyeOnly) {
    features = ad::mean(enc.s_eye, 1);
  } else if (!config_.use_cefam) {
    features = ad::concat({ad::mean(enc.s_img, 1), ad::mean(enc.s_eye, 1)}, 1);
  } else if (config_.guidance_mode == GuidanceMode::Bidirectional) {
    features = fuse(enc.s_img, enc.s_eye);
  } else {
    features = ad::mean(fuse(enc.s_img, enc.s_eye), 1);
    if (config_.global_enhancement) features = ad::concat({features, global_enhance(enc.s_eye)}, 1);
  }
  return classifier_->forward(features);
}

std::unique_ptr<FusionNetwork> build_model(const FusionConfig& config, Rng& rng) {
  return std::make_unique<FusionNetwork>(config, rng);
}

Tensor class_probabilities(const Tensor& logits) { return ad::softmax(logits, logits.ndim() - 1); }

}  // namespace cefnet::model
