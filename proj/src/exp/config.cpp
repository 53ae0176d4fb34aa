#include "cefnet/exp/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace cefnet::exp {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw std::invalid_argument("config section '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw std::invalid_argument("unknown key '" + section + "." + key + "'");
}

template <typename T>
void take(const json& obj, const char* key, T& field) {
  if (obj.contains(key)) field = obj.at(key).get<T>();
}

}  // namespace

model::GuidanceMode parse_guidance(const std::string& s) {
  for (auto m : {model::GuidanceMode::FaceToEye, model::GuidanceMode::EyeToFace, model::GuidanceMode::Bidirectional})
    if (model::to_string(m) == s) return m;
  throw std::invalid_argument("unknown guidance mode '" + s + "' (face_to_eye, eye_to_face, bidirectional)");
}

model::Modality parse_modality(const std::string& s) {
  for (auto m : {model::Modality::EyeAndFace, model::Modality::EyeOnly, model::Modality::FaceOnly})
    if (model::to_string(m) == s) return m;
  throw std::invalid_argument("unknown modality '" + s + "' (eye_and_face, eye_only, face_only)");
}

model::DirectionalBlock parse_directional(const std::string& s) {
  for (auto b : {model::DirectionalBlock::Dacm, model::DirectionalBlock::Conv3x3, model::DirectionalBlock::Conv5x5})
    if (model::to_string(b) == s) return b;
  throw std::invalid_argument("unknown directional block '" + s + "' (dacm, conv3x3, conv5x5)");
}

ExperimentConfig default_config(bool desk_scale) {
  ExperimentConfig c;
  if (desk_scale) {
    c.train = TrainConfig::desk_scale();
    apply_desk_scale(c.model);
    c.synthetic = data::preset("strong");
  }
  c.synthetic.image_size = c.train.image_size;
  c.synthetic.participants_per_class = c.train.participants_per_class;
  return c;
}

void apply_json(ExperimentConfig& cfg, const json& doc) {
  check_keys(doc, "<root>", {"model", "train", "synthetic"});
  if (doc.contains("model")) {
    const json& m = doc.at("model");
    check_keys(m, "model", {"modality", "guidance_mode", "num_heads", "embed_dim", "global_enhancement", "use_dacm",
                            "use_cefam", "directional_block", "classifier_hidden", "dropout_rate", "face_channels",
                            "lstm_layers", "eye_layers", "eye_heads", "eye_ff_dim", "positional_encoding"});
    auto& f = cfg.model;
    if (m.contains("modality")) f.modality = parse_modality(m.at("modality").get<std::string>());
    if (m.contains("guidance_mode")) {
      if (m.at("guidance_mode").is_null())
        f.guidance_mode.reset();
      else
        f.guidance_mode = parse_guidance(m.at("guidance_mode").get<std::string>());
    }
    take(m, "num_heads", f.num_heads);
    take(m, "embed_dim", f.embed_dim);
    take(m, "global_enhancement", f.global_enhancement);
    take(m, "use_dacm", f.use_dacm);
    take(m, "use_cefam", f.use_cefam);
    if (m.contains("directional_block")) f.directional_block = parse_directional(m.at("directional_block").get<std::string>());
    take(m, "classifier_hidden", f.classifier_hidden);
    take(m, "dropout_rate", f.dropout_rate);
    if (m.contains("face_channels")) {
      auto ch = m.at("face_channels").get<std::vector<std::size_t>>();
      if (ch.size() != f.face.layers.size()) {
        throw std::invalid_argument("model.face_channels needs " + std::to_string(f.face.layers.size()) + " entries");
      }
      for (std::size_t i = 0; i < ch.size(); ++i) f.face.layers[i].channels = ch[i];
    }
    take(m, "lstm_layers", f.face.lstm_layers);
    take(m, "eye_layers", f.eye.num_layers);
    take(m, "eye_heads", f.eye.num_heads);
    take(m, "eye_ff_dim", f.eye.ff_dim);
    take(m, "positional_encoding", f.eye.positional);
    // A config that only turns CEFAM off should not also have to clear its dependants.
    if (m.contains("use_cefam") && !f.use_cefam) {
      if (!m.contains("guidance_mode")) f.guidance_mode.reset();
      if (!m.contains("global_enhancement")) f.global_enhancement = false;
    }
  }
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    check_keys(t, "train", {"batch_size", "max_epochs", "lr", "dropout", "patience", "seed", "folds", "image_size",
                            "participants_per_class", "jobs"});
    auto& c = cfg.train;
    take(t, "batch_size", c.batch_size);
    take(t, "max_epochs", c.max_epochs);
    take(t, "lr", c.lr);
    take(t, "dropout", c.dropout);
    take(t, "patience", c.patience);
    take(t, "seed", c.seed);
    take(t, "folds", c.folds);
    take(t, "image_size", c.image_size);
    take(t, "participants_per_class", c.participants_per_class);
    take(t, "jobs", c.jobs);
    cfg.synthetic.image_size = c.image_size;
    cfg.synthetic.participants_per_class = c.participants_per_class;
  }
  if (doc.contains("synthetic")) {
    const json& s = doc.at("synthetic");
    check_keys(s, "synthetic", {"preset", "participants_per_class", "image_size", "dispersion_ratio",
                                "fixation_shift_ms", "pupil_variance_shift", "asymmetry", "texture_damping",
                                "difficulty_gain", "noise", "shuffle_labels", "seed"});
    auto& p = cfg.synthetic;
    if (s.contains("preset")) {
      const auto keep_n = p.participants_per_class;
      const auto keep_size = p.image_size;
      p = data::preset(s.at("preset").get<std::string>());
      p.participants_per_class = keep_n;
      p.image_size = keep_size;
    }
    take(s, "participants_per_class", p.participants_per_class);
    take(s, "image_size", p.image_size);
    take(s, "dispersion_ratio", p.dispersion_ratio);
    take(s, "fixation_shift_ms", p.fixation_shift_ms);
    take(s, "pupil_variance_shift", p.pupil_variance_shift);
    take(s, "asymmetry", p.asymmetry);
    take(s, "texture_damping", p.texture_damping);
    take(s, "difficulty_gain", p.difficulty_gain);
    take(s, "noise", p.noise);
    take(s, "shuffle_labels", p.shuffle_labels);
    take(s, "seed", p.seed);
  }
  cfg.model.validate();
  cfg.train.validate();
  cfg.synthetic.validate();
}

ExperimentConfig load_config(const std::filesystem::path& path, bool desk_scale) {
  ExperimentConfig cfg = default_config(desk_scale);
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  apply_json(cfg, doc);
  return cfg;
}

json to_json(const ExperimentConfig& c) {
  std::vector<std::size_t> channels;
  for (const auto& l : c.model.face.layers) channels.push_back(l.channels);
  const auto& m = c.model;
  return json{
      {"model",
       {{"modality", model::to_string(m.modality)},
        {"guidance_mode", m.guidance_mode ? json(model::to_string(*m.guidance_mode)) : json(nullptr)},
        {"num_heads", m.num_heads},
        {"embed_dim", m.embed_dim},
        {"global_enhancement", m.global_enhancement},
        {"use_dacm", m.use_dacm},
        {"use_cefam", m.use_cefam},
        {"directional_block", model::to_string(m.directional_block)},
        {"classifier_hidden", m.classifier_hidden},
        {"dropout_rate", m.dropout_rate},
        {"face_channels", channels},
        {"lstm_layers", m.face.lstm_layers},
        {"eye_layers", m.eye.num_layers},
        {"eye_heads", m.eye.num_heads},
        {"eye_ff_dim", m.eye.ff_dim},
        {"positional_encoding", m.eye.positional}}},
      {"train",
       {{"batch_size", c.train.batch_size},
        {"max_epochs", c.train.max_epochs},
        {"lr", c.train.lr},
        {"dropout", c.train.dropout},
        {"patience", c.train.patience},
        {"seed", c.train.seed},
        {"folds", c.train.folds},
        {"image_size", c.train.image_size},
        {"participants_per_class", c.train.participants_per_class},
        {"jobs", c.train.jobs}}},
      {"synthetic",
       {{"participants_per_class", c.synthetic.participants_per_class},
        {"image_size", c.synthetic.image_size},
        {"dispersion_ratio", c.synthetic.dispersion_ratio},
        {"fixation_shift_ms", c.synthetic.fixation_shift_ms},
        {"pupil_variance_shift", c.synthetic.pupil_variance_shift},
        {"asymmetry", c.synthetic.asymmetry},
        {"texture_damping", c.synthetic.texture_damping},
        {"difficulty_gain", c.synthetic.difficulty_gain},
        {"noise", c.synthetic.noise},
        {"shuffle_labels", c.synthetic.shuffle_labels},
        {"seed", c.synthetic.seed}}}};
}

}  // namespace cefnet::exp
