#include "cefnet/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace cefnet::data {

namespace {

using Rng = std::mt19937_64;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 over a combined key
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_id(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

void SyntheticSpec::validate() const {
  if (participants_per_class == 0) throw std::invalid_argument("participants_per_class must be positive");
  if (image_size < 8) throw std::invalid_argument("image_size must be at least 8");
  if (!(dispersion_ratio > 0.0)) throw std::invalid_argument("dispersion_ratio must be positive");
  if (fixation_shift_ms < 0 || pupil_variance_shift < 0 || asymmetry < 0 || texture_damping < 0 ||
      difficulty_gain < 0 || noise < 0) {
    throw std::invalid_argument("synthetic amplitudes must be nonnegative");
  }
  if (texture_damping > 1.0) throw std::invalid_argument("texture_damping must be at most 1");
}

SyntheticSpec preset(const std::string& name) {
  SyntheticSpec s;
  if (name == "strong") {
    s.dispersion_ratio = 3.0;
    s.fixation_shift_ms = 250.0;
    s.pupil_variance_shift = 2.0;
    s.asymmetry = 0.08;
    s.texture_damping = 0.8;
    s.difficulty_gain = 0.25;
    return s;
  }
  if (name == "null") {
    s.shuffle_labels = true;
    return s;
  }
  throw std::invalid_argument("unknown synthetic preset '" + name + "' (expected strong or null)");
}

GazeTrace generate_gaze(const SyntheticSpec& spec, int label, int difficulty, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool ad = label == 1;
  const double sep = spec.level_scale(difficulty);
  const double ratio = ad ? 1.0 + (spec.dispersion_ratio - 1.0) * sep : 1.0;
  const double fix_mean = 260.0 + (ad ? spec.fixation_shift_ms * sep : 0.0);
  const double pupil_sd = 0.08 * (ad ? 1.0 + spec.pupil_variance_shift * sep : 1.0);
  const double spread = 0.012 * ratio;

  // Row count jitters around 10 s so the pad/truncate rule is exercised.
  const std::size_t n = kGazeRows - 40 + static_cast<std::size_t>(rng() % 81);
  GazeTrace tr;
  tr.rows.resize(n);
  tr.target_x.resize(n);
  tr.target_y.resize(n);
  tr.fixation.resize(n);

  double tx = 0.2 + 0.6 * unit(rng), ty = 0.2 + 0.6 * unit(rng);
  double px = tx, py = ty;  // saccade start
  double drift_x = 0.0, drift_y = 0.0, pupil_slow = 0.0;
  const double base_pupil = 3.4 + 0.3 * gauss(rng);
  std::size_t i = 0;
  while (i < n) {
    // fixation
    const double dur_ms = std::max(80.0, fix_mean + 60.0 * gauss(rng));
    const std::size_t fix_rows = std::max<std::size_t>(1, static_cast<std::size_t>(dur_ms / 4.0));
    const bool unclassified = unit(rng) < 0.05;
    for (std::size_t r = 0; r < fix_rows && i < n; ++r, ++i) {
      // slow wander (AR(1), unit stationary variance) plus fast jitter, both scaled by the spread
      drift_x = 0.95 * drift_x + std::sqrt(1 - 0.95 * 0.95) * gauss(rng);
      drift_y = 0.95 * drift_y + std::sqrt(1 - 0.95 * 0.95) * gauss(rng);
      pupil_slow = 0.98 * pupil_slow + std::sqrt(1 - 0.98 * 0.98) * gauss(rng);
      auto& row = tr.rows[i];
      row.t_ms = 4.0 * static_cast<double>(i);
      row.v[kGazeX] = tx + spread * (0.8 * drift_x + 0.6 * gauss(rng));
      row.v[kGazeY] = ty + spread * (0.8 * drift_y + 0.6 * gauss(rng));
      const double pupil = base_pupil + pupil_sd * (0.8 * pupil_slow + 0.6 * gauss(rng));
      row.v[kPupilLeft] = pupil;
      row.v[kPupilRight] = pupil + 0.05 + 0.02 * gauss(rng);
      row.v[kEventType] = unclassified ? kUnclassified : kFixation;
      row.v[kEventDuration] = dur_ms;
      tr.target_x[i] = tx;
      tr.target_y[i] = ty;
      tr.fixation[i] = true;
    }
    // saccade to the next target
    px = tx;
    py = ty;
    tx = 0.2 + 0.6 * unit(rng);
    ty = 0.2 + 0.6 * unit(rng);
    const std::size_t sac_rows = 8 + rng() % 5;
    const double sac_ms = 4.0 * static_cast<double>(sac_rows);
    for (std::size_t r = 0; r < sac_rows && i < n; ++r, ++i) {
      const double f = static_cast<double>(r + 1) / static_cast<double>(sac_rows);
      auto& row = tr.rows[i];
      row.t_ms = 4.0 * static_cast<double>(i);
      row.v[kGazeX] = px + f * (tx - px);
      row.v[kGazeY] = py + f * (ty - py);
      const double pupil = base_pupil + pupil_sd * pupil_slow;
      row.v[kPupilLeft] = pupil;
      row.v[kPupilRight] = pupil + 0.05;
      row.v[kEventType] = kSaccade;
      row.v[kEventDuration] = sac_ms;
      tr.target_x[i] = tx;
      tr.target_y[i] = ty;
      tr.fixation[i] = false;
    }
  }
  // Blink gaps: all channels missing for ~100 ms, kept away from the edges.
  const int blinks = 2 + static_cast<int>(rng() % 3);
  for (int b = 0; b < blinks; ++b) {
    const std::size_t start = 10 + rng() % (n - 60);
    const std::size_t len = 15 + rng() % 20;
    for (std::size_t r = start; r < std::min(n - 1, start + len); ++r) tr.rows[r].v.fill(kMissing);
  }
  return tr;
}

Video generate_video(const SyntheticSpec& spec, int label, int difficulty, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool ad = label == 1;
  const double sep = spec.level_scale(difficulty);
  const std::size_t s = spec.image_size;
  const double S = static_cast<double>(s);

  Video v;
  v.count = kVideoFrames - 25 + static_cast<std::size_t>(rng() % 51);
  v.height = v.width = s;
  v.channels = 3;
  v.pixels.resize(v.count * v.frame_size());

  // Per-trial identity
  const double skin = 0.55 + 0.15 * unit(rng);
  const double face_rx = 0.30 + 0.04 * unit(rng), face_ry = 0.38 + 0.04 * unit(rng);
  const double asym = ad ? std::min(0.25, spec.asymmetry * sep) : 0.0;
  const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
  const double contrast = 0.14 * (ad ? 1.0 - std::min(1.0, spec.texture_damping * sep) : 1.0);
  const double stripe_period = 4.0;

  for (std::size_t f = 0; f < v.count; ++f) {
    const double t = static_cast<double>(f) / 30.0;
    const double cx = 0.5 + 0.02 * std::sin(1.3 * t + seed % 7);
    const double cy = 0.5 + 0.02 * std::cos(0.9 * t);
    const double mouth_open = 0.015 * (1.0 + std::sin(2.1 * t));
    std::uint8_t* px = v.frame(f);
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        const double u = (static_cast<double>(x) + 0.5) / S;
        const double w = (static_cast<double>(y) + 0.5) / S;
        const double dx = (u - cx) / face_rx, dy = (w - cy) / face_ry;
        double val = 0.25;
        if (dx * dx + dy * dy <= 1.0) {
          val = skin;
          // horizontal and vertical stripe texture inside the face
          val += contrast * 0.5 * (std::sin(2 * M_PI * y / stripe_period) + std::sin(2 * M_PI * x / stripe_period));
          // asymmetry lowers one side's features
          const double lift = (u - cx) * side > 0 ? asym : 0.0;
          const double eye_y = cy - 0.12 + lift;
          const bool eye = std::abs(w - eye_y) < 0.035 && std::abs(std::abs(u - cx) - 0.12) < 0.07;
          const double mouth_y = cy + 0.20 + lift * 0.5;
          const bool mouth = std::abs(w - mouth_y) < 0.025 + mouth_open && std::abs(u - cx) < 0.12;
          const bool nose = std::abs(u - cx) < 0.02 && w > cy - 0.05 && w < cy + 0.08;
          if (eye || mouth) val = 0.1;
          if (nose) val -= 0.15;
        }
        const double tint[3] = {1.0, 0.85, 0.75};
        for (std::size_t c = 0; c < 3; ++c) {
          const double p = clamp01(val * (c == 0 || val < skin - 0.3 ? 1.0 : tint[c]) + spec.noise * gauss(rng));
          px[(y * s + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(p * 255.0));
        }
      }
    }
  }
  return v;
}

std::vector<ParticipantPlan> plan_participants(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = 2 * spec.participants_per_class;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < spec.participants_per_class ? 1 : 0;
  if (spec.shuffle_labels) {
    Rng rng(mix(spec.seed, 0xABCDEF));
    std::shuffle(labels.begin(), labels.end(), rng);
  }
  std::vector<ParticipantPlan> out;
  for (std::size_t i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "P%03zu", i);
    out.push_back({id, labels[i]});
  }
  return out;
}

RawTrial generate_trial(const SyntheticSpec& spec, const std::string& participant, int label, int trial) {
  RawTrial raw;
  raw.participant_id = participant;
  raw.label = label;
  raw.trial = trial;
  raw.difficulty = difficulty_of_trial(trial);
  const std::uint64_t key = mix(mix(spec.seed, hash_id(participant)), static_cast<std::uint64_t>(trial));
  raw.gaze = generate_gaze(spec, label, raw.difficulty, mix(key, 1)).rows;
  raw.video = generate_video(spec, label, raw.difficulty, mix(key, 2));
  return raw;
}

std::vector<TrialSample> synthesize_dataset(const SyntheticSpec& spec,
                                            const std::function<void(const RawTrial&)>& on_raw) {
  std::vector<TrialSample> out;
  for (const auto& p : plan_participants(spec)) {
    for (int t = 0; t < kTrialsPerParticipant; ++t) {
      RawTrial raw = generate_trial(spec, p.id, p.label, t);
      if (on_raw) on_raw(raw);
      out.push_back(preprocess_trial(raw));
    }
  }
  return out;
}

}  // namespace cefnet::data
