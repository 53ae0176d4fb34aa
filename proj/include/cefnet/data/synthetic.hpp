#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cefnet/data/pipeline.hpp"

namespace cefnet::data {

/// Class-separation knobs. Every field except dispersion_ratio is an
/// amplitude whose neutral value is 0; dispersion_ratio is AD-over-HC gaze
/// spread, neutral at 1.
struct SyntheticSpec {
  std::size_t participants_per_class = 10;
  std::size_t image_size = 32;
  double dispersion_ratio = 1.0;
  double fixation_shift_ms = 0.0;  // added to AD mean fixation duration
  double pupil_variance_shift = 0.0;  // AD pupil std = HC std * (1 + shift)
  double asymmetry = 0.0;  // AD lateral facial asymmetry, fraction of face height
  double texture_damping = 0.0;  // AD loses this fraction of stripe contrast (0..1)
  double difficulty_gain = 0.0;  // separation scale = 1 + gain * (level - 1)
  double noise = 0.02;  // pixel noise std, fraction of full scale
  bool shuffle_labels = false;  // null control: labels drawn at random per participant
  std::uint64_t seed = 42;

  void validate() const;
  /// Separation multiplier for a difficulty level.
  double level_scale(int difficulty) const { return 1.0 + difficulty_gain * (difficulty - 1); }
};

SyntheticSpec preset(const std::string& name);  // "strong" or "null"

/// Gaze trace with the per-row fixation targets the generator aimed at.
struct GazeTrace {
  std::vector<GazeRow> rows;
  std::vector<double> target_x, target_y;
  std::vector<bool> fixation;
};

GazeTrace generate_gaze(const SyntheticSpec& spec, int label, int difficulty, std::uint64_t seed);
Video generate_video(const SyntheticSpec& spec, int label, int difficulty, std::uint64_t seed);

/// Trial ids: participants P000.. with 3 trials per difficulty level.
RawTrial generate_trial(const SyntheticSpec& spec, const std::string& participant, int label, int trial);

struct ParticipantPlan {
  std::string id;
  int label;
};
std::vector<ParticipantPlan> plan_participants(const SyntheticSpec& spec);

inline constexpr int kTrialsPerParticipant = 9;
inline int difficulty_of_trial(int trial) { return 1 + trial / 3; }

/// Every trial of every participant, run through preprocess_trial. The
/// callback, if set, sees each raw trial before it is discarded.
std::vector<TrialSample> synthesize_dataset(const SyntheticSpec& spec,
                                            const std::function<void(const RawTrial&)>& on_raw = {});

}  // namespace cefnet::data
