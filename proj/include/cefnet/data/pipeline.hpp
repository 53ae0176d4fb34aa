#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace cefnet::data {

// Eye channel order, both in raw rows and in the 50x6 sequence.
enum EyeChannel : std::size_t { kGazeX = 0, kGazeY, kPupilLeft, kPupilRight, kEventType, kEventDuration };
inline constexpr std::size_t kEyeChannels = 6;
// Event codes as exported by the tracker.
inline constexpr int kFixation = 0;
inline constexpr int kSaccade = 1;
inline constexpr int kUnclassified = 2;

inline constexpr std::size_t kVideoFrames = 300;  // 10 s at 30 fps
inline constexpr std::size_t kFrameStride = 6;    // -> 5 fps
inline constexpr std::size_t kSequenceLength = 50;
inline constexpr std::size_t kGazeRows = 2500;  // 10 s at 250 Hz
inline constexpr std::size_t kGazeWindow = 50;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct GazeRow {
  double t_ms = 0.0;
  std::array<double, kEyeChannels> v{};  // NaN marks a blink gap
};

/// Frames stored contiguously as [count, height, width, channels], 8-bit.
struct Video {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  std::size_t frame_size() const { return height * width * channels; }
  const std::uint8_t* frame(std::size_t i) const { return pixels.data() + i * frame_size(); }
  std::uint8_t* frame(std::size_t i) { return pixels.data() + i * frame_size(); }
};

struct RawTrial {
  std::string participant_id;
  int label = 0;  // 0 = HC, 1 = AD
  int difficulty = 1;
  int trial = 0;
  std::vector<GazeRow> gaze;
  Video video;
};

struct TrialSample {
  std::string participant_id;
  int label = 0;
  int difficulty = 1;
  int trial = 0;
  std::vector<double> eye;  // [50 x 6] row-major
  Video face;               // 50 frames
};

std::string label_name(int label);
int parse_label(const std::string& name);

Video pad_or_truncate_video(const Video& video, std::size_t target = kVideoFrames);
Video sample_frames(const Video& video, std::size_t stride = kFrameStride, std::size_t expected = kVideoFrames);

/// Linear interpolation over blink gaps along the timestamp axis. Edge gaps
/// take the nearest present value; event codes take the previous present code.
std::vector<GazeRow> blink_interpolate(const std::vector<GazeRow>& rows);
/// Repeat the final row / truncate to exactly `target` rows.
std::vector<GazeRow> pad_or_truncate_rows(const std::vector<GazeRow>& rows, std::size_t target = kGazeRows);
/// Window means of 2500 gap-free rows -> [50 x 6]; event type by majority vote
/// (ties go to the lower code).
std::vector<double> align_eye(const std::vector<GazeRow>& rows);

TrialSample preprocess_trial(const RawTrial& raw);

// Continuous channels that get z-scored; the event code is left untouched.
inline constexpr std::array<std::size_t, 5> kContinuousChannels{kGazeX, kGazeY, kPupilLeft, kPupilRight,
                                                                 kEventDuration};

struct ChannelStats {
  std::array<double, kEyeChannels> mean{};
  std::array<double, kEyeChannels> stddev{};
  std::vector<std::string> warnings;  // zero-variance channels
};

/// Per-channel statistics over the given (training) samples only.
ChannelStats fit_channel_stats(const std::vector<const TrialSample*>& train);
/// z-scored copy of a [50 x 6] sequence; zero-variance channels become 0.
std::vector<double> standardize(const std::vector<double>& eye, const ChannelStats& stats);

struct ParticipantInfo {
  std::string id;
  int label = 0;
};

struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> folds;

  /// Index of the fold holding `participant`; throws if absent.
  std::size_t fold_of(const std::string& participant) const;
};

std::vector<ParticipantInfo> participants_of(const std::vector<TrialSample>& samples);
FoldPlan stratified_group_kfold(const std::vector<ParticipantInfo>& participants, std::size_t k, std::uint64_t seed);

}  // namespace cefnet::data
