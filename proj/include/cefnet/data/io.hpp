#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cefnet/data/pipeline.hpp"

namespace cefnet::data {

namespace fs = std::filesystem;

// Eye CSV: header t_ms,x_p,y_p,d_left,d_right,event_type,event_duration_ms;
// empty fields are blink gaps.
void write_eye_csv(const fs::path& path, const std::vector<GazeRow>& rows);
std::vector<GazeRow> read_eye_csv(const fs::path& path);

// Frames: "CEFV", u32 count, height, width, channels, then 8-bit pixels.
void write_frames(const fs::path& path, const Video& video);
Video read_frames(const fs::path& path);

struct ManifestEntry {
  std::string participant_id;
  int label = 0;
  int difficulty = 1;
  int trial = 0;
  std::string eye_path;  // relative to the manifest directory
  std::string frames_path;
};

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const fs::path& path);

/// Writes one raw trial under `dir` and returns its manifest entry.
ManifestEntry write_raw_trial(const fs::path& dir, const RawTrial& raw);
RawTrial read_raw_trial(const fs::path& manifest_dir, const ManifestEntry& entry);

/// Processed trials: 50-row eye CSV (window-centre timestamps) and 50 frames.
ManifestEntry write_sample(const fs::path& dir, const TrialSample& sample);
TrialSample read_sample(const fs::path& manifest_dir, const ManifestEntry& entry);

/// Loads every processed trial named by a manifest.
std::vector<TrialSample> load_dataset(const fs::path& manifest);
void save_dataset(const fs::path& dir, const std::vector<TrialSample>& samples);

}  // namespace cefnet::data
