#include "cefnet/data/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace cefnet::data {

namespace {

constexpr char kEyeHeader[] = "t_ms,x_p,y_p,d_left,d_right,event_type,event_duration_ms";
constexpr char kFramesMagic[4] = {'C', 'E', 'F', 'V'};

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const fs::path& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error(path.string() + ": truncated header");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::string trial_stem(const std::string& participant, int trial) {
  return participant + "_t" + std::to_string(trial);
}

}  // namespace

void write_eye_csv(const fs::path& path, const std::vector<GazeRow>& rows) {
  auto out = open_out(path);
  out << kEyeHeader << '\n';
  out.precision(17);
  for (const auto& r : rows) {
    out << r.t_ms;
    for (double v : r.v) {
      out << ',';
      if (std::isfinite(v)) out << v;
    }
    out << '\n';
  }
}

std::vector<GazeRow> read_eye_csv(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kEyeHeader, 0) != 0) {
    throw std::runtime_error(path.string() + ": missing eye CSV header");
  }
  std::vector<GazeRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() != 1 + kEyeChannels) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields, got " +
                               std::to_string(fields.size()));
    }
    GazeRow r;
    try {
      r.t_ms = std::stod(fields[0]);
      for (std::size_t c = 0; c < kEyeChannels; ++c) r.v[c] = fields[c + 1].empty() ? kMissing : std::stod(fields[c + 1]);
    } catch (const std::logic_error&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
    rows.push_back(r);
  }
  return rows;
}

void write_frames(const fs::path& path, const Video& video) {
  auto out = open_out(path, std::ios::binary);
  out.write(kFramesMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(video.count));
  put_u32(out, static_cast<std::uint32_t>(video.height));
  put_u32(out, static_cast<std::uint32_t>(video.width));
  put_u32(out, static_cast<std::uint32_t>(video.channels));
  out.write(reinterpret_cast<const char*>(video.pixels.data()), static_cast<std::streamsize>(video.pixels.size()));
}

Video read_frames(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kFramesMagic, 4) != 0) {
    throw std::runtime_error(path.string() + ": not a frames file (bad magic)");
  }
  Video v;
  v.count = get_u32(in, path);
  v.height = get_u32(in, path);
  v.width = get_u32(in, path);
  v.channels = get_u32(in, path);
  v.pixels.resize(v.count * v.frame_size());
  if (!in.read(reinterpret_cast<char*>(v.pixels.data()), static_cast<std::streamsize>(v.pixels.size()))) {
    throw std::runtime_error(path.string() + ": truncated pixel data");
  }
  return v;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  auto out = open_out(path);
  for (const auto& e : entries) {
    nlohmann::json j{{"participant_id", e.participant_id}, {"label", label_name(e.label)},
                     {"difficulty", e.difficulty},         {"trial", e.trial},
                     {"eye_path", e.eye_path},             {"frames_path", e.frames_path}};
    out << j.dump() << '\n';
  }
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  auto in = open_in(path);
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.participant_id = j.at("participant_id").get<std::string>();
      e.label = parse_label(j.at("label").get<std::string>());
      e.difficulty = j.at("difficulty").get<int>();
      e.trial = j.value("trial", 0);
      e.eye_path = j.at("eye_path").get<std::string>();
      e.frames_path = j.at("frames_path").get<std::string>();
      if (e.difficulty < 1 || e.difficulty > 3) throw std::invalid_argument("difficulty must be 1, 2 or 3");
      out.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

ManifestEntry write_raw_trial(const fs::path& dir, const RawTrial& raw) {
  ManifestEntry e{raw.participant_id, raw.label, raw.difficulty, raw.trial, "", ""};
  const std::string stem = trial_stem(raw.participant_id, raw.trial);
  e.eye_path = "eye/" + stem + ".csv";
  e.frames_path = "frames/" + stem + ".cefv";
  write_eye_csv(dir / e.eye_path, raw.gaze);
  write_frames(dir / e.frames_path, raw.video);
  return e;
}

RawTrial read_raw_trial(const fs::path& manifest_dir, const ManifestEntry& entry) {
  RawTrial raw;
  raw.participant_id = entry.participant_id;
  raw.label = entry.label;
  raw.difficulty = entry.difficulty;
  raw.trial = entry.trial;
  raw.gaze = read_eye_csv(manifest_dir / entry.eye_path);
  raw.video = read_frames(manifest_dir / entry.frames_path);
  return raw;
}

ManifestEntry write_sample(const fs::path& dir, const TrialSample& sample) {
  ManifestEntry e{sample.participant_id, sample.label, sample.difficulty, sample.trial, "", ""};
  const std::string stem = trial_stem(sample.participant_id, sample.trial);
  e.eye_path = "eye/" + stem + ".csv";
  e.frames_path = "frames/" + stem + ".cefv";
  std::vector<GazeRow> rows(kSequenceLength);
  for (std::size_t j = 0; j < kSequenceLength; ++j) {
    rows[j].t_ms = (static_cast<double>(j) + 0.5) * kGazeWindow * 4.0;
    for (std::size_t c = 0; c < kEyeChannels; ++c) rows[j].v[c] = sample.eye[j * kEyeChannels + c];
  }
  write_eye_csv(dir / e.eye_path, rows);
  write_frames(dir / e.frames_path, sample.face);
  return e;
}

TrialSample read_sample(const fs::path& manifest_dir, const ManifestEntry& entry) {
  TrialSample s;
  s.participant_id = entry.participant_id;
  s.label = entry.label;
  s.difficulty = entry.difficulty;
  s.trial = entry.trial;
  auto rows = read_eye_csv(manifest_dir / entry.eye_path);
  if (rows.size() != kSequenceLength) {
    throw std::runtime_error(entry.eye_path + ": processed eye file must have 50 rows, got " +
                             std::to_string(rows.size()) + " (run prep first?)");
  }
  for (const auto& r : rows)
    for (double v : r.v) {
      if (!std::isfinite(v)) throw std::runtime_error(entry.eye_path + ": processed eye data has gaps");
      s.eye.push_back(v);
    }
  s.face = read_frames(manifest_dir / entry.frames_path);
  if (s.face.count != kSequenceLength) {
    throw std::runtime_error(entry.frames_path + ": processed video must have 50 frames, got " +
                             std::to_string(s.face.count));
  }
  return s;
}

std::vector<TrialSample> load_dataset(const fs::path& manifest) {
  const fs::path dir = manifest.parent_path();
  std::vector<TrialSample> out;
  for (const auto& e : read_manifest(manifest)) out.push_back(read_sample(dir, e));
  return out;
}

void save_dataset(const fs::path& dir, const std::vector<TrialSample>& samples) {
  std::vector<ManifestEntry> entries;
  for (const auto& s : samples) entries.push_back(write_sample(dir, s));
  write_manifest(dir / "manifest.jsonl", entries);
}

}  // namespace cefnet::data
