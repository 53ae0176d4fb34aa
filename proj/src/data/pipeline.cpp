#include "cefnet/data/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

namespace cefnet::data {

std::string label_name(int label) { return label == 1 ? "AD" : "HC"; }

int parse_label(const std::string& name) {
  if (name == "AD") return 1;
  if (name == "HC") return 0;
  throw std::invalid_argument("unknown label '" + name + "' (expected AD or HC)");
}

Video pad_or_truncate_video(const Video& video, std::size_t target) {
  if (video.count == 0) throw std::invalid_argument("video has no frames");
  Video out = video;
  out.count = target;
  const std::size_t fs = video.frame_size();
  out.pixels.resize(target * fs);
  for (std::size_t i = video.count; i < target; ++i) std::copy_n(video.frame(video.count - 1), fs, out.frame(i));
  return out;
}

Video sample_frames(const Video& video, std::size_t stride, std::size_t expected) {
  if (video.count != expected) {
    throw std::invalid_argument("sample_frames expects " + std::to_string(expected) + " frames, got " +
                                std::to_string(video.count));
  }
  Video out = video;
  out.count = expected / stride;
  const std::size_t fs = video.frame_size();
  out.pixels.resize(out.count * fs);
  for (std::size_t i = 0; i < out.count; ++i) std::copy_n(video.frame(i * stride), fs, out.frame(i));
  return out;
}

std::vector<GazeRow> blink_interpolate(const std::vector<GazeRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("no gaze rows");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (!(rows[i].t_ms > rows[i - 1].t_ms)) {
      throw std::invalid_argument("gaze timestamps not strictly increasing at row " + std::to_string(i));
    }
  }
  std::vector<GazeRow> out = rows;
  const std::size_t n = rows.size();
  for (std::size_t c = 0; c < kEyeChannels; ++c) {
    std::vector<std::size_t> present;
    for (std::size_t i = 0; i < n; ++i)
      if (std::isfinite(rows[i].v[c])) present.push_back(i);
    if (present.empty()) throw std::invalid_argument("eye channel " + std::to_string(c) + " is missing entirely");
    if (c == kEventType) {
      double last = rows[present.front()].v[c];
      for (std::size_t i = 0; i < n; ++i) {
        if (std::isfinite(rows[i].v[c]))
          last = rows[i].v[c];
        else
          out[i].v[c] = last;
      }
      continue;
    }
    for (std::size_t i = 0; i < present.front(); ++i) out[i].v[c] = rows[present.front()].v[c];
    for (std::size_t i = present.back() + 1; i < n; ++i) out[i].v[c] = rows[present.back()].v[c];
    for (std::size_t p = 0; p + 1 < present.size(); ++p) {
      const std::size_t a = present[p], b = present[p + 1];
      if (b == a + 1) continue;
      const double ta = rows[a].t_ms, tb = rows[b].t_ms;
      const double va = rows[a].v[c], vb = rows[b].v[c];
      for (std::size_t i = a + 1; i < b; ++i) {
        const double f = (rows[i].t_ms - ta) / (tb - ta);
        out[i].v[c] = va + f * (vb - va);
      }
    }
  }
  return out;
}

std::vector<GazeRow> pad_or_truncate_rows(const std::vector<GazeRow>& rows, std::size_t target) {
  if (rows.empty()) throw std::invalid_argument("no gaze rows");
  std::vector<GazeRow> out(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), target)));
  double dt = rows.size() > 1 ? rows.back().t_ms - rows[rows.size() - 2].t_ms : 4.0;
  while (out.size() < target) {
    GazeRow r = rows.back();
    r.t_ms = out.back().t_ms + dt;
    out.push_back(r);
  }
  return out;
}

std::vector<double> align_eye(const std::vector<GazeRow>& rows) {
  if (rows.size() != kGazeRows) {
    throw std::invalid_argument("align_eye expects " + std::to_string(kGazeRows) + " rows, got " +
                                std::to_string(rows.size()));
  }
  std::vector<double> out(kSequenceLength * kEyeChannels, 0.0);
  for (std::size_t j = 0; j < kSequenceLength; ++j) {
    std::array<int, 3> votes{};
    for (std::size_t r = j * kGazeWindow; r < (j + 1) * kGazeWindow; ++r) {
      for (std::size_t c = 0; c < kEyeChannels; ++c) {
        const double v = rows[r].v[c];
        if (!std::isfinite(v)) throw std::invalid_argument("align_eye: gap at row " + std::to_string(r));
        if (c == kEventType) {
          const long code = std::lround(v);
          if (code < 0 || code > 2) throw std::invalid_argument("align_eye: event code out of range at row " + std::to_string(r));
          ++votes[static_cast<std::size_t>(code)];
        } else {
          out[j * kEyeChannels + c] += v;
        }
      }
    }
    for (std::size_t c = 0; c < kEyeChannels; ++c) out[j * kEyeChannels + c] /= static_cast<double>(kGazeWindow);
    out[j * kEyeChannels + kEventType] =
        static_cast<double>(std::distance(votes.begin(), std::max_element(votes.begin(), votes.end())));
  }
  return out;
}

TrialSample preprocess_trial(const RawTrial& raw) {
  TrialSample s;
  s.participant_id = raw.participant_id;
  s.label = raw.label;
  s.difficulty = raw.difficulty;
  s.trial = raw.trial;
  s.eye = align_eye(pad_or_truncate_rows(blink_interpolate(raw.gaze)));
  s.face = sample_frames(pad_or_truncate_video(raw.video));
  return s;
}

ChannelStats fit_channel_stats(const std::vector<const TrialSample*>& train) {
  if (train.empty()) throw std::invalid_argument("cannot fit standardisation on an empty training set");
  ChannelStats st;
  st.mean.fill(0.0);
  st.stddev.fill(1.0);
  const std::size_t n = train.size() * kSequenceLength;
  for (std::size_t c : kContinuousChannels) {
    double sum = 0.0;
    for (const auto* s : train)
      for (std::size_t j = 0; j < kSequenceLength; ++j) sum += s->eye[j * kEyeChannels + c];
    const double mu = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto* s : train)
      for (std::size_t j = 0; j < kSequenceLength; ++j) {
        const double d = s->eye[j * kEyeChannels + c] - mu;
        ss += d * d;
      }
    st.mean[c] = mu;
    st.stddev[c] = std::sqrt(ss / static_cast<double>(n));
    if (!(st.stddev[c] > 1e-12 * std::max(1.0, std::abs(mu)))) {
      st.stddev[c] = 0.0;
      st.warnings.push_back("eye channel " + std::to_string(c) + " has zero variance on the training set; set to 0");
    }
  }
  return st;
}

std::vector<double> standardize(const std::vector<double>& eye, const ChannelStats& stats) {
  if (eye.size() % kEyeChannels != 0) throw std::invalid_argument("eye sequence width is not 6");
  std::vector<double> out = eye;
  for (std::size_t j = 0; j < eye.size() / kEyeChannels; ++j) {
    for (std::size_t c : kContinuousChannels) {
      double& v = out[j * kEyeChannels + c];
      v = stats.stddev[c] > 0.0 ? (v - stats.mean[c]) / stats.stddev[c] : 0.0;
    }
  }
  return out;
}

std::size_t FoldPlan::fold_of(const std::string& participant) const {
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (std::find(folds[f].begin(), folds[f].end(), participant) != folds[f].end()) return f;
  throw std::out_of_range("participant '" + participant + "' is not in the fold plan");
}

std::vector<ParticipantInfo> participants_of(const std::vector<TrialSample>& samples) {
  std::map<std::string, int> seen;
  for (const auto& s : samples) {
    auto [it, inserted] = seen.emplace(s.participant_id, s.label);
    if (!inserted && it->second != s.label) {
      throw std::invalid_argument("participant '" + s.participant_id + "' carries both labels");
    }
  }
  std::vector<ParticipantInfo> out;
  for (const auto& [id, label] : seen) out.push_back({id, label});
  return out;
}

FoldPlan stratified_group_kfold(const std::vector<ParticipantInfo>& participants, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k must be at least 2");
  std::set<std::string> ids;
  for (const auto& p : participants) {
    if (!ids.insert(p.id).second) throw std::invalid_argument("duplicate participant '" + p.id + "'");
  }
  if (k > participants.size()) {
    throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the participant count " +
                                std::to_string(participants.size()));
  }
  std::map<int, std::vector<std::string>> by_class;
  for (const auto& p : participants) by_class[p.label].push_back(p.id);
  std::mt19937_64 rng(seed);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.assign(k, {});
  // Deal each class round-robin; the next class starts where the previous
  // stopped so fold sizes stay within one of each other.
  std::size_t cursor = 0;
  for (auto& [label, members] : by_class) {
    std::sort(members.begin(), members.end());
    std::shuffle(members.begin(), members.end(), rng);
    for (const auto& id : members) {
      plan.folds[cursor % k].push_back(id);
      ++cursor;
    }
  }
  return plan;
}

}  // namespace cefnet::data
