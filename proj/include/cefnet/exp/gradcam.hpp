#pragma once

#include <array>
#include <iosfwd>
#include <vector>

#include "cefnet/exp/training.hpp"

namespace cefnet::exp {

/// Row-major heatmap.
struct Heatmap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// Nine cell means, ordered top-left, top-centre, ..., bottom-right.
using RegionVector = std::array<double, 9>;

/// Bilinear resize with pixel-centre alignment (edges clamp).
Heatmap bilinear_resize(const Heatmap& in, std::size_t height, std::size_t width);
/// Means over a 3x3 grid of near-equal cells (sizes differ by at most 1).
RegionVector region_means(const Heatmap& map);

struct GradCamResult {
  Heatmap heatmap;  // frame resolution
  RegionVector regions{};
  int target_class = 0;
  double target_probability = 0.0;
};

/// Channel weights are spatial means of d(target logit)/d(directional-block
/// output); the map is ReLU(sum_c w_c A_c) per frame, averaged over frames
/// and resized to the frame size. `target_class` < 0 uses the predicted class.
GradCamResult gradcam_regional(model::FusionNetwork& net, const data::TrialSample& sample,
                               const data::ChannelStats& stats, int target_class = -1);

/// Per-region mean over AD vectors minus mean over HC vectors.
RegionVector group_difference_map(const std::vector<RegionVector>& ad, const std::vector<RegionVector>& hc);

/// 8-bit binary PGM, min-max scaled.
void write_pgm(std::ostream& os, const Heatmap& map);

}  // namespace cefnet::exp
