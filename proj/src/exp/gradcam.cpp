#include "cefnet/exp/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace cefnet::exp {

Heatmap bilinear_resize(const Heatmap& in, std::size_t height, std::size_t width) {
  if (in.height == 0 || in.width == 0) throw std::invalid_argument("empty heatmap");
  Heatmap out{height, width, std::vector<double>(height * width)};
  auto src = [](std::size_t o, std::size_t n_out, std::size_t n_in) {
    const double s = (static_cast<double>(o) + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(n_in - 1));
  };
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = src(y, height, in.height);
    const std::size_t y0 = static_cast<std::size_t>(sy), y1 = std::min(y0 + 1, in.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double sx = src(x, width, in.width);
      const std::size_t x0 = static_cast<std::size_t>(sx), x1 = std::min(x0 + 1, in.width - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = in.at(y0, x0) * (1 - fx) + in.at(y0, x1) * fx;
      const double bottom = in.at(y1, x0) * (1 - fx) + in.at(y1, x1) * fx;
      out.values[y * width + x] = top * (1 - fy) + bottom * fy;
    }
  }
  return out;
}

RegionVector region_means(const Heatmap& map) {
  if (map.height < 3 || map.width < 3) throw std::invalid_argument("heatmap smaller than the 3x3 grid");
  RegionVector out{};
  for (std::size_t gy = 0; gy < 3; ++gy) {
    const std::size_t y0 = gy * map.height / 3, y1 = (gy + 1) * map.height / 3;
    for (std::size_t gx = 0; gx < 3; ++gx) {
      const std::size_t x0 = gx * map.width / 3, x1 = (gx + 1) * map.width / 3;
      double s = 0.0;
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) s += map.at(y, x);
      out[gy * 3 + gx] = s / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  return out;
}

GradCamResult gradcam_regional(model::FusionNetwork& net, const data::TrialSample& sample,
                               const data::ChannelStats& stats, int target_class) {
  if (!net.facial() || !net.facial()->has_directional_block()) {
    throw std::invalid_argument("Grad-CAM target layer absent: the configured model has no directional block");
  }
  const bool was_training = net.training();
  net.eval();
  net.facial()->retain_directional_grad(true);
  Batch batch{&sample};
  Tensor logits = network_forward(net, stats)(batch);
  Tensor probs;
  {
    ad::NoGradGuard ng;
    probs = model::class_probabilities(logits.detach());
  }
  GradCamResult r;
  r.target_class = target_class >= 0 ? target_class : (probs.data()[1] > probs.data()[0] ? 1 : 0);
  if (r.target_class > 1) throw std::invalid_argument("target class must be 0 (HC) or 1 (AD)");
  r.target_probability = probs.data()[r.target_class];
  Tensor acts = net.facial()->directional_output();
  ad::backward(ad::sum(ad::slice(logits, 1, static_cast<std::size_t>(r.target_class), 1)));
  net.facial()->retain_directional_grad(false);
  net.zero_grad();
  net.train(was_training);

  const std::size_t t = acts.dim(0), c = acts.dim(1), h = acts.dim(2), w = acts.dim(3);
  auto a = acts.data();
  auto g = acts.grad();
  Heatmap cam{h, w, std::vector<double>(h * w, 0.0)};
  for (std::size_t f = 0; f < t; ++f) {
    std::vector<double> frame(h * w, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (f * c + ch) * h * w;
      double weight = 0.0;
      for (std::size_t p = 0; p < h * w; ++p) weight += g[base + p];
      weight /= static_cast<double>(h * w);
      for (std::size_t p = 0; p < h * w; ++p) frame[p] += weight * a[base + p];
    }
    for (std::size_t p = 0; p < h * w; ++p) cam.values[p] += std::max(0.0, frame[p]) / static_cast<double>(t);
  }
  r.heatmap = bilinear_resize(cam, sample.face.height, sample.face.width);
  r.regions = region_means(r.heatmap);
  return r;
}

RegionVector group_difference_map(const std::vector<RegionVector>& ad, const std::vector<RegionVector>& hc) {
  if (ad.empty() || hc.empty()) throw std::invalid_argument("group_difference_map needs both groups nonempty");
  RegionVector out{};
  for (std::size_t i = 0; i < 9; ++i) {
    double sa = 0.0, sh = 0.0;
    for (const auto& v : ad) sa += v[i];
    for (const auto& v : hc) sh += v[i];
    out[i] = sa / static_cast<double>(ad.size()) - sh / static_cast<double>(hc.size());
  }
  return out;
}

void write_pgm(std::ostream& os, const Heatmap& map) {
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double span = *hi - *lo;
  os << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  for (double v : map.values) {
    const double s = span > 0 ? (v - *lo) / span : 0.0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * s))));
  }
}

}  // namespace cefnet::exp
