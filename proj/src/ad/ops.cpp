#include "cefnet/ad/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cefnet::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

bool tracks(const Tensor& t) { return t.defined() && t.requires_grad(); }

// Gradient buffer of an input inside a backward closure, or nullptr when the
// input is not differentiated.
double* grad_ptr(Tensor& t) { return tracks(t) ? t.mutable_grad().data() : nullptr; }

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void check_axis(const Tensor& a, std::size_t axis, const char* op) {
  if (axis >= a.ndim()) {
    throw std::out_of_range(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                            shape_str(a.shape()));
  }
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape r;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) r.push_back(s[i]);
  }
  if (r.empty()) r.push_back(1);
  return r;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  require(sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin()),
          "add: shape " + shape_str(sb) + " does not broadcast onto " + shape_str(sa));
  const std::size_t nb = b.numel();
  const std::size_t reps = a.numel() / nb;
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < nb; ++i) out[r * nb + i] += bd[i];
  }
  return Tensor::make_result(sa, std::move(out), "add", {a, b}, [reps, nb](detail::Node& self) {
    if (auto* ga = grad_ptr(self.inputs[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    }
    if (auto* gb = grad_ptr(self.inputs[1])) {
      for (std::size_t r = 0; r < reps; ++r) {
        for (std::size_t i = 0; i < nb; ++i) gb[i] += self.grad[r * nb + i];
      }
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::make_result(a.shape(), std::move(out), "mul", {a, b}, [](detail::Node& self) {
    auto ad = self.inputs[0].data();
    auto bd = self.inputs[1].data();
    if (auto* ga = grad_ptr(self.inputs[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * bd[i];
    }
    if (auto* gb = grad_ptr(self.inputs[1])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * ad[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return Tensor::make_result(a.shape(), std::move(out), "scale", {a}, [factor](detail::Node& self) {
    auto* ga = grad_ptr(self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += factor * self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return Tensor::make_result(a.shape(), std::move(out), "relu", {a}, [](detail::Node& self) {
    auto x = self.inputs[0].data();
    auto* ga = grad_ptr(self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (x[i] > 0.0) ga[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({1}, {s}, "sum", {a}, [](detail::Node& self) {
    auto* ga = grad_ptr(self.inputs[0]);
    const std::size_t n = self.inputs[0].numel();
    for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "mean");
  const auto sp = split_at(a.shape(), axis);
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  auto x = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t k = 0; k < sp.n; ++k) {
      for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += x[(o * sp.n + k) * sp.inner + i];
    }
  }
  for (auto& v : out) v /= static_cast<double>(sp.n);
  return Tensor::make_result(drop_axis(a.shape(), axis), std::move(out), "mean", {a}, [sp](detail::Node& self) {
    auto* ga = grad_ptr(self.inputs[0]);
    const double inv = 1.0 / static_cast<double>(sp.n);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t k = 0; k < sp.n; ++k) {
        for (std::size_t i = 0; i < sp.inner; ++i) ga[(o * sp.n + k) * sp.inner + i] += inv * self.grad[o * sp.inner + i];
      }
    }
  });
}

Tensor max(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "max");
  const auto sp = split_at(a.shape(), axis);
  std::vector<double> out(sp.outer * sp.inner, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> arg(out.size(), 0);
  auto x = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t k = 0; k < sp.n; ++k) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t src = (o * sp.n + k) * sp.inner + i;
        const std::size_t dst = o * sp.inner + i;
        if (x[src] > out[dst]) {
          out[dst] = x[src];
          arg[dst] = src;
        }
      }
    }
  }
  return Tensor::make_result(drop_axis(a.shape(), axis), std::move(out), "max", {a},
                             [arg = std::move(arg)](detail::Node& self) {
                               auto* ga = grad_ptr(self.inputs[0]);
                               for (std::size_t i = 0; i < arg.size(); ++i) ga[arg[i]] += self.grad[i];
                             });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  require(numel_of(shape) == a.numel(),
          "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::make_result(shape, std::move(out), "reshape", {a}, [](detail::Node& self) {
    auto* ga = grad_ptr(self.inputs[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor transpose_last2(const Tensor& a) {
  require(a.ndim() >= 2, "transpose_last2: needs rank >= 2, got " + shape_str(a.shape()));
  Shape s = a.shape();
  const std::size_t rows = s[s.size() - 2];
  const std::size_t cols = s[s.size() - 1];
  const std::size_t batch = a.numel() / (rows * cols);
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) out[b * rows * cols + c * rows + r] = x[b * rows * cols + r * cols + c];
    }
  }
  return Tensor::make_result(s, std::move(out), "transpose", {a}, [batch, rows, cols](detail::Node& self) {
    auto* ga = grad_ptr(self.inputs[0]);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          ga[b * rows * cols + r * cols + c] += self.grad[b * rows * cols + c * rows + r];
        }
      }
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  check_axis(parts[0], axis, "concat");
  const Shape& s0 = parts[0].shape();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    require(s.size() == s0.size(), "concat: rank mismatch " + shape_str(s) + " vs " + shape_str(s0));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis) {
        require(s[i] == s0[i], "concat: dimension " + std::to_string(i) + " differs (" + std::to_string(s[i]) +
                                   " vs " + std::to_string(s0[i]) + ")");
      }
    }
    widths.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = s0;
  out_shape[axis] = total;
  const auto sp = split_at(out_shape, axis);
  std::vector<double> out(numel_of(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto x = parts[p].data();
    const std::size_t w = widths[p];
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(x.begin() + o * w * sp.inner, w * sp.inner, out.begin() + (o * total + offset) * sp.inner);
    }
    offset += w;
  }
  return Tensor::make_result(out_shape, std::move(out), "concat", parts,
                             [widths, sp, total](detail::Node& self) {
                               std::size_t off = 0;
                               for (std::size_t p = 0; p < widths.size(); ++p) {
                                 const std::size_t w = widths[p];
                                 if (auto* gp = grad_ptr(self.inputs[p])) {
                                   for (std::size_t o = 0; o < sp.outer; ++o) {
                                     const double* src = self.grad.data() + (o * total + off) * sp.inner;
                                     double* dst = gp + o * w * sp.inner;
                                     for (std::size_t i = 0; i < w * sp.inner; ++i) dst[i] += src[i];
                                   }
                                 }
                                 off += w;
                               }
                             });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  check_axis(a, axis, "slice");
  require(length > 0 && start + length <= a.dim(axis),
          "slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) + ") exceeds axis " +
              std::to_string(axis) + " of size " + std::to_string(a.dim(axis)));
  const auto sp = split_at(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  std::vector<double> out(numel_of(out_shape));
  auto x = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(x.begin() + (o * sp.n + start) * sp.inner, length * sp.inner, out.begin() + o * length * sp.inner);
  }
  return Tensor::make_result(out_shape, std::move(out), "slice", {a}, [sp, start, length](detail::Node& self) {
    auto* ga = grad_ptr(self.inputs[0]);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      const double* src = self.grad.data() + o * length * sp.inner;
      double* dst = ga + (o * sp.n + start) * sp.inner;
      for (std::size_t i = 0; i < length * sp.inner; ++i) dst[i] += src[i];
    }
  });
}

std::pair<Tensor, Tensor> split_channels(const Tensor& a) {
  require(a.ndim() >= 2, "split_channels: needs a channel axis, got " + shape_str(a.shape()));
  const std::size_t c = a.dim(1);
  require(c % 2 == 0, "split_channels: channel count " + std::to_string(c) + " is odd");
  return {slice(a, 1, 0, c / 2), slice(a, 1, c / 2, c / 2)};
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() >= 2 && b.ndim() >= 2, "matmul: operands need rank >= 2");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  require(sb[sb.size() - 2] == k, "matmul: inner dimension mismatch (" + std::to_string(k) + " vs " +
                                      std::to_string(sb[sb.size() - 2]) + ")");
  const std::size_t n = sb.back();
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);

  if (sb.size() == 2) {
    const std::size_t rows = a.numel() / k;
    std::vector<double> out(rows * n);
    MatMap(out.data(), rows, n).noalias() = ConstMatMap(a.data().data(), rows, k) * ConstMatMap(b.data().data(), k, n);
    return Tensor::make_result(out_shape, std::move(out), "matmul", {a, b}, [rows, k, n](detail::Node& self) {
      ConstMatMap g(self.grad.data(), rows, n);
      if (auto* ga = grad_ptr(self.inputs[0])) {
        MatMap(ga, rows, k).noalias() += g * ConstMatMap(self.inputs[1].data().data(), k, n).transpose();
      }
      if (auto* gb = grad_ptr(self.inputs[1])) {
        MatMap(gb, k, n).noalias() += ConstMatMap(self.inputs[0].data().data(), rows, k).transpose() * g;
      }
    });
  }

  require(sa.size() == sb.size() && std::equal(sa.begin(), sa.end() - 2, sb.begin()),
          "matmul: batch axes differ " + shape_str(sa) + " vs " + shape_str(sb));
  const std::size_t batch = a.numel() / (m * k);
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    MatMap(out.data() + i * m * n, m, n).noalias() =
        ConstMatMap(a.data().data() + i * m * k, m, k) * ConstMatMap(b.data().data() + i * k * n, k, n);
  }
  return Tensor::make_result(out_shape, std::move(out), "bmm", {a, b}, [batch, m, k, n](detail::Node& self) {
    auto* ga = grad_ptr(self.inputs[0]);
    auto* gb = grad_ptr(self.inputs[1]);
    const double* ad = self.inputs[0].data().data();
    const double* bd = self.inputs[1].data().data();
    for (std::size_t i = 0; i < batch; ++i) {
      ConstMatMap g(self.grad.data() + i * m * n, m, n);
      if (ga) MatMap(ga + i * m * k, m, k).noalias() += g * ConstMatMap(bd + i * k * n, k, n).transpose();
      if (gb) MatMap(gb + i * k * n, k, n).noalias() += ConstMatMap(ad + i * m * k, m, k).transpose() * g;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(weight.ndim() == 2, "linear: weight must be [in, out], got " + shape_str(weight.shape()));
  require(x.shape().back() == weight.dim(0), "linear: input width " + std::to_string(x.shape().back()) +
                                                 " does not match weight rows " + std::to_string(weight.dim(0)));
  Tensor y = matmul(x, weight);
  if (!bias.defined()) return y;
  require(bias.ndim() == 1 && bias.dim(0) == weight.dim(1),
          "linear: bias shape " + shape_str(bias.shape()) + " does not match output width");
  return add(y, bias);
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "softmax");
  const auto sp = split_at(a.shape(), axis);
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      auto idx = [&](std::size_t k) { return (o * sp.n + k) * sp.inner + i; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < sp.n; ++k) mx = std::max(mx, x[idx(k)]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.n; ++k) {
        out[idx(k)] = std::exp(x[idx(k)] - mx);
        z += out[idx(k)];
      }
      for (std::size_t k = 0; k < sp.n; ++k) out[idx(k)] /= z;
    }
  }
  return Tensor::make_result(a.shape(), out, "softmax", {a}, [sp, y = out](detail::Node& self) {
    auto* ga = grad_ptr(self.inputs[0]);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t i = 0; i < sp.inner; ++i) {
        auto idx = [&](std::size_t k) { return (o * sp.n + k) * sp.inner + i; };
        double dot = 0.0;
        for (std::size_t k = 0; k < sp.n; ++k) dot += self.grad[idx(k)] * y[idx(k)];
        for (std::size_t k = 0; k < sp.n; ++k) ga[idx(k)] += y[idx(k)] * (self.grad[idx(k)] - dot);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.defined()) require(gamma.numel() == d, "layer_norm: gamma width does not match " + std::to_string(d));
  if (beta.defined()) require(beta.numel() == d, "layer_norm: beta width does not match " + std::to_string(d));
  const std::size_t rows = x.numel() / d;
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * d;
    const auto [lo, hi] = std::minmax_element(row, row + d);
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    // Constant rows normalise to exact zeros.
    const bool constant = *lo == *hi;
    for (std::size_t j = 0; j < d; ++j) xhat[r * d + j] = constant ? 0.0 : (row[j] - mu) * inv_std[r];
  }
  std::vector<double> out = xhat;
  if (gamma.defined() || beta.defined()) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        double v = xhat[r * d + j];
        if (gamma.defined()) v *= gamma.data()[j];
        if (beta.defined()) v += beta.data()[j];
        out[r * d + j] = v;
      }
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        auto* gx = grad_ptr(self.inputs[0]);
        const bool has_gamma = self.inputs[1].defined();
        auto* gg = has_gamma ? grad_ptr(self.inputs[1]) : nullptr;
        auto* gb = self.inputs[2].defined() ? grad_ptr(self.inputs[2]) : nullptr;
        std::vector<double> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = self.grad.data() + r * d;
          const double* xh = xhat.data() + r * d;
          double s1 = 0.0;
          double s2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = has_gamma ? g[j] * self.inputs[1].data()[j] : g[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * xh[j];
            if (gg) gg[j] += g[j] * xh[j];
            if (gb) gb[j] += g[j];
          }
          if (gx) {
            const double scale_r = inv_std[r] / static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              gx[r * d + j] += scale_r * (static_cast<double>(d) * dxhat[j] - s1 - xh[j] * s2);
            }
          }
        }
      });
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, bool training) {
  require(x.ndim() == 4, "batch_norm2d: input must be [N, C, H, W], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  require(gamma.numel() == c && beta.numel() == c,
          "batch_norm2d: affine parameters do not match channel count " + std::to_string(c));
  if (stats.running_mean.size() != c) stats.running_mean.assign(c, 0.0);
  if (stats.running_var.size() != c) stats.running_var.assign(c, 1.0);

  const double count = static_cast<double>(n * hw);
  std::vector<double> mu(c, 0.0);
  std::vector<double> inv_std(c);
  auto xd = x.data();
  if (training) {
    std::vector<double> var(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xd.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) mu[ch] += p[i];
      }
      mu[ch] /= count;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = xd.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) var[ch] += (p[i] - mu[ch]) * (p[i] - mu[ch]);
      }
      var[ch] /= count;
      inv_std[ch] = 1.0 / std::sqrt(var[ch] + stats.eps);
      const double unbiased = count > 1.0 ? var[ch] * count / (count - 1.0) : var[ch];
      stats.running_mean[ch] = (1.0 - stats.momentum) * stats.running_mean[ch] + stats.momentum * mu[ch];
      stats.running_var[ch] = (1.0 - stats.momentum) * stats.running_var[ch] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = stats.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(stats.running_var[ch] + stats.eps);
    }
  }

  std::vector<double> xhat(x.numel());
  std::vector<double> out(x.numel());
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        xhat[base + i] = (xd[base + i] - mu[ch]) * inv_std[ch];
        out[base + i] = gd[ch] * xhat[base + i] + bd[ch];
      }
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), training ? "batch_norm2d[train]" : "batch_norm2d[eval]", {x, gamma, beta},
      [n, c, hw, count, training, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        auto* gx = grad_ptr(self.inputs[0]);
        auto* gg = grad_ptr(self.inputs[1]);
        auto* gb = grad_ptr(self.inputs[2]);
        auto gamma_d = self.inputs[1].data();
        for (std::size_t ch = 0; ch < c; ++ch) {
          double s1 = 0.0;
          double s2 = 0.0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              s1 += self.grad[base + i];
              s2 += self.grad[base + i] * xhat[base + i];
            }
          }
          if (gg) gg[ch] += s2;
          if (gb) gb[ch] += s1;
          if (!gx) continue;
          const double k = gamma_d[ch] * inv_std[ch];
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              if (training) {
                gx[base + i] += k * (self.grad[base + i] - s1 / count - xhat[base + i] * s2 / count);
              } else {
                gx[base + i] += k * self.grad[base + i];
              }
            }
          }
        }
      });
}

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw std::invalid_argument("stride must be positive");
  if (in + 2 * pad < kernel) {
    throw std::invalid_argument("padded size " + std::to_string(in + 2 * pad) + " is smaller than kernel " +
                                std::to_string(kernel));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace {

struct ConvGeom {
  std::size_t batch, cin, h, w, cout, kh, kw, ho, wo;
  Pair stride, pad;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t plane() const { return ho * wo; }
};

// col[patch, count * plane] for images [first, first + count).
void im2col(const ConvGeom& g, const double* input, std::size_t first, std::size_t count, double* col) {
  const std::size_t width = count * g.plane();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * width;
        for (std::size_t img = 0; img < count; ++img) {
          const double* src = input + ((first + img) * g.cin + c) * g.h * g.w;
          double* dst = row + img * g.plane();
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride.h + ki) - static_cast<long>(g.pad.h);
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride.w + kj) - static_cast<long>(g.pad.w);
              const bool inside = iy >= 0 && iy < static_cast<long>(g.h) && ix >= 0 && ix < static_cast<long>(g.w);
              dst[oy * g.wo + ox] = inside ? src[iy * static_cast<long>(g.w) + ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeom& g, const double* col, std::size_t first, std::size_t count, double* grad_input) {
  const std::size_t width = count * g.plane();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * width;
        for (std::size_t img = 0; img < count; ++img) {
          double* dst = grad_input + ((first + img) * g.cin + c) * g.h * g.w;
          const double* src = row + img * g.plane();
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride.h + ki) - static_cast<long>(g.pad.h);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride.w + kj) - static_cast<long>(g.pad.w);
              if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
              dst[iy * static_cast<long>(g.w) + ix] += src[oy * g.wo + ox];
            }
          }
        }
      }
    }
  }
}

constexpr std::size_t kColumnBudget = std::size_t{1} << 22;  // doubles per im2col chunk

std::size_t chunk_images(const ConvGeom& g) {
  return std::clamp<std::size_t>(kColumnBudget / (g.patch() * g.plane()), 1, g.batch);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Pair stride, Pair pad) {
  require(input.ndim() == 4, "conv2d: input must be [B, Cin, H, W], got " + shape_str(input.shape()));
  require(weight.ndim() == 4, "conv2d: weight must be [Cout, Cin, kh, kw], got " + shape_str(weight.shape()));
  require(stride.h > 0 && stride.w > 0, "conv2d: stride must be positive");
  ConvGeom g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), weight.dim(2), weight.dim(3),
             0,            0,            stride,       pad};
  require(weight.dim(1) == g.cin, "conv2d: input channels (dimension 1) " + std::to_string(g.cin) +
                                      " do not match weight channels " + std::to_string(weight.dim(1)));
  require(g.h + 2 * pad.h >= g.kh, "conv2d: padded height " + std::to_string(g.h + 2 * pad.h) +
                                       " is smaller than kernel height " + std::to_string(g.kh));
  require(g.w + 2 * pad.w >= g.kw, "conv2d: padded width " + std::to_string(g.w + 2 * pad.w) +
                                       " is smaller than kernel width " + std::to_string(g.kw));
  if (bias.defined()) {
    require(bias.ndim() == 1 && bias.dim(0) == g.cout,
            "conv2d: bias length " + std::to_string(bias.numel()) + " does not match output channels " +
                std::to_string(g.cout));
  }
  g.ho = conv_out_size(g.h, g.kh, stride.h, pad.h);
  g.wo = conv_out_size(g.w, g.kw, stride.w, pad.w);

  std::vector<double> out(g.batch * g.cout * g.plane());
  const std::size_t chunk = chunk_images(g);
  std::vector<double> col(g.patch() * chunk * g.plane());
  std::vector<double> tmp(g.cout * chunk * g.plane());
  ConstMatMap wmat(weight.data().data(), g.cout, g.patch());
  for (std::size_t first = 0; first < g.batch; first += chunk) {
    const std::size_t count = std::min(chunk, g.batch - first);
    const std::size_t width = count * g.plane();
    im2col(g, input.data().data(), first, count, col.data());
    MatMap(tmp.data(), g.cout, width).noalias() = wmat * ConstMatMap(col.data(), g.patch(), width);
    for (std::size_t img = 0; img < count; ++img) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        const double b = bias.defined() ? bias.data()[co] : 0.0;
        const double* src = tmp.data() + co * width + img * g.plane();
        double* dst = out.data() + ((first + img) * g.cout + co) * g.plane();
        for (std::size_t p = 0; p < g.plane(); ++p) dst[p] = src[p] + b;
      }
    }
  }

  return Tensor::make_result({g.batch, g.cout, g.ho, g.wo}, std::move(out), "conv2d", {input, weight, bias},
                             [g](detail::Node& self) {
                               auto* gin = grad_ptr(self.inputs[0]);
                               auto* gw = grad_ptr(self.inputs[1]);
                               auto* gbias = self.inputs[2].defined() ? grad_ptr(self.inputs[2]) : nullptr;
                               const std::size_t chunk = chunk_images(g);
                               std::vector<double> col(g.patch() * chunk * g.plane());
                               std::vector<double> gout(g.cout * chunk * g.plane());
                               ConstMatMap wmat(self.inputs[1].data().data(), g.cout, g.patch());
                               for (std::size_t first = 0; first < g.batch; first += chunk) {
                                 const std::size_t count = std::min(chunk, g.batch - first);
                                 const std::size_t width = count * g.plane();
                                 for (std::size_t img = 0; img < count; ++img) {
                                   for (std::size_t co = 0; co < g.cout; ++co) {
                                     const double* src = self.grad.data() + ((first + img) * g.cout + co) * g.plane();
                                     std::copy_n(src, g.plane(), gout.data() + co * width + img * g.plane());
                                     if (gbias) {
                                       for (std::size_t p = 0; p < g.plane(); ++p) gbias[co] += src[p];
                                     }
                                   }
                                 }
                                 ConstMatMap gmat(gout.data(), g.cout, width);
                                 if (gw) {
                                   im2col(g, self.inputs[0].data().data(), first, count, col.data());
                                   MatMap(gw, g.cout, g.patch()).noalias() +=
                                       gmat * ConstMatMap(col.data(), g.patch(), width).transpose();
                                 }
                                 if (gin) {
                                   MatMap(col.data(), g.patch(), width).noalias() = wmat.transpose() * gmat;
                                   col2im_add(g, col.data(), first, count, gin);
                                 }
                               }
                             });
}

Tensor max_pool2d(const Tensor& input, Pair kernel, Pair stride) {
  require(input.ndim() == 4, "max_pool2d: input must be [N, C, H, W], got " + shape_str(input.shape()));
  const std::size_t n = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2);
  const std::size_t w = input.dim(3);
  require(h >= kernel.h && w >= kernel.w, "max_pool2d: window " + std::to_string(kernel.h) + "x" +
                                              std::to_string(kernel.w) + " exceeds input " + std::to_string(h) + "x" +
                                              std::to_string(w));
  const std::size_t ho = conv_out_size(h, kernel.h, stride.h, 0);
  const std::size_t wo = conv_out_size(w, kernel.w, stride.w, 0);
  std::vector<double> out(n * ho * wo);
  std::vector<std::size_t> arg(out.size());
  auto x = input.data();
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t ky = 0; ky < kernel.h; ++ky) {
          for (std::size_t kx = 0; kx < kernel.w; ++kx) {
            const std::size_t i = p * h * w + (oy * stride.h + ky) * w + ox * stride.w + kx;
            if (x[i] > best) {
              best = x[i];
              best_i = i;
            }
          }
        }
        out[(p * ho + oy) * wo + ox] = best;
        arg[(p * ho + oy) * wo + ox] = best_i;
      }
    }
  }
  return Tensor::make_result({input.dim(0), input.dim(1), ho, wo}, std::move(out), "max_pool2d", {input},
                             [arg = std::move(arg)](detail::Node& self) {
                               auto* gi = grad_ptr(self.inputs[0]);
                               for (std::size_t i = 0; i < arg.size(); ++i) gi[arg[i]] += self.grad[i];
                             });
}

Tensor global_avg_pool2d(const Tensor& input) {
  require(input.ndim() == 4, "global_avg_pool2d: input must be [N, C, H, W], got " + shape_str(input.shape()));
  return mean(reshape(input, {input.dim(0), input.dim(1), input.dim(2) * input.dim(3)}), 2);
}

Tensor global_max_pool2d(const Tensor& input) {
  require(input.ndim() == 4, "global_max_pool2d: input must be [N, C, H, W], got " + shape_str(input.shape()));
  return max(reshape(input, {input.dim(0), input.dim(1), input.dim(2) * input.dim(3)}), 2);
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u >= rate ? keep_scale : 0.0;
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  return Tensor::make_result(x.shape(), std::move(out), "dropout", {x}, [mask = std::move(mask)](detail::Node& self) {
    auto* gx = grad_ptr(self.inputs[0]);
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += mask[i] * self.grad[i];
  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require(logits.ndim() == 2, "cross_entropy: logits must be [B, C], got " + shape_str(logits.shape()));
  const std::size_t b = logits.dim(0);
  const std::size_t c = logits.dim(1);
  require(labels.size() == b, "cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                                  std::to_string(b));
  std::vector<double> probs(b * c);
  double loss = 0.0;
  auto x = logits.data();
  for (std::size_t i = 0; i < b; ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < c,
            "cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(c) + ")");
    const double* row = x.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - mx) / z;
    loss += -(row[labels[i]] - mx - std::log(z));
  }
  loss /= static_cast<double>(b);
  return Tensor::make_result({1}, {loss}, "cross_entropy", {logits},
                             [b, c, labels, probs = std::move(probs)](detail::Node& self) {
                               auto* gl = grad_ptr(self.inputs[0]);
                               const double g = self.grad[0] / static_cast<double>(b);
                               for (std::size_t i = 0; i < b; ++i) {
                                 for (std::size_t j = 0; j < c; ++j) {
                                   const double target = static_cast<int>(j) == labels[i] ? 1.0 : 0.0;
                                   gl[i * c + j] += g * (probs[i * c + j] - target);
                                 }
                               }
                             });
}

Tensor lstm_layer(const Tensor& x, const Tensor& w_input, const Tensor& w_hidden, const Tensor& bias) {
  require(x.ndim() == 3, "lstm: input must be [B, T, Din], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0);
  const std::size_t steps = x.dim(1);
  const std::size_t din = x.dim(2);
  require(w_hidden.ndim() == 2 && w_hidden.dim(1) == 4 * w_hidden.dim(0),
          "lstm: hidden weight must be [H, 4H], got " + shape_str(w_hidden.shape()));
  const std::size_t hid = w_hidden.dim(0);
  require(w_input.ndim() == 2 && w_input.dim(0) == din && w_input.dim(1) == 4 * hid,
          "lstm: input weight must be [" + std::to_string(din) + ", " + std::to_string(4 * hid) + "], got " +
              shape_str(w_input.shape()));
  require(bias.numel() == 4 * hid, "lstm: bias must have " + std::to_string(4 * hid) + " entries");
  require(all_finite(x.data()), "lstm: input contains non-finite values");

  const std::size_t g4 = 4 * hid;
  // Pre-activations from the input path for every (b, t) row at once.
  RowMat zx = ConstMatMap(x.data().data(), batch * steps, din) * ConstMatMap(w_input.data().data(), din, g4);
  zx.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), static_cast<Eigen::Index>(g4));

  // gates[t] is [B, 4H] post-activation (i, f, g, o); cells[t] is [B, H].
  std::vector<RowMat> gates(steps);
  std::vector<RowMat> cells(steps);
  std::vector<RowMat> hiddens(steps);
  RowMat h_prev = RowMat::Zero(batch, hid);
  RowMat c_prev = RowMat::Zero(batch, hid);
  ConstMatMap wh(w_hidden.data().data(), hid, g4);
  std::vector<double> out(batch * steps * hid);
  for (std::size_t t = 0; t < steps; ++t) {
    RowMat z = h_prev * wh;
    for (std::size_t b = 0; b < batch; ++b) z.row(b) += zx.row(b * steps + t);
    RowMat& a = gates[t];
    a.resize(batch, g4);
    RowMat c(batch, hid);
    RowMat h(batch, hid);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < hid; ++j) {
        const double ig = sigmoid(z(b, j));
        const double fg = sigmoid(z(b, hid + j));
        const double gg = std::tanh(z(b, 2 * hid + j));
        const double og = sigmoid(z(b, 3 * hid + j));
        a(b, j) = ig;
        a(b, hid + j) = fg;
        a(b, 2 * hid + j) = gg;
        a(b, 3 * hid + j) = og;
        c(b, j) = fg * c_prev(b, j) + ig * gg;
        h(b, j) = og * std::tanh(c(b, j));
        out[(b * steps + t) * hid + j] = h(b, j);
      }
    }
    cells[t] = c;
    hiddens[t] = h;
    h_prev = std::move(h);
    c_prev = std::move(c);
  }

  return Tensor::make_result(
      {batch, steps, hid}, std::move(out), "lstm", {x, w_input, w_hidden, bias},
      [batch, steps, din, hid, g4, gates = std::move(gates), cells = std::move(cells),
       hiddens = std::move(hiddens)](detail::Node& self) {
        auto* gx = grad_ptr(self.inputs[0]);
        auto* gwx = grad_ptr(self.inputs[1]);
        auto* gwh = grad_ptr(self.inputs[2]);
        auto* gb = grad_ptr(self.inputs[3]);
        ConstMatMap wx(self.inputs[1].data().data(), din, g4);
        ConstMatMap wh(self.inputs[2].data().data(), hid, g4);
        const double* xd = self.inputs[0].data().data();

        RowMat dz_all(batch * steps, g4);
        RowMat dh_next = RowMat::Zero(batch, hid);
        RowMat dc_next = RowMat::Zero(batch, hid);
        RowMat dz(batch, g4);
        for (std::size_t t = steps; t-- > 0;) {
          const RowMat& a = gates[t];
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t j = 0; j < hid; ++j) {
              const double ig = a(b, j);
              const double fg = a(b, hid + j);
              const double gg = a(b, 2 * hid + j);
              const double og = a(b, 3 * hid + j);
              const double tc = std::tanh(cells[t](b, j));
              const double c_before = t > 0 ? cells[t - 1](b, j) : 0.0;
              const double dh = self.grad[(b * steps + t) * hid + j] + dh_next(b, j);
              const double dc = dh * og * (1.0 - tc * tc) + dc_next(b, j);
              dz(b, j) = dc * gg * ig * (1.0 - ig);
              dz(b, hid + j) = dc * c_before * fg * (1.0 - fg);
              dz(b, 2 * hid + j) = dc * ig * (1.0 - gg * gg);
              dz(b, 3 * hid + j) = dh * tc * og * (1.0 - og);
              dc_next(b, j) = dc * fg;
            }
          }
          for (std::size_t b = 0; b < batch; ++b) dz_all.row(b * steps + t) = dz.row(b);
          if (gwh && t > 0) MatMap(gwh, hid, g4).noalias() += hiddens[t - 1].transpose() * dz;
          dh_next.noalias() = dz * wh.transpose();
        }
        if (gwx) MatMap(gwx, din, g4).noalias() += ConstMatMap(xd, batch * steps, din).transpose() * dz_all;
        if (gb) {
          Eigen::Map<Eigen::RowVectorXd>(gb, static_cast<Eigen::Index>(g4)) += dz_all.colwise().sum();
        }
        if (gx) MatMap(gx, batch * steps, din).noalias() += dz_all * wx.transpose();
      });
}

}  // namespace cefnet::ad
