#include "cefnet/exp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace cefnet::exp {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ratio(std::size_t num, std::size_t den, const char* name, std::vector<std::string>& undefined) {
  if (den == 0) {
    undefined.emplace_back(name);
    return kNaN;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& actual) {
  if (predicted.size() != actual.size()) throw std::invalid_argument("prediction and label counts differ");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const bool p = predicted[i] == 1, a = actual[i] == 1;
    if (p && a) ++cm.tp;
    else if (p) ++cm.fp;
    else if (a) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

Metrics metrics_from(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("cannot compute metrics on an empty test set");
  Metrics m;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  m.precision = ratio(cm.tp, cm.tp + cm.fp, "precision", m.undefined);
  m.recall = ratio(cm.tp, cm.tp + cm.fn, "recall", m.undefined);
  // F1 = 2TP / (2TP + FP + FN), equal to the harmonic mean when both are defined.
  m.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, "f1", m.undefined);
  m.auc = kNaN;
  return m;
}

double auc_midrank(const std::vector<double>& scores, const std::vector<int>& actual) {
  if (scores.size() != actual.size()) throw std::invalid_argument("score and label counts differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos_rank = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (actual[i] == 1) {
      pos_rank += rank[i];
      ++n_pos;
    }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return kNaN;
  const double np = static_cast<double>(n_pos);
  return (pos_rank - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

Metrics evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& actual,
                             const std::vector<double>& p_ad) {
  Metrics m = metrics_from(confusion(predicted, actual));
  m.auc = auc_midrank(p_ad, actual);
  if (std::isnan(m.auc)) m.undefined.emplace_back("auc");
  return m;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  double sum = 0.0;
  for (double v : values)
    if (!std::isnan(v)) {
      sum += v;
      ++s.n;
    }
  if (s.n == 0) return {kNaN, kNaN, 0};
  s.mean = sum / static_cast<double>(s.n);
  double ss = 0.0;
  for (double v : values)
    if (!std::isnan(v)) ss += (v - s.mean) * (v - s.mean);
  s.stddev = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;
  return s;
}

MetricsSummary summarize(const std::vector<Metrics>& folds) {
  auto pick = [&](double Metrics::*field) {
    std::vector<double> v;
    for (const auto& m : folds) v.push_back(m.*field);
    return summarize(v);
  };
  return {pick(&Metrics::accuracy), pick(&Metrics::precision), pick(&Metrics::recall), pick(&Metrics::f1),
          pick(&Metrics::auc)};
}

std::string format_percent(const Summary& s) {
  if (std::isnan(s.mean)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * s.mean, 100.0 * s.stddev);
  return buf;
}

}  // namespace cefnet::exp
