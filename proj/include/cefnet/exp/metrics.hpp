#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cefnet::exp {

// AD (label 1) is the positive class throughout.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

ConfusionMatrix confusion(const std::vector<int>& predicted, const std::vector<int>& actual);

/// Undefined ratios (zero denominators) are NaN and named in `undefined`.
struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  std::vector<std::string> undefined;
};

Metrics metrics_from(const ConfusionMatrix& cm);
/// Mann-Whitney AUC with midranks for ties; NaN when a class is absent.
double auc_midrank(const std::vector<double>& scores, const std::vector<int>& actual);
/// Confusion-matrix metrics plus AUC. Rejects an empty set.
Metrics evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& actual,
                             const std::vector<double>& p_ad);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // sample std across folds (n - 1)
  std::size_t n = 0;    // folds with a defined value
};

/// NaN entries are skipped; all-NaN gives NaN.
Summary summarize(const std::vector<double>& values);

struct MetricsSummary {
  Summary accuracy, precision, recall, f1, auc;
};
MetricsSummary summarize(const std::vector<Metrics>& folds);

/// "95.11±1.76" in percent, or "nan".
std::string format_percent(const Summary& s);

}  // namespace cefnet::exp
