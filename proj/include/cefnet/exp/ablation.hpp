#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cefnet/exp/training.hpp"

namespace cefnet::exp {

struct PlanRow {
  std::string id;
  std::string label;
  model::FusionConfig config;
};

struct AblationPlan {
  std::string name;
  std::string first_column = "Model";
  std::vector<PlanRow> rows;

  /// Rejects duplicate ids and invalid model configs.
  void validate() const;
};

// Built-in plans; `base` supplies encoder widths and other shared settings.
AblationPlan modality_plan(const model::FusionConfig& base);     // Eye / Face / Eye+Face
AblationPlan module_plan(const model::FusionConfig& base);       // Model I-IV
AblationPlan guidance_plan(const model::FusionConfig& base);     // 3 modes x heads {1,2,4} x embed {64,128}
AblationPlan directional_plan(const model::FusionConfig& base);  // DACM / Conv3x3 / Conv5x5
/// "modalities", "modules", "guidance" or "directional".
AblationPlan plan_by_name(const std::string& name, const model::FusionConfig& base);

struct AblationRow {
  PlanRow row;
  CvResult result;
};

std::vector<AblationRow> run_ablation(const AblationPlan& plan, const std::vector<data::TrialSample>& samples,
                                      const data::FoldPlan& folds, const TrainConfig& config, const LogFn& log = {});

inline constexpr const char* kMetricColumns = "Accuracy,Precision,Recall,F1-score,AUC";

/// One row per plan entry, metrics as mean±std percentages.
void write_table_csv(std::ostream& os, const AblationPlan& plan, const std::vector<AblationRow>& rows);
void write_fold_metrics_csv(std::ostream& os, const std::string& config_id, const CvResult& cv);
void write_predictions_csv(std::ostream& os, const std::string& config_id, const std::vector<Prediction>& preds);
void write_difficulty_csv(std::ostream& os, const std::string& config_id, const std::vector<Prediction>& preds);

/// Per-config fold metrics read back from write_fold_metrics_csv output
/// (several files may be concatenated; repeated headers are skipped).
using FoldMetricsByConfig = std::map<std::string, std::vector<Metrics>>;
void read_fold_metrics_csv(std::istream& is, FoldMetricsByConfig& out);
/// config,Accuracy,...,AUC,folds with mean±std percentages.
void write_summary_csv(std::ostream& os, const FoldMetricsByConfig& folds);

}  // namespace cefnet::exp
