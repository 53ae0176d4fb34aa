#include "cefnet/exp/ablation.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <set>
#include <stdexcept>

namespace cefnet::exp {

namespace {

using model::DirectionalBlock;
using model::FusionConfig;
using model::GuidanceMode;
using model::Modality;

FusionConfig full(const FusionConfig& base) {
  FusionConfig c = base;
  c.modality = Modality::EyeAndFace;
  c.use_dacm = true;
  c.use_cefam = true;
  c.guidance_mode = GuidanceMode::FaceToEye;
  c.global_enhancement = true;
  return c;
}

FusionConfig without_cefam(FusionConfig c) {
  c.use_cefam = false;
  c.guidance_mode.reset();
  c.global_enhancement = false;
  return c;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void AblationPlan::validate() const {
  if (rows.empty()) throw std::invalid_argument("ablation plan '" + name + "' has no rows");
  std::set<std::string> ids;
  for (const auto& r : rows) {
    if (!ids.insert(r.id).second) throw std::invalid_argument("duplicate config id '" + r.id + "' in plan " + name);
    try {
      r.config.validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config '" + r.id + "': " + e.what());
    }
  }
}

AblationPlan modality_plan(const FusionConfig& base) {
  AblationPlan p{"modalities", "Modality", {}};
  FusionConfig eye = without_cefam(full(base));
  eye.modality = Modality::EyeOnly;
  eye.use_dacm = false;
  FusionConfig face = without_cefam(full(base));
  face.modality = Modality::FaceOnly;
  p.rows = {{"eye", "Eye", eye}, {"face", "Face", face}, {"eye_face", "Eye+Face", full(base)}};
  return p;
}

AblationPlan module_plan(const FusionConfig& base) {
  AblationPlan p{"modules", "Model", {}};
  FusionConfig m1 = without_cefam(full(base));
  m1.use_dacm = false;
  FusionConfig m2 = without_cefam(full(base));
  FusionConfig m3 = full(base);
  m3.use_dacm = false;
  p.rows = {{"model_1", "Model I", m1}, {"model_2", "Model II", m2}, {"model_3", "Model III", m3},
            {"model_4", "Model IV", full(base)}};
  return p;
}

AblationPlan guidance_plan(const FusionConfig& base) {
  AblationPlan p{"guidance", "Setting", {}};
  const std::pair<GuidanceMode, const char*> modes[] = {
      {GuidanceMode::EyeToFace, "Eye->Face"}, {GuidanceMode::Bidirectional, "Eye<->Face"}, {GuidanceMode::FaceToEye, "Face->Eye"}};
  for (const auto& [mode, name] : modes)
    for (std::size_t heads : {1, 2, 4})
      for (std::size_t embed : {64, 128}) {
        FusionConfig c = full(base);
        c.guidance_mode = mode;
        c.global_enhancement = false;
        c.num_heads = heads;
        c.embed_dim = embed;
        p.rows.push_back({model::to_string(mode) + "_h" + std::to_string(heads) + "_d" + std::to_string(embed),
                          std::string(name) + " h=" + std::to_string(heads) + " d=" + std::to_string(embed), c});
      }
  return p;
}

AblationPlan directional_plan(const FusionConfig& base) {
  AblationPlan p{"directional", "Module", {}};
  for (auto block : {DirectionalBlock::Dacm, DirectionalBlock::Conv3x3, DirectionalBlock::Conv5x5}) {
    FusionConfig c = full(base);
    c.directional_block = block;
    const std::string label = block == DirectionalBlock::Dacm ? "DACM" : block == DirectionalBlock::Conv3x3 ? "Conv3x3" : "Conv5x5";
    p.rows.push_back({model::to_string(block), label, c});
  }
  return p;
}

AblationPlan plan_by_name(const std::string& name, const FusionConfig& base) {
  if (name == "modalities") return modality_plan(base);
  if (name == "modules") return module_plan(base);
  if (name == "guidance") return guidance_plan(base);
  if (name == "directional") return directional_plan(base);
  throw std::invalid_argument("unknown ablation plan '" + name + "' (modalities, modules, guidance, directional)");
}

std::vector<AblationRow> run_ablation(const AblationPlan& plan, const std::vector<data::TrialSample>& samples,
                                      const data::FoldPlan& folds, const TrainConfig& config, const LogFn& log) {
  plan.validate();
  std::vector<AblationRow> out;
  for (const auto& row : plan.rows) {
    if (log) log("config " + row.id + ": " + row.config.describe());
    LogFn row_log;
    if (log) row_log = [&](const std::string& m) { log(row.id + " " + m); };
    out.push_back({row, cross_validate(samples, folds, row.config, config, row_log)});
  }
  return out;
}

void write_table_csv(std::ostream& os, const AblationPlan& plan, const std::vector<AblationRow>& rows) {
  os << plan.first_column << ",id," << kMetricColumns << '\n';
  for (const auto& r : rows) {
    const auto& s = r.result.summary;
    os << r.row.label << ',' << r.row.id << ',' << format_percent(s.accuracy) << ',' << format_percent(s.precision)
       << ',' << format_percent(s.recall) << ',' << format_percent(s.f1) << ',' << format_percent(s.auc) << '\n';
  }
}

void write_fold_metrics_csv(std::ostream& os, const std::string& config_id, const CvResult& cv) {
  os << "config,fold," << kMetricColumns << ",best_epoch,epochs_run,undefined\n";
  for (const auto& f : cv.folds) {
    std::string undefined;
    for (const auto& u : f.metrics.undefined) undefined += (undefined.empty() ? "" : ";") + u;
    os << config_id << ',' << f.fold << ',' << num(f.metrics.accuracy) << ',' << num(f.metrics.precision) << ','
       << num(f.metrics.recall) << ',' << num(f.metrics.f1) << ',' << num(f.metrics.auc) << ','
       << f.training.best_epoch << ',' << f.training.history.size() << ',' << undefined << '\n';
  }
}

void write_predictions_csv(std::ostream& os, const std::string& config_id, const std::vector<Prediction>& preds) {
  os << "config,fold,participant_id,trial,difficulty,label,predicted,p_ad\n";
  for (const auto& p : preds) {
    os << config_id << ',' << p.fold << ',' << p.participant << ',' << p.trial << ',' << p.difficulty << ','
       << data::label_name(p.label) << ',' << data::label_name(p.predicted) << ',' << num(p.p_ad) << '\n';
  }
}

void write_difficulty_csv(std::ostream& os, const std::string& config_id, const std::vector<Prediction>& preds) {
  os << "config,level,trials," << kMetricColumns << ",undefined\n";
  for (const auto& [level, m] : difficulty_breakdown(preds)) {
    std::size_t n = 0;
    for (const auto& p : preds) n += p.difficulty == level;
    std::string undefined;
    for (const auto& u : m.undefined) undefined += (undefined.empty() ? "" : ";") + u;
    os << config_id << ',' << level << ',' << n << ',' << num(m.accuracy) << ',' << num(m.precision) << ','
       << num(m.recall) << ',' << num(m.f1) << ',' << num(m.auc) << ',' << undefined << '\n';
  }
}

void read_fold_metrics_csv(std::istream& is, FoldMetricsByConfig& out) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.rfind("config,", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() < 7) throw std::runtime_error("fold metrics line " + std::to_string(line_no) + ": expected 7+ fields");
    Metrics m;
    try {
      m.accuracy = std::stod(f[2]);
      m.precision = std::stod(f[3]);
      m.recall = std::stod(f[4]);
      m.f1 = std::stod(f[5]);
      m.auc = std::stod(f[6]);
    } catch (const std::exception&) {
      throw std::runtime_error("fold metrics line " + std::to_string(line_no) + ": bad number");
    }
    out[f[0]].push_back(m);
  }
}

void write_summary_csv(std::ostream& os, const FoldMetricsByConfig& folds) {
  os << "config," << kMetricColumns << ",folds\n";
  for (const auto& [id, metrics] : folds) {
    const MetricsSummary s = summarize(metrics);
    os << id << ',' << format_percent(s.accuracy) << ',' << format_percent(s.precision) << ','
       << format_percent(s.recall) << ',' << format_percent(s.f1) << ',' << format_percent(s.auc) << ','
       << metrics.size() << '\n';
  }
}

}  // namespace cefnet::exp
