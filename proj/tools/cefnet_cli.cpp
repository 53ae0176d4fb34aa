#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>

#include "cefnet/data/io.hpp"
#include "cefnet/data/synthetic.hpp"
#include "cefnet/exp/ablation.hpp"
#include "cefnet/exp/config.hpp"
#include "cefnet/exp/gradcam.hpp"
#include "cefnet/nn/checkpoint.hpp"

using namespace cefnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> folds;
  std::string config;
  std::string out;
  bool desk_scale = false;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out = true) {
  cmd->add_option("--seed", c.seed, "RNG seed (overrides the config)");
  cmd->add_option("--folds", c.folds, "number of CV folds (overrides the config)");
  cmd->add_option("--config", c.config, "JSON config with model/train/synthetic sections")->check(CLI::ExistingFile);
  auto* out = cmd->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  cmd->add_flag("--desk-scale", c.desk_scale, "small images, few participants, short training budget");
}

exp::ExperimentConfig resolve(const Common& c) {
  exp::ExperimentConfig cfg =
      c.config.empty() ? exp::default_config(c.desk_scale) : exp::load_config(c.config, c.desk_scale);
  if (c.seed) cfg.train.seed = cfg.synthetic.seed = *c.seed;
  if (c.folds) cfg.train.folds = *c.folds;
  cfg.train.validate();
  cfg.synthetic.validate();
  return cfg;
}

std::mutex log_mutex;
exp::LogFn stderr_log() {
  return [](const std::string& msg) {
    std::lock_guard lock(log_mutex);
    std::cerr << msg << '\n';
  };
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  return json::parse(in);
}

json stats_json(const data::ChannelStats& s) { return {{"mean", s.mean}, {"stddev", s.stddev}, {"warnings", s.warnings}}; }

data::ChannelStats stats_from(const json& j) {
  data::ChannelStats s;
  s.mean = j.at("mean").get<decltype(s.mean)>();
  s.stddev = j.at("stddev").get<decltype(s.stddev)>();
  return s;
}

json plan_json(const data::FoldPlan& plan) { return {{"k", plan.k}, {"seed", plan.seed}, {"folds", plan.folds}}; }

fs::path manifest_path(const std::string& arg) {
  fs::path p(arg);
  return fs::is_directory(p) ? p / "manifest.jsonl" : p;
}

// ---------------------------------------------------------------- subcommands

int cmd_synth(const Common& c, const std::string& preset) {
  exp::ExperimentConfig cfg = resolve(c);
  if (!preset.empty()) {
    const auto keep = cfg.synthetic;
    cfg.synthetic = data::preset(preset);
    cfg.synthetic.participants_per_class = keep.participants_per_class;
    cfg.synthetic.image_size = keep.image_size;
    cfg.synthetic.seed = keep.seed;
  }
  const fs::path out(c.out);
  fs::create_directories(out);
  std::vector<data::ManifestEntry> entries;
  data::SyntheticSpec spec = cfg.synthetic;
  // Only raw files are kept; the processed samples are discarded here and rebuilt by `prep`.
  data::synthesize_dataset(spec, [&](const data::RawTrial& raw) { entries.push_back(data::write_raw_trial(out, raw)); });
  data::write_manifest(out / "raw_manifest.jsonl", entries);
  write_json(out / "synthetic.json", exp::to_json(cfg).at("synthetic"));
  std::cout << "wrote " << entries.size() << " raw trials to " << (out / "raw_manifest.jsonl").string() << '\n';
  return 0;
}

int cmd_prep(const std::string& in, const std::string& out_dir) {
  fs::path manifest(in);
  if (fs::is_directory(manifest)) manifest /= "raw_manifest.jsonl";
  const fs::path out(out_dir);
  fs::create_directories(out);
  std::vector<data::ManifestEntry> entries;
  for (const auto& e : data::read_manifest(manifest)) {
    const data::TrialSample s = data::preprocess_trial(data::read_raw_trial(manifest.parent_path(), e));
    entries.push_back(data::write_sample(out, s));
  }
  data::write_manifest(out / "manifest.jsonl", entries);
  std::cout << "prepared " << entries.size() << " trials into " << (out / "manifest.jsonl").string() << '\n';
  return 0;
}

std::vector<data::TrialSample> load_or_synthesize(const std::string& data_arg, const exp::ExperimentConfig& cfg) {
  if (!data_arg.empty()) return data::load_dataset(manifest_path(data_arg));
  std::cerr << "no --data given: synthesizing " << 2 * cfg.synthetic.participants_per_class << " participants at "
            << cfg.synthetic.image_size << "x" << cfg.synthetic.image_size << '\n';
  return data::synthesize_dataset(cfg.synthetic);
}

void write_cv_outputs(const fs::path& dir, const std::string& id, const exp::CvResult& cv,
                      const std::vector<data::TrialSample>& samples, const data::FoldPlan& plan,
                      const exp::TrainConfig& train) {
  fs::create_directories(dir);
  for (const auto& f : cv.folds) {
    const fs::path fd = dir / ("fold_" + std::to_string(f.fold));
    fs::create_directories(fd);
    nn::save_checkpoint(fd / "checkpoint.bin", f.checkpoint);
    const exp::FoldSplit split = exp::split_fold(samples, plan, f.fold, train.seed);
    write_json(fd / "split.json", {{"validation_participants", split.val_participants},
                                   {"stats", stats_json(split.stats)},
                                   {"best_epoch", f.training.best_epoch},
                                   {"stopped_early", f.training.stopped_early}});
    auto log = open_out(fd / "train_log.csv");
    log << "epoch,train_loss,val_loss,val_accuracy\n";
    for (const auto& e : f.training.history)
      log << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_accuracy << '\n';
  }
  auto fm = open_out(dir / "fold_metrics.csv");
  exp::write_fold_metrics_csv(fm, id, cv);
  auto pr = open_out(dir / "predictions.csv");
  const auto preds = cv.all_predictions();
  exp::write_predictions_csv(pr, id, preds);
  auto dc = open_out(dir / "difficulty.csv");
  exp::write_difficulty_csv(dc, id, preds);
}

int cmd_train(const Common& c, const std::string& data_arg, std::size_t jobs, const std::string& id) {
  exp::ExperimentConfig cfg = resolve(c);
  if (jobs) cfg.train.jobs = jobs;
  const auto samples = load_or_synthesize(data_arg, cfg);
  const auto plan = data::stratified_group_kfold(data::participants_of(samples), cfg.train.folds, cfg.train.seed);
  const fs::path out(c.out);
  fs::create_directories(out);
  write_json(out / "config.json", exp::to_json(cfg));
  write_json(out / "folds.json", plan_json(plan));
  std::cerr << "training " << cfg.model.describe() << " on " << samples.size() << " trials, " << plan.k << " folds\n";
  const auto t0 = std::chrono::steady_clock::now();
  const exp::CvResult cv = exp::cross_validate(samples, plan, cfg.model, cfg.train, stderr_log());
  write_cv_outputs(out, id, cv, samples, plan, cfg.train);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  exp::FoldMetricsByConfig by_config;
  for (const auto& f : cv.folds) by_config[id].push_back(f.metrics);
  auto summary = open_out(out / "summary.csv");
  exp::write_summary_csv(summary, by_config);
  exp::write_summary_csv(std::cout, by_config);
  std::cerr << "done in " << secs << " s\n";
  return 0;
}

exp::AblationPlan load_plan(const std::string& arg, const exp::ExperimentConfig& cfg) {
  if (!fs::exists(arg)) return exp::plan_by_name(arg, cfg.model);
  // {"name": ..., "first_column": ..., "rows": [{"id": ..., "label": ..., "model": {...}}]}
  const json doc = read_json(arg);
  exp::AblationPlan plan;
  plan.name = doc.value("name", fs::path(arg).stem().string());
  plan.first_column = doc.value("first_column", "Model");
  for (const auto& r : doc.at("rows")) {
    exp::ExperimentConfig row = cfg;
    if (r.contains("model")) exp::apply_json(row, json{{"model", r.at("model")}});
    const std::string id = r.at("id").get<std::string>();
    plan.rows.push_back({id, r.value("label", id), row.model});
  }
  return plan;
}

int cmd_ablate(const Common& c, const std::string& data_arg, const std::string& plan_arg, std::size_t jobs) {
  exp::ExperimentConfig cfg = resolve(c);
  if (jobs) cfg.train.jobs = jobs;
  const exp::AblationPlan plan = load_plan(plan_arg, cfg);
  plan.validate();
  const auto samples = load_or_synthesize(data_arg, cfg);
  const auto folds = data::stratified_group_kfold(data::participants_of(samples), cfg.train.folds, cfg.train.seed);
  const fs::path out(c.out);
  fs::create_directories(out);
  write_json(out / "config.json", exp::to_json(cfg));
  write_json(out / "folds.json", plan_json(folds));
  const auto rows = exp::run_ablation(plan, samples, folds, cfg.train, stderr_log());
  for (const auto& r : rows) {
    write_cv_outputs(out / r.row.id, r.row.id, r.result, samples, folds, cfg.train);
    exp::ExperimentConfig row_cfg = cfg;
    row_cfg.model = r.row.config;
    write_json(out / r.row.id / "config.json", exp::to_json(row_cfg));
  }
  auto table = open_out(out / (plan.name + ".csv"));
  exp::write_table_csv(table, plan, rows);
  exp::write_table_csv(std::cout, plan, rows);
  return 0;
}

int cmd_gradcam(const std::string& run_arg, const std::string& data_arg, const std::string& out_arg,
                std::optional<std::size_t> only_fold, std::size_t max_maps) {
  const fs::path run(run_arg);
  exp::ExperimentConfig cfg = exp::default_config(false);
  exp::apply_json(cfg, read_json(run / "config.json"));
  if (cfg.model.modality == model::Modality::EyeOnly || !cfg.model.use_dacm) {
    throw std::invalid_argument("this run has no directional block to explain (" + cfg.model.describe() + ")");
  }
  const json folds_doc = read_json(run / "folds.json");
  data::FoldPlan plan;
  plan.k = folds_doc.at("k");
  plan.seed = folds_doc.at("seed");
  plan.folds = folds_doc.at("folds").get<std::vector<std::vector<std::string>>>();
  const auto samples = data::load_dataset(manifest_path(data_arg));
  const fs::path out(out_arg);
  fs::create_directories(out / "maps");

  auto regions = open_out(out / "regions.csv");
  regions << "fold,participant_id,trial,label,predicted,p_target";
  const char* names[] = {"top_left", "top_center", "top_right", "middle_left", "middle_center",
                         "middle_right", "bottom_left", "bottom_center", "bottom_right"};
  for (const char* n : names) regions << ',' << n;
  regions << '\n';

  std::vector<exp::RegionVector> ad, hc;
  std::size_t written = 0;
  for (std::size_t k = 0; k < plan.k; ++k) {
    if (only_fold && *only_fold != k) continue;
    const fs::path fd = run / ("fold_" + std::to_string(k));
    ad::Rng rng(cfg.train.seed);
    auto net = model::build_model(cfg.model, rng);
    net->restore(nn::load_checkpoint(fd / "checkpoint.bin"));
    const data::ChannelStats stats = stats_from(read_json(fd / "split.json").at("stats"));
    const std::set<std::string> test_ids(plan.folds[k].begin(), plan.folds[k].end());
    for (const auto& s : samples) {
      if (!test_ids.count(s.participant_id)) continue;
      const exp::GradCamResult g = exp::gradcam_regional(*net, s, stats);
      regions << k << ',' << s.participant_id << ',' << s.trial << ',' << data::label_name(s.label) << ','
              << data::label_name(g.target_class) << ',' << g.target_probability;
      for (double v : g.regions) regions << ',' << v;
      regions << '\n';
      // Group maps use correctly classified trials only.
      if (g.target_class == s.label) (s.label == model::kLabelAD ? ad : hc).push_back(g.regions);
      if (written < max_maps) {
        auto pgm = open_out(out / "maps" / (s.participant_id + "_t" + std::to_string(s.trial) + ".pgm"));
        exp::write_pgm(pgm, g.heatmap);
        ++written;
      }
    }
  }
  auto diff = open_out(out / "difference.csv");
  diff << "region,ad_minus_hc\n";
  if (ad.empty() || hc.empty()) {
    std::cerr << "warning: no correctly classified " << (ad.empty() ? "AD" : "HC")
              << " trials; difference map not computed\n";
  } else {
    const auto d = exp::group_difference_map(ad, hc);
    for (std::size_t i = 0; i < 9; ++i) diff << names[i] << ',' << d[i] << '\n';
  }
  std::cout << "regions for " << ad.size() << " AD / " << hc.size() << " HC correct trials; " << written
            << " maps in " << (out / "maps").string() << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_arg) {
  exp::FoldMetricsByConfig folds;
  auto read_file = [&](const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    exp::read_fold_metrics_csv(in, folds);
  };
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::recursive_directory_iterator(in))
        if (e.path().filename() == "fold_metrics.csv") read_file(e.path());
    } else {
      read_file(in);
    }
  }
  if (folds.empty()) throw std::runtime_error("no fold metrics found");
  if (!out_arg.empty()) {
    fs::create_directories(out_arg);
    auto os = open_out(fs::path(out_arg) / "summary.csv");
    exp::write_summary_csv(os, folds);
  }
  exp::write_summary_csv(std::cout, folds);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eye-movement + facial-video fusion classifier: data, training, ablation and Grad-CAM"};
  app.require_subcommand(1);

  Common synth_c, train_c, ablate_c;
  std::string preset;
  auto* synth = app.add_subcommand("synth", "generate a synthetic raw dataset (eye CSVs + frame files)");
  add_common(synth, synth_c);
  synth->add_option("--preset", preset, "separation preset: strong | null");

  std::string prep_in, prep_out;
  auto* prep = app.add_subcommand("prep", "raw trials -> 50-step eye sequences and 50 sampled frames");
  prep->add_option("--in", prep_in, "raw_manifest.jsonl or its directory")->required();
  prep->add_option("--out", prep_out, "output directory")->required();

  std::string train_data, train_id = "model";
  std::size_t train_jobs = 0;
  auto* train = app.add_subcommand("train", "k-fold cross-validation of one model config");
  add_common(train, train_c);
  train->add_option("--data", train_data, "processed manifest.jsonl or its directory (default: synthesize)");
  train->add_option("--jobs", train_jobs, "folds trained in parallel (0 = all cores)");
  train->add_option("--id", train_id, "config id used in the CSV outputs");

  std::string ablate_data, ablate_plan;
  std::size_t ablate_jobs = 0;
  auto* ablate = app.add_subcommand("ablate", "run an ablation plan and emit a results table");
  add_common(ablate, ablate_c);
  ablate->add_option("--data", ablate_data, "processed manifest.jsonl or its directory (default: synthesize)");
  ablate->add_option("--plan", ablate_plan, "modalities | modules | guidance | directional, or a JSON plan file")
      ->required();
  ablate->add_option("--jobs", ablate_jobs, "folds trained in parallel (0 = all cores)");

  std::string cam_run, cam_data, cam_out;
  std::optional<std::size_t> cam_fold;
  std::size_t cam_maps = 20;
  auto* gradcam = app.add_subcommand("gradcam", "regional Grad-CAM of the directional block for test trials");
  gradcam->add_option("--run", cam_run, "output directory of `train`")->required()->check(CLI::ExistingDirectory);
  gradcam->add_option("--data", cam_data, "processed manifest used for training")->required();
  gradcam->add_option("--out", cam_out, "output directory")->required();
  gradcam->add_option("--fold", cam_fold, "only this fold");
  gradcam->add_option("--max-maps", cam_maps, "heatmap PGMs to write");

  std::vector<std::string> report_in;
  std::string report_out;
  auto* report = app.add_subcommand("report", "aggregate fold_metrics.csv files into mean±std");
  report->add_option("inputs", report_in, "fold_metrics.csv files or directories to search")->required();
  report->add_option("--out", report_out, "directory for summary.csv");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(synth_c, preset);
    if (*prep) return cmd_prep(prep_in, prep_out);
    if (*train) return cmd_train(train_c, train_data, train_jobs, train_id);
    if (*ablate) return cmd_ablate(ablate_c, ablate_data, ablate_plan, ablate_jobs);
    if (*gradcam) return cmd_gradcam(cam_run, cam_data, cam_out, cam_fold, cam_maps);
    if (*report) return cmd_report(report_in, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
