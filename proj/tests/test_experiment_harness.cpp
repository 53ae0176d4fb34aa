#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "cefnet/data/synthetic.hpp"
#include "cefnet/exp/ablation.hpp"
#include "cefnet/exp/config.hpp"
#include "cefnet/exp/gradcam.hpp"
#include "cefnet/exp/metrics.hpp"
#include "cefnet/exp/training.hpp"
#include "cefnet/nn/layers.hpp"

using namespace cefnet;
using exp::Metrics;
using model::FusionConfig;

namespace {

FusionConfig small_fusion() {
  FusionConfig c;
  c.face.layers = {{4, 7, 2, 3}, {8, 3, 2, 1}, {8, 3, 2, 1}, {8, 3, 2, 1}, {8, 3, 1, 1}};
  c.face.embed_dim = 8;
  c.embed_dim = 8;
  c.classifier_hidden = 6;
  c.eye.ff_dim = 12;
  return c;
}

data::TrialSample random_sample(std::size_t hw, std::mt19937_64& rng, const std::string& pid = "P000", int label = 0) {
  data::TrialSample s;
  s.participant_id = pid;
  s.label = label;
  s.eye.resize(data::kSequenceLength * 6);
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : s.eye) v = n(rng);
  s.face.count = data::kSequenceLength;
  s.face.height = s.face.width = hw;
  s.face.pixels.resize(s.face.count * s.face.frame_size());
  for (auto& p : s.face.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return s;
}

data::ChannelStats unit_stats() {
  data::ChannelStats st;
  st.mean.fill(0.0);
  st.stddev.fill(1.0);
  return st;
}

// ---- brute-force oracles, written independently of the library
struct Counts {
  int tp = 0, fp = 0, tn = 0, fn = 0;
};

Counts count(const std::vector<int>& pred, const std::vector<int>& actual) {
  Counts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && actual[i] == 1) ++c.tp;
    if (pred[i] == 1 && actual[i] == 0) ++c.fp;
    if (pred[i] == 0 && actual[i] == 0) ++c.tn;
    if (pred[i] == 0 && actual[i] == 1) ++c.fn;
  }
  return c;
}

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return pairs == 0.0 ? std::nan("") : wins / pairs;
}

bool same_or_both_nan(double a, double b, double tol) {
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  return std::abs(a - b) <= tol;
}

}  // namespace

// ---------------------------------------------------------------- metrics

TEST(Metrics, WorkedExample) {
  exp::ConfusionMatrix cm{9, 1, 8, 2};
  Metrics m = exp::metrics_from(cm);
  EXPECT_NEAR(m.accuracy, 0.85, 1e-15);
  EXPECT_NEAR(m.precision, 0.9, 1e-15);
  EXPECT_NEAR(m.recall, 9.0 / 11.0, 1e-15);
  EXPECT_NEAR(m.f1, 18.0 / 21.0, 1e-15);
  EXPECT_TRUE(m.undefined.empty());
}

TEST(Metrics, MatchesBruteForceOn200RandomCases) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 200;
    std::vector<int> pred(n), actual(n);
    std::vector<double> score(n);
    // Some cases are single-class; some use coarse scores so ties are frequent.
    const int mode = trial % 5;
    for (std::size_t i = 0; i < n; ++i) {
      actual[i] = mode == 0 ? 1 : mode == 1 ? 0 : static_cast<int>(rng() % 2);
      score[i] = mode == 2 ? static_cast<double>(rng() % 4) / 4.0 : std::uniform_real_distribution<double>(0, 1)(rng);
      pred[i] = trial % 7 == 0 ? 0 : score[i] > 0.5 ? 1 : 0;
    }
    const Counts c = count(pred, actual);
    const exp::ConfusionMatrix cm = exp::confusion(pred, actual);
    ASSERT_EQ(cm.tp, static_cast<std::size_t>(c.tp));
    ASSERT_EQ(cm.fp, static_cast<std::size_t>(c.fp));
    ASSERT_EQ(cm.tn, static_cast<std::size_t>(c.tn));
    ASSERT_EQ(cm.fn, static_cast<std::size_t>(c.fn));
    ASSERT_EQ(cm.total(), n);

    const Metrics m = exp::evaluate_predictions(pred, actual, score);
    const double nan = std::nan("");
    const double acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
    const double prec = c.tp + c.fp ? static_cast<double>(c.tp) / (c.tp + c.fp) : nan;
    const double rec = c.tp + c.fn ? static_cast<double>(c.tp) / (c.tp + c.fn) : nan;
    const double f1 = (std::isnan(prec) || std::isnan(rec) || prec + rec == 0.0)
                          ? (c.tp + c.fp + c.fn ? 0.0 : nan)
                          : 2.0 * prec * rec / (prec + rec);
    EXPECT_NEAR(m.accuracy, acc, 1e-12);
    EXPECT_TRUE(same_or_both_nan(m.precision, prec, 1e-12)) << trial;
    EXPECT_TRUE(same_or_both_nan(m.recall, rec, 1e-12)) << trial;
    if (!std::isnan(prec) && !std::isnan(rec)) EXPECT_TRUE(same_or_both_nan(m.f1, f1, 1e-12)) << trial;
    EXPECT_TRUE(same_or_both_nan(m.auc, pairwise_auc(score, actual), 1e-12)) << trial;
  }
}

TEST(Metrics, AucExtremesAndTies) {
  EXPECT_DOUBLE_EQ(exp::auc_midrank({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(exp::auc_midrank({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(exp::auc_midrank({0.5, 0.5, 0.5, 0.5, 0.5}, {0, 1, 1, 0, 1}), 0.5);
}

TEST(Metrics, EmptyClassIsNanWithFlag) {
  const Metrics m = exp::evaluate_predictions({0, 0, 0}, {0, 0, 0}, {0.1, 0.2, 0.3});
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_TRUE(std::isnan(m.recall));
  EXPECT_TRUE(std::isnan(m.precision));
  EXPECT_TRUE(std::isnan(m.auc));
  EXPECT_NE(std::find(m.undefined.begin(), m.undefined.end(), "recall"), m.undefined.end());
  EXPECT_NE(std::find(m.undefined.begin(), m.undefined.end(), "auc"), m.undefined.end());
}

TEST(Metrics, EmptySetRejected) {
  EXPECT_THROW(exp::evaluate_predictions({}, {}, {}), std::invalid_argument);
  EXPECT_THROW(exp::metrics_from(exp::ConfusionMatrix{}), std::invalid_argument);
}

TEST(Metrics, SummaryUsesSampleStdAndSkipsNan) {
  const exp::Summary s = exp::summarize(std::vector<double>{0.9, 1.0, std::nan(""), 0.8});
  EXPECT_EQ(s.n, 3u);
  EXPECT_NEAR(s.mean, 0.9, 1e-15);
  EXPECT_NEAR(s.stddev, 0.1, 1e-15);
  EXPECT_EQ(exp::format_percent(s), "90.00±10.00");
  EXPECT_TRUE(std::isnan(exp::summarize(std::vector<double>{std::nan("")}).mean));
}

// ---------------------------------------------------------------- early stopping / config

TEST(EarlyStopping, PlateauFromEpochThreeStopsAtThirteen) {
  exp::EarlyStopping stop(10);
  const double acc[] = {0.5, 0.6, 0.7};
  std::size_t epoch = 0;
  while (!stop.should_stop() && epoch < 100) {
    const double a = epoch < 3 ? acc[epoch] : 0.7;
    stop.update(a, 1.0);
    ++epoch;
  }
  EXPECT_EQ(epoch, 13u);
  EXPECT_EQ(stop.best_epoch(), 3u);
}

TEST(EarlyStopping, TieKeepsLowerLossWithoutResettingPatience) {
  exp::EarlyStopping stop(2);
  EXPECT_TRUE(stop.update(0.8, 0.5));
  EXPECT_TRUE(stop.update(0.8, 0.4));
  EXPECT_EQ(stop.best_epoch(), 2u);
  EXPECT_FALSE(stop.should_stop());
  EXPECT_FALSE(stop.update(0.8, 0.6));
  EXPECT_TRUE(stop.should_stop());
  EXPECT_EQ(stop.best_epoch(), 2u);
}

TEST(TrainConfig, Validation) {
  exp::TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.max_epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.patience = 101;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(exp::TrainConfig::desk_scale().validate());
}

// ---------------------------------------------------------------- training loop on a stub encoder

namespace {

struct Toy {
  std::vector<data::TrialSample> train_samples, val_samples;
  exp::Batch train, val;
};

// Two informative features stored in the first two eye values; separable by x0 + x1 = 0.
Toy separable_toy(std::size_t n, std::uint64_t seed) {
  Toy t;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  auto make = [&](std::vector<data::TrialSample>& out, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      data::TrialSample s;
      s.label = static_cast<int>(i % 2);
      const double sign = s.label ? 1.0 : -1.0;
      s.eye = {sign * u(rng), sign * u(rng)};
      out.push_back(s);
    }
  };
  make(t.train_samples, n);
  make(t.val_samples, n / 2);
  for (auto& s : t.train_samples) t.train.push_back(&s);
  for (auto& s : t.val_samples) t.val.push_back(&s);
  return t;
}

exp::ForwardFn stub_forward(nn::Linear& layer) {
  return [&layer](const exp::Batch& b) {
    std::vector<double> x;
    for (const auto* s : b) x.insert(x.end(), s->eye.begin(), s->eye.begin() + 2);
    return layer.forward(ad::Tensor::from(ad::Shape{b.size(), 2}, x));
  };
}

}  // namespace

TEST(TrainLoop, LossDecreasesMonotonicallyOnSeparableToy) {
  Toy toy = separable_toy(40, 3);
  ad::Rng rng(5);
  nn::Linear layer(2, 2, rng);
  exp::TrainConfig cfg;
  cfg.batch_size = 40;  // full batch: one Adam step per epoch
  cfg.lr = 1e-2;
  cfg.max_epochs = 5;
  cfg.patience = 5;
  const exp::TrainResult r = exp::train_loop(layer, stub_forward(layer), toy.train, toy.val, cfg, rng);
  ASSERT_EQ(r.history.size(), 5u);
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LT(r.history[i].train_loss, r.history[i - 1].train_loss);
}

TEST(TrainLoop, ReturnsBestValidationCheckpoint) {
  Toy toy = separable_toy(24, 7);
  // Flip half the validation labels so accuracy moves around during training.
  for (std::size_t i = 0; i < toy.val_samples.size(); i += 3) toy.val_samples[i].label ^= 1;
  ad::Rng rng(11);
  nn::Linear layer(2, 2, rng);
  exp::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.lr = 5e-2;
  cfg.max_epochs = 15;
  cfg.patience = 15;
  auto fwd = stub_forward(layer);
  const exp::TrainResult r = exp::train_loop(layer, fwd, toy.train, toy.val, cfg, rng);
  double best = 0.0;
  for (const auto& e : r.history) best = std::max(best, e.val_accuracy);
  EXPECT_DOUBLE_EQ(r.best_val_accuracy, best);
  EXPECT_DOUBLE_EQ(exp::metrics_of(exp::predict(layer, fwd, toy.val, 8)).accuracy, best);
}

TEST(TrainLoop, NonFiniteLossAborts) {
  Toy toy = separable_toy(8, 1);
  toy.train_samples[0].eye[0] = std::nan("");
  ad::Rng rng(1);
  nn::Linear layer(2, 2, rng);
  exp::TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.patience = 2;
  EXPECT_THROW(exp::train_loop(layer, stub_forward(layer), toy.train, toy.val, cfg, rng), std::runtime_error);
}

// ---------------------------------------------------------------- folds, leakage, determinism

namespace {

const std::vector<data::TrialSample>& tiny_dataset() {
  static const std::vector<data::TrialSample> samples = [] {
    data::SyntheticSpec spec = data::preset("strong");
    spec.participants_per_class = 4;
    spec.image_size = 16;
    return data::synthesize_dataset(spec);
  }();
  return samples;
}

}  // namespace

TEST(Folds, NoLeakageAndTrainOnlyStatistics) {
  const auto& samples = tiny_dataset();
  const auto plan = data::stratified_group_kfold(data::participants_of(samples), 2, 42);
  for (std::size_t f = 0; f < plan.k; ++f) {
    const exp::FoldSplit split = exp::split_fold(samples, plan, f, 42);
    EXPECT_NO_THROW(exp::assert_no_leakage(split));
    EXPECT_EQ(split.val_participants.size(), 2u);
    EXPECT_EQ(split.train.size() + split.val.size() + split.test.size(), samples.size());
    std::vector<const data::TrialSample*> train(split.train.begin(), split.train.end());
    const data::ChannelStats direct = data::fit_channel_stats(train);
    EXPECT_EQ(direct.mean, split.stats.mean);
    EXPECT_EQ(direct.stddev, split.stats.stddev);
  }
}

TEST(Folds, LeakageIsDetected) {
  const auto& samples = tiny_dataset();
  const auto plan = data::stratified_group_kfold(data::participants_of(samples), 2, 42);
  exp::FoldSplit split = exp::split_fold(samples, plan, 0, 42);
  split.test.push_back(split.train.front());
  EXPECT_THROW(exp::assert_no_leakage(split), std::logic_error);
}

TEST(Evaluation, EvalModeIsBitDeterministic) {
  std::mt19937_64 rng(4);
  std::vector<data::TrialSample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(random_sample(16, rng, "P00" + std::to_string(i), i % 2));
  exp::Batch batch;
  for (auto& s : samples) batch.push_back(&s);
  ad::Rng mrng(9);
  auto net = model::build_model(small_fusion(), mrng);
  net->train();  // predict must switch to eval itself
  auto fwd = exp::network_forward(*net, unit_stats());
  const auto a = exp::predict(*net, fwd, batch, 2);
  const auto b = exp::predict(*net, fwd, batch, 2);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].p_ad, b[i].p_ad);
  EXPECT_TRUE(net->training());
}

TEST(Evaluation, BatchShapes) {
  std::mt19937_64 rng(4);
  auto s = random_sample(16, rng);
  const exp::Batch b{&s, &s};
  EXPECT_EQ(exp::face_batch(b).shape(), (ad::Shape{2, 50, 3, 16, 16}));
  EXPECT_EQ(exp::eye_batch(b, unit_stats()).shape(), (ad::Shape{2, 50, 6}));
  const ad::Tensor f = exp::face_batch(b);
  for (double v : f.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
}

// ---------------------------------------------------------------- ablation plans

TEST(Ablation, PlanShapes) {
  const FusionConfig base;
  const auto modalities = exp::modality_plan(base);
  const auto modules = exp::module_plan(base);
  const auto guidance = exp::guidance_plan(base);
  const auto directional = exp::directional_plan(base);
  EXPECT_EQ(modalities.rows.size(), 3u);
  ASSERT_EQ(modules.rows.size(), 4u);
  EXPECT_EQ(guidance.rows.size(), 18u);
  EXPECT_EQ(directional.rows.size(), 3u);
  const char* labels[] = {"Model I", "Model II", "Model III", "Model IV"};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(modules.rows[i].label, labels[i]);
  for (const auto* p : {&modalities, &modules, &guidance, &directional}) EXPECT_NO_THROW(p->validate());

  std::set<std::tuple<int, std::size_t, std::size_t>> grid;
  for (const auto& r : guidance.rows)
    grid.insert({static_cast<int>(*r.config.guidance_mode), r.config.num_heads, r.config.embed_dim});
  EXPECT_EQ(grid.size(), 18u);

  // Replacement blocks keep everything else identical.
  for (const auto& r : directional.rows) {
    EXPECT_TRUE(r.config.use_dacm);
    EXPECT_EQ(r.config.face.layers.back().channels, base.face.layers.back().channels);
  }
}

TEST(Ablation, DuplicateIdsRejected) {
  auto plan = exp::module_plan(FusionConfig{});
  plan.rows[1].id = plan.rows[0].id;
  EXPECT_THROW(plan.validate(), std::invalid_argument);
  EXPECT_THROW(exp::plan_by_name("table9", FusionConfig{}), std::invalid_argument);
}

TEST(Ablation, TableCsvHeader) {
  const auto plan = exp::module_plan(FusionConfig{});
  std::ostringstream os;
  exp::write_table_csv(os, plan, {});
  EXPECT_EQ(os.str(), "Model,id,Accuracy,Precision,Recall,F1-score,AUC\n");
}

// ---------------------------------------------------------------- difficulty

TEST(Difficulty, PartitionsByLevel) {
  std::vector<exp::Prediction> preds;
  for (int i = 0; i < 30; ++i) {
    exp::Prediction p;
    p.difficulty = 1 + i % 3;
    p.label = i % 2;
    p.predicted = p.label;
    p.p_ad = p.label ? 0.9 : 0.1;
    preds.push_back(p);
  }
  const auto levels = exp::difficulty_breakdown(preds);
  ASSERT_EQ(levels.size(), 3u);
  for (const auto& [level, m] : levels) EXPECT_DOUBLE_EQ(m.accuracy, 1.0) << level;
}

TEST(Difficulty, LevelWithoutAdIsFlagged) {
  std::vector<exp::Prediction> preds(4);
  preds[0].difficulty = preds[1].difficulty = 1;
  preds[2].difficulty = preds[3].difficulty = 2;
  preds[2].label = preds[2].predicted = 1;
  const auto levels = exp::difficulty_breakdown(preds);
  ASSERT_EQ(levels.front().first, 1);
  EXPECT_TRUE(std::isnan(levels.front().second.recall));
  EXPECT_FALSE(levels.front().second.undefined.empty());
  preds[0].difficulty = 0;
  EXPECT_THROW(exp::difficulty_breakdown(preds), std::invalid_argument);
}

// ---------------------------------------------------------------- Grad-CAM

namespace {

exp::Heatmap map_of(std::size_t h, std::size_t w, double v = 0.0) { return {h, w, std::vector<double>(h * w, v)}; }

}  // namespace

TEST(GradCam, UniformFieldGivesEqualRegions) {
  for (std::size_t size : {3, 7, 10, 32}) {
    const auto r = exp::region_means(map_of(size, size + 1, 0.37));
    for (double v : r) EXPECT_NEAR(v, 0.37, 1e-15);
  }
  const auto up = exp::bilinear_resize(map_of(2, 2, 0.5), 9, 9);
  for (double v : up.values) EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(GradCam, SupportContainment) {
  exp::Heatmap m = map_of(9, 9);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) m.values[y * 9 + x] = 1.0 + static_cast<double>(x + y);
  const auto r = exp::region_means(m);
  EXPECT_GT(r[0], 0.0);
  for (std::size_t i = 1; i < 9; ++i) EXPECT_EQ(r[i], 0.0);
}

TEST(GradCam, PartitionMeanIdentity) {
  std::mt19937_64 rng(8);
  for (std::size_t size : {6, 12, 30}) {
    exp::Heatmap m = map_of(size, size);
    for (auto& v : m.values) v = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto r = exp::region_means(m);
    double mean9 = 0.0, global = 0.0;
    for (double v : r) mean9 += v / 9.0;
    for (double v : m.values) global += v / static_cast<double>(m.values.size());
    EXPECT_NEAR(mean9, global, 1e-6);
    for (double v : r) {
      EXPECT_GE(v, *std::min_element(m.values.begin(), m.values.end()));
      EXPECT_LE(v, *std::max_element(m.values.begin(), m.values.end()));
    }
  }
}

TEST(GradCam, CellsDifferByAtMostOnePixel) {
  // 10 rows split 3/3/4: only the bottom band sees the value in row 9.
  exp::Heatmap m = map_of(10, 10);
  for (std::size_t x = 0; x < 10; ++x) m.values[9 * 10 + x] = 4.0;
  const auto r = exp::region_means(m);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(r[i], 0.0);
  for (std::size_t i = 6; i < 9; ++i) EXPECT_NEAR(r[i], 1.0, 1e-15);
  EXPECT_THROW(exp::region_means(map_of(2, 5)), std::invalid_argument);
}

TEST(GradCam, GroupDifference) {
  exp::RegionVector a{}, b{};
  for (std::size_t i = 0; i < 9; ++i) {
    a[i] = 0.1 * static_cast<double>(i);
    b[i] = 1.0 - 0.05 * static_cast<double>(i);
  }
  const auto zero = exp::group_difference_map({a, b}, {a, b});
  for (double v : zero) EXPECT_EQ(v, 0.0);

  exp::RegionVector lower = a;
  for (auto& v : lower) v -= 0.25;
  for (double v : exp::group_difference_map({lower}, {a})) EXPECT_NEAR(v, -0.25, 1e-15);

  const auto d = exp::group_difference_map({a}, {b});
  exp::RegionVector a2 = a, b2 = b;
  for (std::size_t i = 0; i < 9; ++i) {
    a2[i] += 3.0;
    b2[i] += 3.0;
  }
  const auto d2 = exp::group_difference_map({a2}, {b2});
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(std::signbit(d[i]), std::signbit(d2[i]));
  EXPECT_THROW(exp::group_difference_map({}, {a}), std::invalid_argument);
}

TEST(GradCam, RunsOnModelAndRejectsMissingBlock) {
  std::mt19937_64 rng(12);
  const data::TrialSample s = random_sample(64, rng);
  ad::Rng mrng(3);
  auto net = model::build_model(small_fusion(), mrng);
  const exp::GradCamResult r = exp::gradcam_regional(*net, s, unit_stats());
  EXPECT_EQ(r.heatmap.height, 64u);
  EXPECT_EQ(r.heatmap.width, 64u);
  const double lo = *std::min_element(r.heatmap.values.begin(), r.heatmap.values.end());
  const double hi = *std::max_element(r.heatmap.values.begin(), r.heatmap.values.end());
  EXPECT_GE(lo, 0.0);
  for (double v : r.regions) {
    EXPECT_GE(v, lo - 1e-12);
    EXPECT_LE(v, hi + 1e-12);
  }
  EXPECT_GT(r.target_probability, 0.0);

  FusionConfig no_block = small_fusion();
  no_block.use_dacm = false;
  auto plain = model::build_model(no_block, mrng);
  EXPECT_THROW(exp::gradcam_regional(*plain, s, unit_stats()), std::invalid_argument);
}

TEST(GradCam, PgmHeader) {
  exp::Heatmap m = map_of(3, 4);
  m.values[5] = 2.0;
  std::ostringstream os;
  exp::write_pgm(os, m);
  const std::string out = os.str();
  EXPECT_EQ(out.substr(0, 11), "P5\n4 3\n255\n");
  EXPECT_EQ(out.size(), 11u + 12u);
  EXPECT_EQ(static_cast<unsigned char>(out[11 + 5]), 255);
}

// ---------------------------------------------------------------- config files

TEST(Config, JsonOverridesAndRoundTrip) {
  exp::ExperimentConfig c = exp::default_config(true);
  exp::apply_json(c, nlohmann::json::parse(R"({"model": {"guidance_mode": "eye_to_face", "num_heads": 4},
                                               "train": {"folds": 3}, "synthetic": {"preset": "null"}})"));
  EXPECT_EQ(*c.model.guidance_mode, model::GuidanceMode::EyeToFace);
  EXPECT_EQ(c.model.num_heads, 4u);
  EXPECT_EQ(c.train.folds, 3u);
  EXPECT_TRUE(c.synthetic.shuffle_labels);
  EXPECT_EQ(c.synthetic.image_size, 32u);

  exp::ExperimentConfig back = exp::default_config(false);
  exp::apply_json(back, exp::to_json(c));
  EXPECT_EQ(exp::to_json(back), exp::to_json(c));
}

TEST(Config, UnknownKeysAndBadValuesRejected) {
  exp::ExperimentConfig c;
  EXPECT_THROW(exp::apply_json(c, nlohmann::json::parse(R"({"model": {"heads": 2}})")), std::invalid_argument);
  EXPECT_THROW(exp::apply_json(c, nlohmann::json::parse(R"({"model": {"modality": "audio"}})")), std::invalid_argument);
  EXPECT_THROW(exp::apply_json(c, nlohmann::json::parse(R"({"train": {"max_epochs": 0}})")), std::invalid_argument);
}

TEST(Report, FoldMetricsRoundTripToSummary) {
  exp::CvResult cv;
  for (std::size_t f = 0; f < 3; ++f) {
    exp::FoldResult r;
    r.fold = f;
    r.metrics = exp::metrics_from(exp::ConfusionMatrix{4 + f, 1, 4, 1});
    r.metrics.auc = 0.5 + 0.1 * static_cast<double>(f);
    cv.folds.push_back(r);
  }
  std::stringstream csv;
  exp::write_fold_metrics_csv(csv, "model_4", cv);
  exp::write_fold_metrics_csv(csv, "model_1", cv);
  exp::FoldMetricsByConfig folds;
  exp::read_fold_metrics_csv(csv, folds);
  ASSERT_EQ(folds.size(), 2u);
  ASSERT_EQ(folds["model_4"].size(), 3u);
  EXPECT_NEAR(folds["model_4"][2].auc, 0.7, 1e-6);
  std::ostringstream out;
  exp::write_summary_csv(out, folds);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "config,Accuracy,Precision,Recall,F1-score,AUC,folds");
  EXPECT_NE(out.str().find("model_4,"), std::string::npos);
  EXPECT_NE(out.str().find("60.00±10.00,3"), std::string::npos);
}
