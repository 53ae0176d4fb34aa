#include "cefnet/exp/training.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "cefnet/ad/optim.hpp"

namespace cefnet::exp {

namespace {

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), static_cast<std::uint32_t>(salt)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<int> labels_of(const Batch& b) {
  std::vector<int> y;
  for (const auto* s : b) y.push_back(s->label);
  return y;
}

struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalStats evaluate_loss(nn::Module& module, const ForwardFn& forward, const Batch& samples, std::size_t batch_size) {
  const bool was_training = module.training();
  module.eval();
  ad::NoGradGuard no_grad;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    Batch b(samples.begin() + i, samples.begin() + std::min(samples.size(), i + batch_size));
    Tensor logits = forward(b);
    const auto y = labels_of(b);
    loss += ad::cross_entropy(logits, y).item() * static_cast<double>(b.size());
    for (std::size_t k = 0; k < b.size(); ++k) {
      const int pred = logits.data()[2 * k + 1] > logits.data()[2 * k] ? 1 : 0;
      correct += pred == y[k];
    }
  }
  module.train(was_training);
  return {loss / static_cast<double>(samples.size()), static_cast<double>(correct) / static_cast<double>(samples.size())};
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive (zero-epoch budget)");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (patience == 0) throw std::invalid_argument("patience must be positive");
  if (patience > max_epochs) throw std::invalid_argument("patience exceeds max_epochs");
  if (folds < 2) throw std::invalid_argument("folds must be at least 2");
  if (image_size == 0 || participants_per_class == 0) throw std::invalid_argument("desk-scale sizes must be positive");
}

TrainConfig TrainConfig::desk_scale() {
  TrainConfig c;
  c.lr = 1e-3;
  c.max_epochs = 12;
  c.patience = 4;
  c.folds = 5;
  c.image_size = 32;
  c.participants_per_class = 10;
  return c;
}

void apply_desk_scale(model::FusionConfig& config) {
  config.face.layers = {{8, 7, 2, 3}, {16, 3, 2, 1}, {16, 3, 2, 1}, {32, 3, 2, 1}, {32, 3, 1, 1}};
}

bool EarlyStopping::update(double val_accuracy, double val_loss) {
  ++epoch_;
  if (val_accuracy > best_acc_) {
    best_acc_ = val_accuracy;
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  if (val_accuracy == best_acc_ && val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    return true;
  }
  return false;
}

TrainResult train_loop(nn::Module& module, const ForwardFn& forward, const Batch& train, const Batch& val,
                       const TrainConfig& config, nn::Rng& rng, const LogFn& log) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("empty training split");
  if (val.empty()) throw std::invalid_argument("empty validation split");
  ad::Adam adam(module.parameters(), config.lr);
  EarlyStopping stopper(config.patience);
  TrainResult result;
  nn::Snapshot best = module.snapshot();
  Batch order = train;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    module.train();
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t i = 0; i < order.size(); i += config.batch_size) {
      Batch b(order.begin() + i, order.begin() + std::min(order.size(), i + config.batch_size));
      adam.zero_grad();
      Tensor loss = ad::cross_entropy(forward(b), labels_of(b));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(i / config.batch_size + 1));
      }
      ad::backward(loss);
      if (!adam.step()) {
        throw std::runtime_error("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(i / config.batch_size + 1));
      }
      total += value * static_cast<double>(b.size());
    }
    const EvalStats v = evaluate_loss(module, forward, val, config.batch_size);
    EpochLog entry{epoch, total / static_cast<double>(order.size()), v.loss, v.accuracy};
    result.history.push_back(entry);
    if (log) {
      std::ostringstream os;
      os << "epoch " << epoch << " train_loss " << entry.train_loss << " val_loss " << entry.val_loss << " val_acc "
         << entry.val_accuracy;
      log(os.str());
    }
    if (stopper.update(v.accuracy, v.loss)) best = module.snapshot();
    if (stopper.should_stop()) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  module.restore(best);
  result.best_epoch = stopper.best_epoch();
  result.best_val_accuracy = stopper.best_accuracy();
  result.best_val_loss = stopper.best_loss();
  return result;
}

std::vector<Prediction> predict(nn::Module& module, const ForwardFn& forward, const Batch& samples,
                                std::size_t batch_size) {
  const bool was_training = module.training();
  module.eval();
  ad::NoGradGuard no_grad;
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    Batch b(samples.begin() + i, samples.begin() + std::min(samples.size(), i + batch_size));
    Tensor probs = model::class_probabilities(forward(b));
    for (std::size_t k = 0; k < b.size(); ++k) {
      Prediction p;
      p.participant = b[k]->participant_id;
      p.trial = b[k]->trial;
      p.difficulty = b[k]->difficulty;
      p.label = b[k]->label;
      p.p_ad = probs.data()[2 * k + 1];
      p.predicted = probs.data()[2 * k + 1] > probs.data()[2 * k] ? 1 : 0;
      out.push_back(p);
    }
  }
  module.train(was_training);
  return out;
}

Metrics metrics_of(const std::vector<Prediction>& predictions) {
  std::vector<int> pred, actual;
  std::vector<double> score;
  for (const auto& p : predictions) {
    pred.push_back(p.predicted);
    actual.push_back(p.label);
    score.push_back(p.p_ad);
  }
  return evaluate_predictions(pred, actual, score);
}

Tensor face_batch(const Batch& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto& f0 = batch.front()->face;
  const std::size_t t = f0.count, h = f0.height, w = f0.width, c = f0.channels;
  if (c != 3) throw std::invalid_argument("facial frames must have 3 channels");
  std::vector<double> v(batch.size() * t * c * h * w);
  std::size_t o = 0;
  for (const auto* s : batch) {
    const auto& f = s->face;
    if (f.count != t || f.height != h || f.width != w || f.channels != c) {
      throw std::invalid_argument("frame sequences in a batch differ in shape (" + s->participant_id + ")");
    }
    for (std::size_t i = 0; i < t; ++i) {
      const std::uint8_t* px = f.frame(i);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < h * w; ++p) v[o++] = px[p * c + ch] / 255.0;
    }
  }
  return Tensor::from({batch.size(), t, c, h, w}, std::move(v));
}

Tensor eye_batch(const Batch& batch, const data::ChannelStats& stats) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t n = batch.front()->eye.size();
  std::vector<double> v;
  v.reserve(batch.size() * n);
  for (const auto* s : batch) {
    if (s->eye.size() != n) throw std::invalid_argument("eye sequences in a batch differ in length");
    auto z = data::standardize(s->eye, stats);
    v.insert(v.end(), z.begin(), z.end());
  }
  return Tensor::from({batch.size(), n / data::kEyeChannels, data::kEyeChannels}, std::move(v));
}

ForwardFn network_forward(model::FusionNetwork& net, const data::ChannelStats& stats) {
  return [&net, stats](const Batch& b) {
    return net.forward(net.uses_face() ? face_batch(b) : Tensor{}, net.uses_eye() ? eye_batch(b, stats) : Tensor{});
  };
}

FoldSplit split_fold(const std::vector<data::TrialSample>& samples, const data::FoldPlan& plan, std::size_t fold,
                     std::uint64_t seed) {
  if (fold >= plan.folds.size()) throw std::out_of_range("fold index out of range");
  const std::set<std::string> test_ids(plan.folds[fold].begin(), plan.folds[fold].end());
  std::map<int, std::vector<std::string>> train_by_class;
  for (const auto& p : data::participants_of(samples))
    if (!test_ids.count(p.id)) train_by_class[p.label].push_back(p.id);
  nn::Rng rng(fold_seed(seed, fold, 0x7A1));
  FoldSplit split;
  split.fold = fold;
  for (auto& [label, ids] : train_by_class) {
    if (ids.size() < 2) continue;  // keep at least one training participant per class
    split.val_participants.push_back(ids[rng() % ids.size()]);
  }
  const std::set<std::string> val_ids(split.val_participants.begin(), split.val_participants.end());
  for (const auto& s : samples) {
    if (test_ids.count(s.participant_id))
      split.test.push_back(&s);
    else if (val_ids.count(s.participant_id))
      split.val.push_back(&s);
    else
      split.train.push_back(&s);
  }
  assert_no_leakage(split);
  split.stats = data::fit_channel_stats(split.train);
  return split;
}

void assert_no_leakage(const FoldSplit& split) {
  auto ids = [](const Batch& b) {
    std::set<std::string> s;
    for (const auto* x : b) s.insert(x->participant_id);
    return s;
  };
  const auto tr = ids(split.train), va = ids(split.val), te = ids(split.test);
  for (const auto& id : te)
    if (tr.count(id) || va.count(id)) throw std::logic_error("participant " + id + " leaks into the test fold");
  for (const auto& id : va)
    if (tr.count(id)) throw std::logic_error("participant " + id + " is in both train and validation");
}

std::vector<Prediction> CvResult::all_predictions() const {
  std::vector<Prediction> out;
  for (const auto& f : folds) out.insert(out.end(), f.predictions.begin(), f.predictions.end());
  return out;
}

FoldResult run_fold(const std::vector<data::TrialSample>& samples, const data::FoldPlan& plan, std::size_t fold,
                    const model::FusionConfig& model_config, const TrainConfig& config, const LogFn& log) {
  FoldSplit split = split_fold(samples, plan, fold, config.seed);
  for (const auto& w : split.stats.warnings)
    if (log) log("fold " + std::to_string(fold) + ": warning: " + w);
  model::FusionConfig mc = model_config;
  mc.dropout_rate = config.dropout;
  nn::Rng init(fold_seed(config.seed, fold, 0x1A17));
  auto net = model::build_model(mc, init);
  auto forward = network_forward(*net, split.stats);
  nn::Rng shuffle(fold_seed(config.seed, fold, 0x5F1));
  LogFn fold_log;
  if (log) fold_log = [&](const std::string& m) { log("fold " + std::to_string(fold) + ": " + m); };
  FoldResult r;
  r.fold = fold;
  r.training = train_loop(*net, forward, split.train, split.val, config, shuffle, fold_log);
  r.predictions = predict(*net, forward, split.test, config.batch_size);
  for (auto& p : r.predictions) p.fold = fold;
  r.metrics = metrics_of(r.predictions);
  r.checkpoint = net->snapshot();
  return r;
}

CvResult cross_validate(const std::vector<data::TrialSample>& samples, const data::FoldPlan& plan,
                        const model::FusionConfig& model_config, const TrainConfig& config, const LogFn& log) {
  config.validate();
  const std::size_t k = plan.folds.size();
  std::size_t jobs = config.jobs ? config.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, k);
  std::mutex log_mutex;
  LogFn safe_log;
  if (log) safe_log = [&](const std::string& m) {
    std::lock_guard<std::mutex> lock(log_mutex);
    log(m);
  };
  CvResult cv;
  cv.folds.resize(k);
  // Each fold is an isolated job with its own seeds, so results do not depend on `jobs`.
  for (std::size_t start = 0; start < k; start += jobs) {
    std::vector<std::future<FoldResult>> running;
    for (std::size_t f = start; f < std::min(k, start + jobs); ++f) {
      running.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, [&, f] {
        return run_fold(samples, plan, f, model_config, config, safe_log);
      }));
    }
    for (std::size_t i = 0; i < running.size(); ++i) cv.folds[start + i] = running[i].get();
  }
  std::vector<Metrics> m;
  for (const auto& f : cv.folds) m.push_back(f.metrics);
  cv.summary = summarize(m);
  return cv;
}

std::vector<std::pair<int, Metrics>> difficulty_breakdown(const std::vector<Prediction>& predictions) {
  std::map<int, std::vector<Prediction>> by_level;
  for (const auto& p : predictions) {
    if (p.difficulty < 1 || p.difficulty > 3) {
      throw std::invalid_argument("trial " + p.participant + "/" + std::to_string(p.trial) +
                                  " has no valid difficulty level");
    }
    by_level[p.difficulty].push_back(p);
  }
  std::vector<std::pair<int, Metrics>> out;
  for (const auto& [level, preds] : by_level) out.emplace_back(level, metrics_of(preds));
  return out;
}

}  // namespace cefnet::exp
