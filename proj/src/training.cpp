#include "acfnet/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace acfnet {

using nlohmann::json;

std::vector<Label> Dataset::labels() const {
  std::vector<Label> out;
  out.reserve(meta.size());
  for (const auto& m : meta) out.push_back(m.label);
  return out;
}

std::vector<NormStats> fit_tower_stats(std::span<const SegmentSample> train) {
  if (train.empty()) throw ShapeError("cannot fit normalization statistics on an empty training set");
  const std::size_t towers = train.front().acfs.size();
  std::vector<NormStats> stats;
  for (std::size_t t = 0; t < towers; ++t) {
    std::vector<ChannelDelayCorrelationMatrix> acfs;
    acfs.reserve(train.size());
    for (const auto& s : train) acfs.push_back(s.acfs.at(t));
    NormStats st = fit_norm_stats(acfs);
    st.mean = st.mean.cast<float>().cast<double>();
    st.std = st.std.cast<float>().cast<double>();
    stats.push_back(std::move(st));
  }
  return stats;
}

Dataset to_dataset(std::span<const SegmentSample> samples, std::span<const NormStats> stats) {
  Dataset d;
  d.meta.reserve(samples.size());
  d.inputs.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.acfs.size() != stats.size()) throw ShapeError("segment tower count does not match norm stats");
    std::vector<InputMatrix> towers;
    for (std::size_t t = 0; t < stats.size(); ++t) towers.push_back(apply_norm(s.acfs[t], stats[t]).data.cast<float>());
    d.meta.push_back(s.meta);
    d.inputs.push_back(std::move(towers));
  }
  return d;
}

void assert_disjoint(std::span<const SegmentSample> train, std::span<const SegmentSample> validation,
                     std::span<const SegmentSample> test) {
  const std::array<std::span<const SegmentSample>, 3> parts{train, validation, test};
  const std::array<const char*, 3> names{"train", "validation", "test"};
  std::array<std::set<std::string>, 3> speakers, segments;
  for (std::size_t p = 0; p < 3; ++p) {
    for (const auto& s : parts[p]) {
      speakers[p].insert(s.meta.speaker_id);
      segments[p].insert(s.meta.segment_id);
    }
  }
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) {
      for (const auto& spk : speakers[a]) {
        if (speakers[b].count(spk)) {
          throw LeakageError("speaker '" + spk + "' appears in both " + names[a] + " and " + names[b]);
        }
      }
      for (const auto& seg : segments[a]) {
        if (segments[b].count(seg)) {
          throw LeakageError("segment '" + seg + "' appears in both " + names[a] + " and " + names[b]);
        }
      }
    }
  }
}

void assert_disjoint(const DatasetSplit& split, std::span<const RecordingRecord> records) {
  std::map<std::string, std::string> speaker_of;
  for (const auto& r : records) speaker_of[r.recording_id] = r.speaker_id;
  const std::array<const std::vector<std::string>*, 3> parts{&split.train, &split.validation, &split.test};
  const std::array<const char*, 3> names{"train", "validation", "test"};
  std::map<std::string, std::size_t> recording_part, speaker_part;
  for (std::size_t p = 0; p < 3; ++p) {
    for (const auto& id : *parts[p]) {
      if (auto [it, fresh] = recording_part.emplace(id, p); !fresh && it->second != p) {
        throw LeakageError("recording '" + id + "' listed in both " + names[it->second] + " and " + names[p]);
      }
      const auto sp = speaker_of.find(id);
      if (sp == speaker_of.end()) continue;
      if (auto [it, fresh] = speaker_part.emplace(sp->second, p); !fresh && it->second != p) {
        throw LeakageError("speaker '" + sp->second + "' appears in both " + names[it->second] + " and " + names[p]);
      }
    }
  }
}

PreparedData prepare_datasets(std::span<const SegmentSample> train, std::span<const SegmentSample> validation,
                              std::span<const SegmentSample> test) {
  assert_disjoint(train, validation, test);
  PreparedData p;
  p.stats = fit_tower_stats(train);
  p.train = to_dataset(train, p.stats);
  p.validation = to_dataset(validation, p.stats);
  p.test = to_dataset(test, p.stats);
  return p;
}

bool EarlyStopping::update(double loss) {
  if (stopped_) throw TrainingError("early stopping already triggered");
  if (!std::isfinite(loss)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch_ + 1));
  ++epoch_;
  improved_ = loss < best_loss_;
  if (improved_) {
    best_loss_ = loss;
    best_epoch_ = epoch_;
    wait_ = 0;
  } else {
    ++wait_;
  }
  stopped_ = wait_ >= patience_ || epoch_ >= max_epochs_;
  return stopped_;
}

void EarlyStopping::set_max_epochs(int max_epochs) {
  if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
  max_epochs_ = max_epochs;
  stopped_ = epoch_ > 0 && (wait_ >= patience_ || epoch_ >= max_epochs_);
}

json EarlyStopping::to_json() const {
  return {{"patience", patience_}, {"max_epochs", max_epochs_}, {"epoch", epoch_},
          {"best_epoch", best_epoch_}, {"best_loss", std::isfinite(best_loss_) ? json(best_loss_) : json(nullptr)},
          {"wait", wait_}, {"stopped", stopped_}};
}

EarlyStopping EarlyStopping::from_json(const json& j) {
  EarlyStopping s(j.at("patience").get<int>(), j.at("max_epochs").get<int>());
  s.epoch_ = j.at("epoch").get<int>();
  s.best_epoch_ = j.at("best_epoch").get<int>();
  if (!j.at("best_loss").is_null()) s.best_loss_ = j.at("best_loss").get<double>();
  s.wait_ = j.at("wait").get<int>();
  s.stopped_ = j.at("stopped").get<bool>();
  return s;
}

json TrainReport::to_json() const {
  return {{"train_loss", train_loss},       {"validation_loss", validation_loss},
          {"first_epoch", first_epoch},     {"stopped_epoch", stopped_epoch},
          {"best_epoch", best_epoch},       {"best_validation_loss", best_validation_loss},
          {"restored_best", restored_best}};
}

double weighted_loss(Network<float>& net, const Dataset& data, const ClassWeights& weights, int batch_size) {
  if (data.size() == 0) throw ShapeError("weighted_loss of an empty set");
  nn::ForwardContext ctx{false, nullptr};
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto inputs = make_batch<float>(data, idx);
    const auto probs = net.forward(inputs, ctx);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Label l = data.meta[idx[k]].label;
      total += nn::weighted_bce(probs[static_cast<nn::Index>(k)], label_value(l), weights(l));
    }
  }
  return total / static_cast<double>(data.size());
}

std::vector<ScoredSample> score(Network<float>& net, const Dataset& data, int batch_size) {
  nn::ForwardContext ctx{false, nullptr};
  std::vector<ScoredSample> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto inputs = make_batch<float>(data, idx);
    const auto probs = net.forward(inputs, ctx);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& m = data.meta[idx[k]];
      out.push_back({m.segment_id, m.label, static_cast<double>(probs[static_cast<nn::Index>(k)]), m.database,
                     m.recording_id});
    }
  }
  return out;
}

EvaluationSummary evaluate(Network<float>& net, const Dataset& data, double threshold) {
  if (data.size() == 0) throw UndefinedMetricError("cannot evaluate an empty set");
  const auto scores = score(net, data);
  return summarize(scores, threshold);
}

namespace {

std::string rng_state(const nn::Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

nn::Rng rng_from_state(const std::string& s) {
  nn::Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw FormatError("corrupt RNG state in checkpoint");
  return rng;
}

std::string tower_name(FeatureMode m) { return m == FeatureMode::TV8 ? "tv" : "mfcc"; }

}  // namespace

Trainer::Trainer(ModelConfig config, ClassWeights weights, std::vector<NormStats> stats)
    : config_(std::move(config)),
      weights_(weights),
      stats_(std::move(stats)),
      net_(build_network<float>(config_)),
      optimizer_(nn::AdamOptions{config_.learning_rate}),
      stopper_(config_.patience, config_.max_epochs),
      shuffle_rng_(mix_seed(config_.seed, 1)),
      dropout_rng_(mix_seed(config_.seed, 2)) {
  if (stats_.size() != net_.tower_count()) throw ConfigError("one NormStats per tower required");
}

void Trainer::set_max_epochs(int max_epochs) {
  stopper_.set_max_epochs(max_epochs);
  config_.max_epochs = max_epochs;
}

nn::Checkpoint Trainer::checkpoint() const {
  json training;
  training["class_weights"] = {{"depressed", weights_.depressed}, {"nondepressed", weights_.nondepressed}};
  training["early_stopping"] = stopper_.to_json();
  training["history"] = history_.to_json();
  training["shuffle_rng"] = rng_state(shuffle_rng_);
  training["dropout_rng"] = rng_state(dropout_rng_);
  auto& net = const_cast<Network<float>&>(net_);
  return make_checkpoint(net, config_, stats_, &optimizer_, training);
}

Trainer Trainer::resume(const nn::Checkpoint& ckpt) {
  const json& training = ckpt.config.at("training");
  ClassWeights w{training.at("class_weights").at("depressed").get<double>(),
                 training.at("class_weights").at("nondepressed").get<double>()};
  Trainer t(checkpoint_config(ckpt), w, load_norm_stats(ckpt));
  t.net_ = load_network(ckpt);
  auto params = t.net_.parameters();
  auto& m = t.optimizer_.first_moments();
  auto& v = t.optimizer_.second_moments();
  for (auto* p : params) {
    m.emplace_back(p->value.shape());
    v.emplace_back(p->value.shape());
    ckpt.read_into("adam.m." + p->name, m.back());
    ckpt.read_into("adam.v." + p->name, v.back());
  }
  t.optimizer_.set_steps(ckpt.config.at("optimizer").at("step").get<std::int64_t>());
  t.stopper_ = EarlyStopping::from_json(training.at("early_stopping"));
  const json& h = training.at("history");
  t.history_.train_loss = h.at("train_loss").get<std::vector<double>>();
  t.history_.validation_loss = h.at("validation_loss").get<std::vector<double>>();
  t.history_.first_epoch = h.at("first_epoch").get<int>();
  t.shuffle_rng_ = rng_from_state(training.at("shuffle_rng").get<std::string>());
  t.dropout_rng_ = rng_from_state(training.at("dropout_rng").get<std::string>());
  return t;
}

double Trainer::train_epoch(const Dataset& train) {
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), shuffle_rng_);
  nn::ForwardContext ctx{true, &dropout_rng_};
  auto params = net_.parameters();
  double total = 0.0;
  std::vector<double> targets, weights;
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t end = std::min(order.size(), start + bs);
    const std::span<const std::size_t> idx(order.data() + start, end - start);
    targets.clear();
    weights.clear();
    for (std::size_t i : idx) {
      const Label l = train.meta[i].label;
      targets.push_back(label_value(l));
      weights.push_back(weights_(l));
    }
    net_.zero_grad();
    const auto inputs = make_batch<float>(train, idx);
    const auto probs = net_.forward(inputs, ctx);
    const auto loss = nn::weighted_bce_batch(probs, targets, weights);
    const double batch_loss = loss.value + net_.l2_penalty();
    if (!std::isfinite(batch_loss)) {
      throw TrainingError("non-finite training loss at epoch " + std::to_string(stopper_.epoch() + 1) +
                          ", batch starting at " + std::to_string(start));
    }
    net_.backward(loss.grad);
    net_.add_l2_grad();
    try {
      optimizer_.step(params);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " (epoch " + std::to_string(stopper_.epoch() + 1) +
                          ", batch starting at " + std::to_string(start) + ")");
    }
    total += batch_loss * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(order.size());
}

TrainOutcome Trainer::run(const Dataset& train, const Dataset& validation, const EpochCallback& on_epoch) {
  if (train.size() == 0 || validation.size() == 0) throw ShapeError("training needs non-empty train and validation sets");
  if (train.tower_count() != net_.tower_count() || validation.tower_count() != net_.tower_count()) {
    throw ShapeError("dataset tower count does not match the model");
  }
  if (history_.train_loss.empty()) history_.first_epoch = stopper_.epoch() + 1;
  TrainOutcome out;
  bool have_best = false;
  while (!stopper_.stopped()) {
    const double train_loss = train_epoch(train);
    const double val_loss = weighted_loss(net_, validation, weights_);
    stopper_.update(val_loss);
    history_.train_loss.push_back(train_loss);
    history_.validation_loss.push_back(val_loss);
    if (on_epoch) on_epoch({stopper_.epoch(), train_loss, val_loss});
    if (stopper_.improved()) {
      history_.best_epoch = stopper_.best_epoch();
      history_.best_validation_loss = stopper_.best_loss();
      out.best = checkpoint();
      have_best = true;
    }
  }
  history_.stopped_epoch = stopper_.epoch();
  history_.best_epoch = stopper_.best_epoch();
  history_.best_validation_loss = stopper_.best_loss();
  out.last = checkpoint();
  if (have_best) {
    net_ = load_network(out.best);
    history_.restored_best = true;
  }
  out.report = history_;
  if (!have_best) out.best = out.last;
  return out;
}

nn::Checkpoint make_checkpoint(Network<float>& net, const ModelConfig& config, std::span<const NormStats> stats,
                               const nn::Adam<float>* optimizer, const json& training) {
  nn::Checkpoint ckpt;
  ckpt.config["model"] = config.to_json();
  ckpt.config["tool_version"] = kVersion;
  ckpt.config["training"] = training;
  auto params = net.parameters();
  for (auto* p : params) ckpt.add(p->name, p->value);
  for (auto* b : net.buffers()) ckpt.add(b->name, b->value);
  if (optimizer && !optimizer->first_moments().empty()) {
    ckpt.config["optimizer"] = {{"step", optimizer->steps()},
                                {"learning_rate", optimizer->options().learning_rate},
                                {"beta1", optimizer->options().beta1},
                                {"beta2", optimizer->options().beta2},
                                {"epsilon", optimizer->options().epsilon}};
    for (std::size_t k = 0; k < params.size(); ++k) {
      ckpt.add("adam.m." + params[k]->name, optimizer->first_moments()[k]);
      ckpt.add("adam.v." + params[k]->name, optimizer->second_moments()[k]);
    }
  } else {
    ckpt.config["optimizer"] = {{"step", 0}};
    for (auto* p : params) {
      ckpt.add("adam.m." + p->name, nn::Tensor<float>(p->value.shape()));
      ckpt.add("adam.v." + p->name, nn::Tensor<float>(p->value.shape()));
    }
  }
  const auto modes = tower_modes(config.feature_mode);
  if (stats.size() != modes.size()) throw ConfigError("one NormStats per tower required in a checkpoint");
  for (std::size_t t = 0; t < modes.size(); ++t) {
    const std::string base = "norm." + tower_name(modes[t]);
    const auto rows = stats[t].mean.rows(), cols = stats[t].mean.cols();
    nn::Tensor<double> mean({rows, cols}), sd({rows, cols});
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        mean[r * cols + c] = stats[t].mean(r, c);
        sd[r * cols + c] = stats[t].std(r, c);
      }
    }
    ckpt.add(base + ".mean", mean);
    ckpt.add(base + ".std", sd);
  }
  return ckpt;
}

ModelConfig checkpoint_config(const nn::Checkpoint& ckpt) {
  if (!ckpt.config.contains("model")) throw FormatError("checkpoint has no model config");
  return ModelConfig::from_json(ckpt.config.at("model"));
}

Network<float> load_network(const nn::Checkpoint& ckpt) {
  Network<float> net = build_network<float>(checkpoint_config(ckpt));
  for (auto* p : net.parameters()) ckpt.read_into(p->name, p->value);
  for (auto* b : net.buffers()) ckpt.read_into(b->name, b->value);
  return net;
}

std::vector<NormStats> load_norm_stats(const nn::Checkpoint& ckpt) {
  std::vector<NormStats> out;
  for (FeatureMode m : tower_modes(checkpoint_config(ckpt).feature_mode)) {
    const std::string base = "norm." + tower_name(m);
    const auto& mean = ckpt.at(base + ".mean");
    const auto& sd = ckpt.at(base + ".std");
    if (mean.shape.size() != 2 || mean.shape != sd.shape) throw ShapeError("malformed norm stats in checkpoint");
    NormStats s;
    s.mean.resize(mean.shape[0], mean.shape[1]);
    s.std.resize(mean.shape[0], mean.shape[1]);
    for (Eigen::Index r = 0; r < s.mean.rows(); ++r) {
      for (Eigen::Index c = 0; c < s.mean.cols(); ++c) {
        const auto k = static_cast<std::size_t>(r * s.mean.cols() + c);
        s.mean(r, c) = mean.data[k];
        s.std(r, c) = sd.data[k];
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ModelConfig> GridRanges::expand(const ModelConfig& base) const {
  std::vector<ModelConfig> out;
  for (int a : o1) {
    for (int b : o2) {
      for (int k : k1) {
        for (int c : o3) {
          for (double dp : dropout) {
            ModelConfig cfg = base;
            cfg.o1 = a;
            cfg.o2 = b;
            cfg.k1 = k;
            cfg.o3 = c;
            cfg.dropout = dp;
            out.push_back(cfg);
          }
        }
      }
    }
  }
  return out;
}

SelectionMetric selection_metric_from_string(const std::string& s) {
  if (s == "val_loss") return SelectionMetric::ValidationLoss;
  if (s == "val_auc") return SelectionMetric::ValidationAuc;
  if (s == "val_accuracy") return SelectionMetric::ValidationAccuracy;
  throw ConfigError("unknown selection metric '" + s + "' (expected val_loss, val_auc or val_accuracy)");
}

json GridPoint::to_json() const {
  json j;
  j["o1"] = config.o1;
  j["o2"] = config.o2;
  j["k1"] = config.k1;
  j["o3"] = config.o3;
  j["dropout"] = config.dropout;
  j["seed"] = config.seed;
  j["feature_mode"] = to_string(config.feature_mode);
  if (error.empty()) {
    j["best_validation_loss"] = best_validation_loss;
    j["validation_auc"] = std::isfinite(validation_auc) ? json(validation_auc) : json(nullptr);
    j["validation_accuracy"] = validation_accuracy;
    j["best_epoch"] = report.best_epoch;
    j["stopped_epoch"] = report.stopped_epoch;
  } else {
    j["error"] = error;
  }
  return j;
}

GridResult grid_search(const Dataset& train, const Dataset& validation, const ClassWeights& weights,
                       std::span<const NormStats> stats, const ModelConfig& base, const GridRanges& ranges,
                       SelectionMetric metric, int jobs,
                       const std::function<void(std::size_t, const GridPoint&)>& on_point) {
  const auto configs = ranges.expand(base);
  GridResult result;
  result.points.resize(configs.size());
  std::vector<std::optional<nn::Checkpoint>> checkpoints(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      GridPoint& gp = result.points[i];
      gp.config = configs[i];
      try {
        Trainer trainer(configs[i], weights, {stats.begin(), stats.end()});
        TrainOutcome out = trainer.run(train, validation);
        gp.report = out.report;
        gp.best_validation_loss = out.report.best_validation_loss;
        const auto summary = evaluate(trainer.network(), validation);
        gp.validation_auc = summary.overall.auc_roc;
        gp.validation_accuracy = summary.overall.accuracy;
        checkpoints[i] = std::move(out.best);
      } catch (const Error& e) {
        gp.error = e.what();
      }
      if (on_point) {
        std::lock_guard lock(report_mutex);
        on_point(i, gp);
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  auto better = [&](const GridPoint& a, const GridPoint& b) {
    switch (metric) {
      case SelectionMetric::ValidationLoss: return a.best_validation_loss < b.best_validation_loss;
      case SelectionMetric::ValidationAuc: return a.validation_auc > b.validation_auc;
      case SelectionMetric::ValidationAccuracy: return a.validation_accuracy > b.validation_accuracy;
    }
    return false;
  };
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    if (!result.points[i].error.empty()) continue;
    if (!best || better(result.points[i], result.points[*best])) best = i;
  }
  if (!best) throw TrainingError("every grid point failed to train");
  result.best = *best;
  result.best_checkpoint = std::move(checkpoints[*best]);
  return result;
}

}  // namespace acfnet
