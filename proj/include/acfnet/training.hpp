#ifndef ACFNET_TRAINING_HPP
#define ACFNET_TRAINING_HPP

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "acfnet/acf.hpp"
#include "acfnet/data_ingest.hpp"
#include "acfnet/metrics.hpp"
#include "acfnet/model.hpp"
#include "acfnet/nn/adam.hpp"
#include "acfnet/nn/checkpoint.hpp"
#include "acfnet/nn/loss.hpp"

namespace acfnet {

using InputMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ExampleMeta {
  std::string segment_id;
  std::string recording_id;
  std::string speaker_id;
  Database database = Database::SYNTH;
  Label label = Label::NonDepressed;
};

// One segment with one raw (un-normalized) ACF per tower.
struct SegmentSample {
  ExampleMeta meta;
  std::vector<ChannelDelayCorrelationMatrix> acfs;
};

// Normalized model inputs, [example][tower].
struct Dataset {
  std::vector<ExampleMeta> meta;
  std::vector<std::vector<InputMatrix>> inputs;

  std::size_t size() const { return meta.size(); }
  std::size_t tower_count() const { return inputs.empty() ? 0 : inputs.front().size(); }
  std::vector<Label> labels() const;
};

// Stacks the selected examples into one [B, M^2, D + 1, 1] tensor per tower.
template <typename Scalar>
std::vector<nn::Tensor<Scalar>> make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<nn::Tensor<Scalar>> out;
  const auto batch = static_cast<nn::Index>(indices.size());
  for (std::size_t t = 0; t < data.tower_count(); ++t) {
    const InputMatrix& first = data.inputs[indices.front()][t];
    nn::Tensor<Scalar> x({batch, first.rows(), first.cols(), 1});
    const nn::Index per = first.size();
    for (nn::Index b = 0; b < batch; ++b) {
      const InputMatrix& m = data.inputs[indices[static_cast<std::size_t>(b)]][t];
      if (m.rows() != first.rows() || m.cols() != first.cols()) throw ShapeError("mixed ACF shapes in batch");
      x.values().segment(b * per, per) = Eigen::Map<const Eigen::VectorXf>(m.data(), per).template cast<Scalar>();
    }
    out.push_back(std::move(x));
  }
  return out;
}

// Per-tower z-normalization statistics fitted on the training segments only,
// rounded to f32 so that a reloaded checkpoint reproduces them exactly.
std::vector<NormStats> fit_tower_stats(std::span<const SegmentSample> train);
Dataset to_dataset(std::span<const SegmentSample> samples, std::span<const NormStats> stats);

// Throws LeakageError when any speaker or segment appears in two parts.
void assert_disjoint(std::span<const SegmentSample> train, std::span<const SegmentSample> validation,
                     std::span<const SegmentSample> test);
void assert_disjoint(const DatasetSplit& split, std::span<const RecordingRecord> records);

struct PreparedData {
  std::vector<NormStats> stats;
  Dataset train, validation, test;
};

PreparedData prepare_datasets(std::span<const SegmentSample> train, std::span<const SegmentSample> validation,
                              std::span<const SegmentSample> test);

// Patience automaton on the validation loss. Epochs are 1-based; an epoch
// improves when its loss is strictly below the best so far.
class EarlyStopping {
 public:
  EarlyStopping() = default;
  EarlyStopping(int patience, int max_epochs) : patience_(patience), max_epochs_(max_epochs) {}

  // Records the next epoch's loss; true when training should stop now.
  bool update(double loss);

  int epoch() const { return epoch_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  int wait() const { return wait_; }
  bool improved() const { return improved_; }
  bool stopped() const { return stopped_; }
  int patience() const { return patience_; }
  int max_epochs() const { return max_epochs_; }
  // Moves the epoch cap; a run stopped only by the old cap becomes resumable.
  void set_max_epochs(int max_epochs);

  nlohmann::json to_json() const;
  static EarlyStopping from_json(const nlohmann::json& j);

 private:
  int patience_ = 15;
  int max_epochs_ = 300;
  int epoch_ = 0;
  int best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  int wait_ = 0;
  bool improved_ = false;
  bool stopped_ = false;
};

struct TrainReport {
  std::vector<double> train_loss;       // weighted BCE + L2, per epoch
  std::vector<double> validation_loss;  // weighted BCE, per epoch
  int first_epoch = 1;                  // > 1 when resumed
  int stopped_epoch = 0;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  bool restored_best = false;

  nlohmann::json to_json() const;
};

struct EpochRecord {
  int epoch;
  double train_loss;
  double validation_loss;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainOutcome {
  TrainReport report;
  nn::Checkpoint best;  // weights and optimizer state at the best epoch
  nn::Checkpoint last;  // state after the final epoch, for resuming
};

double weighted_loss(Network<float>& net, const Dataset& data, const ClassWeights& weights, int batch_size = 64);
std::vector<ScoredSample> score(Network<float>& net, const Dataset& data, int batch_size = 64);
EvaluationSummary evaluate(Network<float>& net, const Dataset& data, double threshold = 0.5);

class Trainer {
 public:
  Trainer(ModelConfig config, ClassWeights weights, std::vector<NormStats> stats);
  // Restores model, optimizer, early-stopping and RNG state from a checkpoint.
  static Trainer resume(const nn::Checkpoint& ckpt);

  TrainOutcome run(const Dataset& train, const Dataset& validation, const EpochCallback& on_epoch = {});

  Network<float>& network() { return net_; }
  const ModelConfig& config() const { return config_; }
  const EarlyStopping& stopper() const { return stopper_; }
  void set_max_epochs(int max_epochs);
  nn::Checkpoint checkpoint() const;

 private:
  double train_epoch(const Dataset& train);

  ModelConfig config_;
  ClassWeights weights_;
  std::vector<NormStats> stats_;
  Network<float> net_;
  nn::Adam<float> optimizer_;
  EarlyStopping stopper_;
  nn::Rng shuffle_rng_;
  nn::Rng dropout_rng_;
  TrainReport history_;
};

// Checkpoint <-> model.
nn::Checkpoint make_checkpoint(Network<float>& net, const ModelConfig& config, std::span<const NormStats> stats,
                               const nn::Adam<float>* optimizer = nullptr,
                               const nlohmann::json& training = nlohmann::json::object());
ModelConfig checkpoint_config(const nn::Checkpoint& ckpt);
Network<float> load_network(const nn::Checkpoint& ckpt);
std::vector<NormStats> load_norm_stats(const nn::Checkpoint& ckpt);

struct GridRanges {
  std::vector<int> o1{16, 32};
  std::vector<int> o2{8, 16};
  std::vector<int> k1{3, 4};
  std::vector<int> o3{8, 16};
  std::vector<double> dropout{0.4, 0.5};

  std::vector<ModelConfig> expand(const ModelConfig& base) const;
};

enum class SelectionMetric { ValidationLoss, ValidationAuc, ValidationAccuracy };
SelectionMetric selection_metric_from_string(const std::string& s);

struct GridPoint {
  ModelConfig config;
  TrainReport report;
  double best_validation_loss = 0.0;
  double validation_auc = 0.0;
  double validation_accuracy = 0.0;
  std::string error;  // non-empty when training this point failed

  nlohmann::json to_json() const;
};

struct GridResult {
  std::vector<GridPoint> points;
  std::size_t best = 0;
  std::optional<nn::Checkpoint> best_checkpoint;
};

GridResult grid_search(const Dataset& train, const Dataset& validation, const ClassWeights& weights,
                       std::span<const NormStats> stats, const ModelConfig& base, const GridRanges& ranges,
                       SelectionMetric metric = SelectionMetric::ValidationLoss, int jobs = 1,
                       const std::function<void(std::size_t, const GridPoint&)>& on_point = {});

}  // namespace acfnet

#endif  // ACFNET_TRAINING_HPP
