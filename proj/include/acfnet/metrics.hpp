#ifndef ACFNET_METRICS_HPP
#define ACFNET_METRICS_HPP

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "acfnet/core.hpp"
#include "acfnet/data_ingest.hpp"

namespace acfnet {

struct ScoredSample {
  std::string id;
  Label label = Label::NonDepressed;
  double score = 0.0;  // probability of the depressed class
  Database database = Database::SYNTH;
  std::string recording_id;
};

// Probability that a random depressed sample outscores a random non-depressed
// one, ties counting one half. Rank based, O(n log n).
double auc_roc(std::span<const ScoredSample> samples);

// Depressed is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion(std::span<const ScoredSample> samples, double threshold = 0.5);

// 2TP / (2TP + FP + FN); 0 with `undefined` set when the class never occurs
// in either predictions or labels.
double f1_score(std::size_t tp, std::size_t fp, std::size_t fn, bool* undefined = nullptr);

struct F1Scores {
  double depressed = 0.0;
  double nondepressed = 0.0;
  bool depressed_undefined = false;
  bool nondepressed_undefined = false;
};

F1Scores f1_per_class(std::span<const ScoredSample> samples, double threshold = 0.5);

struct EvaluationReport {
  double accuracy = 0.0;
  double auc_roc = 0.0;  // NaN when only one class is present
  double f1_depressed = 0.0;
  double f1_nondepressed = 0.0;
  ConfusionCounts counts;
  std::size_t n_depressed = 0;
  std::size_t n_nondepressed = 0;
  double threshold = 0.5;
  std::vector<std::string> warnings;
};

EvaluationReport make_report(std::span<const ScoredSample> samples, double threshold = 0.5);

struct EvaluationSummary {
  EvaluationReport overall;
  std::map<Database, EvaluationReport> by_database;
};

EvaluationSummary summarize(std::span<const ScoredSample> samples, double threshold = 0.5);

// Recording-level view: one sample per recording with the mean segment score.
std::vector<ScoredSample> aggregate_by_recording(std::span<const ScoredSample> samples);

// Flat table with the column order feats, train, test, accuracy, auc_roc, f1_d, f1_nd.
inline constexpr const char* kReportHeader = "feats\ttrain\ttest\taccuracy\tauc_roc\tf1_d\tf1_nd";
std::string report_row(const std::string& feats, const std::string& train, const std::string& test,
                       const EvaluationReport& r);

}  // namespace acfnet

#endif  // ACFNET_METRICS_HPP
