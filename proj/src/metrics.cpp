#include "acfnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace acfnet {

double auc_roc(std::span<const ScoredSample> samples) {
  for (const auto& s : samples) {
    if (!std::isfinite(s.score)) throw UndefinedMetricError("non-finite score");
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return samples[a].score < samples[b].score; });
  double n_pos = 0.0, n_neg = 0.0, rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && samples[order[j]].score == samples[order[i]].score) ++j;
    // Ranks i+1 .. j share the mid rank.
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (samples[order[k]].label == Label::Depressed) {
        rank_sum_pos += mid_rank;
        n_pos += 1.0;
      } else {
        n_neg += 1.0;
      }
    }
    i = j;
  }
  if (n_pos == 0.0 || n_neg == 0.0) throw UndefinedMetricError("AUC-ROC needs both classes present");
  const double u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
  return u / (n_pos * n_neg);
}

ConfusionCounts confusion(std::span<const ScoredSample> samples, double threshold) {
  ConfusionCounts c;
  for (const auto& s : samples) {
    const bool predicted = s.score >= threshold;
    const bool actual = s.label == Label::Depressed;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1_score(std::size_t tp, std::size_t fp, std::size_t fn, bool* undefined) {
  const std::size_t denom = 2 * tp + fp + fn;
  if (undefined) *undefined = denom == 0;
  if (denom == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

F1Scores f1_per_class(std::span<const ScoredSample> samples, double threshold) {
  const ConfusionCounts c = confusion(samples, threshold);
  F1Scores f;
  f.depressed = f1_score(c.tp, c.fp, c.fn, &f.depressed_undefined);
  f.nondepressed = f1_score(c.tn, c.fn, c.fp, &f.nondepressed_undefined);
  return f;
}

EvaluationReport make_report(std::span<const ScoredSample> samples, double threshold) {
  if (samples.empty()) throw UndefinedMetricError("cannot evaluate an empty set");
  EvaluationReport r;
  r.threshold = threshold;
  r.counts = confusion(samples, threshold);
  r.n_depressed = r.counts.tp + r.counts.fn;
  r.n_nondepressed = r.counts.tn + r.counts.fp;
  r.accuracy = static_cast<double>(r.counts.tp + r.counts.tn) / static_cast<double>(r.counts.total());
  const F1Scores f = f1_per_class(samples, threshold);
  r.f1_depressed = f.depressed;
  r.f1_nondepressed = f.nondepressed;
  if (f.depressed_undefined) r.warnings.emplace_back("F1(D) undefined: no depressed labels or predictions");
  if (f.nondepressed_undefined) r.warnings.emplace_back("F1(ND) undefined: no non-depressed labels or predictions");
  if (r.n_depressed > 0 && r.n_nondepressed > 0) {
    r.auc_roc = auc_roc(samples);
  } else {
    r.auc_roc = std::numeric_limits<double>::quiet_NaN();
    r.warnings.emplace_back("AUC-ROC undefined: single-class set");
  }
  return r;
}

EvaluationSummary summarize(std::span<const ScoredSample> samples, double threshold) {
  EvaluationSummary s;
  s.overall = make_report(samples, threshold);
  std::map<Database, std::vector<ScoredSample>> groups;
  for (const auto& x : samples) groups[x.database].push_back(x);
  for (const auto& [db, group] : groups) s.by_database.emplace(db, make_report(group, threshold));
  return s;
}

std::vector<ScoredSample> aggregate_by_recording(std::span<const ScoredSample> samples) {
  std::map<std::string, std::pair<ScoredSample, std::size_t>> acc;
  for (const auto& s : samples) {
    auto [it, inserted] = acc.try_emplace(s.recording_id, s, 0);
    if (inserted) {
      it->second.first.id = s.recording_id;
      it->second.first.score = 0.0;
    } else if (it->second.first.label != s.label) {
      throw FormatError("recording '" + s.recording_id + "' has segments with different labels");
    }
    it->second.first.score += s.score;
    ++it->second.second;
  }
  std::vector<ScoredSample> out;
  for (auto& [_, v] : acc) {
    v.first.score /= static_cast<double>(v.second);
    out.push_back(v.first);
  }
  return out;
}

std::string report_row(const std::string& feats, const std::string& train, const std::string& test,
                       const EvaluationReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "\t%.4f\t%.4f\t%.4f\t%.4f", r.accuracy, r.auc_roc, r.f1_depressed,
                r.f1_nondepressed);
  return feats + "\t" + train + "\t" + test + buf;
}

}  // namespace acfnet
