#include "acfnet/data_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "acfnet/io_util.hpp"

namespace acfnet {

using nlohmann::json;

Label label_from_string(const std::string& s) {
  if (s == "depressed" || s == "1") return Label::Depressed;
  if (s == "nondepressed" || s == "0") return Label::NonDepressed;
  throw FormatError("unknown label '" + s + "'");
}

const char* to_string(Scale s) { return s == Scale::HAMD ? "HAMD" : "QIDS"; }

const char* to_string(Database d) {
  switch (d) {
    case Database::MD1: return "MD1";
    case Database::MD2: return "MD2";
    case Database::SYNTH: return "SYNTH";
  }
  return "?";
}

Database database_from_string(const std::string& s) {
  if (s == "MD1") return Database::MD1;
  if (s == "MD2") return Database::MD2;
  if (s == "SYNTH") return Database::SYNTH;
  throw FormatError("unknown database tag '" + s + "'");
}

namespace {

// Upper bounds (inclusive) of levels 1..5.
constexpr std::array<int, 5> kHamdUpper = {7, 13, 18, 22, 52};
constexpr std::array<int, 5> kQidsUpper = {5, 10, 15, 20, 27};

}  // namespace

SeverityLevel score_to_severity(ClinicalScore score) {
  const auto& upper = score.scale == Scale::HAMD ? kHamdUpper : kQidsUpper;
  if (score.value < 0 || score.value > upper.back()) {
    throw RangeError(std::string(to_string(score.scale)) + " score " + std::to_string(score.value) +
                     " outside [0, " + std::to_string(upper.back()) + "]");
  }
  const auto it = std::lower_bound(upper.begin(), upper.end(), score.value);
  return static_cast<SeverityLevel>(1 + (it - upper.begin()));
}

Label severity_to_label(SeverityLevel level) {
  return level == SeverityLevel::Normal ? Label::NonDepressed : Label::Depressed;
}

std::optional<Label> assign_label(const RecordingRecord& record, AgreementMode mode) {
  if (record.scores.empty()) {
    throw MissingDataError("recording '" + record.recording_id + "' has no clinical score");
  }
  const SeverityLevel first = score_to_severity(record.scores.front());
  for (std::size_t k = 1; k < record.scores.size(); ++k) {
    const SeverityLevel other = score_to_severity(record.scores[k]);
    const bool agree = mode == AgreementMode::SameLevel
                           ? other == first
                           : severity_to_label(other) == severity_to_label(first);
    if (!agree) return std::nullopt;
  }
  return severity_to_label(first);
}

std::vector<RecordingRecord> parse_manifest(std::istream& in, AgreementMode mode) {
  std::vector<RecordingRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    RecordingRecord r;
    try {
      r.recording_id = j.at("recording_id").get<std::string>();
      r.speaker_id = j.at("speaker_id").get<std::string>();
      r.database = database_from_string(j.at("database").get<std::string>());
      r.path = j.value("path", std::string{});
      r.audio_path = j.value("audio_path", std::string{});
      r.mfcc_path = j.value("mfcc_path", std::string{});
      if (j.contains("hamd") && !j["hamd"].is_null())
        r.scores.push_back({Scale::HAMD, j["hamd"].get<int>()});
      if (j.contains("qids") && !j["qids"].is_null())
        r.scores.push_back({Scale::QIDS, j["qids"].get<int>()});
    } catch (const json::exception& e) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen.insert(r.recording_id).second) {
      throw FormatError("duplicate recording_id '" + r.recording_id + "'");
    }
    r.label = assign_label(r, mode);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RecordingRecord> read_manifest(const std::string& path, AgreementMode mode) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path);
  return parse_manifest(in, mode);
}

std::string manifest_line(const RecordingRecord& r) {
  json j;
  j["recording_id"] = r.recording_id;
  j["speaker_id"] = r.speaker_id;
  j["database"] = to_string(r.database);
  j["path"] = r.path;
  if (!r.audio_path.empty()) j["audio_path"] = r.audio_path;
  if (!r.mfcc_path.empty()) j["mfcc_path"] = r.mfcc_path;
  for (const auto& s : r.scores) j[s.scale == Scale::HAMD ? "hamd" : "qids"] = s.value;
  return j.dump();
}

void write_manifest(const std::string& path, std::span<const RecordingRecord> records) {
  std::string text;
  for (const auto& r : records) text += manifest_line(r) + "\n";
  write_file_atomic(path, text);
}

namespace {

struct SpeakerBin {
  std::string speaker;
  std::array<double, 2> counts{0.0, 0.0};  // [nondepressed, depressed]
  std::vector<std::string> recordings;
  double total() const { return counts[0] + counts[1]; }
};

}  // namespace

DatasetSplit make_split(std::span<const SplitItem> items, SplitRatios ratios, std::uint64_t seed) {
  const std::array<double, 3> ratio{ratios.train, ratios.validation, ratios.test};
  for (double r : ratio) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
  }
  if (std::abs(ratio[0] + ratio[1] + ratio[2] - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }

  std::map<std::string, SpeakerBin> by_speaker;
  for (const auto& it : items) {
    auto& bin = by_speaker[it.speaker_id];
    bin.speaker = it.speaker_id;
    bin.counts[it.label == Label::Depressed ? 1 : 0] += static_cast<double>(it.count);
    bin.recordings.push_back(it.recording_id);
  }
  if (by_speaker.size() < 3) {
    throw InfeasibleSplitError("need at least 3 distinct speakers, got " +
                               std::to_string(by_speaker.size()));
  }

  std::vector<SpeakerBin> bins;
  bins.reserve(by_speaker.size());
  for (auto& [_, b] : by_speaker) bins.push_back(std::move(b));
  std::mt19937_64 rng(seed);
  std::shuffle(bins.begin(), bins.end(), rng);
  std::stable_sort(bins.begin(), bins.end(),
                   [](const SpeakerBin& a, const SpeakerBin& b) { return a.total() > b.total(); });

  std::array<double, 2> class_total{0.0, 0.0};
  for (const auto& b : bins) {
    class_total[0] += b.counts[0];
    class_total[1] += b.counts[1];
  }

  std::array<std::array<double, 2>, 3> assigned{};
  std::array<std::vector<std::size_t>, 3> members;
  auto deviation = [&](const std::array<std::array<double, 2>, 3>& a) {
    double dev = 0.0;
    for (int p = 0; p < 3; ++p) {
      for (int c = 0; c < 2; ++c) dev += std::abs(a[p][c] - ratio[p] * class_total[c]);
      dev += std::abs(a[p][0] + a[p][1] - ratio[p] * (class_total[0] + class_total[1]));
    }
    return dev;
  };

  for (std::size_t s = 0; s < bins.size(); ++s) {
    int best = 0;
    double best_dev = std::numeric_limits<double>::infinity();
    for (int p = 0; p < 3; ++p) {
      if (ratio[p] == 0.0) continue;
      auto trial = assigned;
      trial[p][0] += bins[s].counts[0];
      trial[p][1] += bins[s].counts[1];
      const double dev = deviation(trial);
      if (dev < best_dev - 1e-12) {
        best_dev = dev;
        best = p;
      }
    }
    assigned[best][0] += bins[s].counts[0];
    assigned[best][1] += bins[s].counts[1];
    members[best].push_back(s);
  }

  // Parts with a positive ratio must not be empty: borrow the smallest speaker
  // from the most populated part.
  for (int p = 0; p < 3; ++p) {
    if (ratio[p] == 0.0 || !members[p].empty()) continue;
    int donor = 0;
    for (int q = 1; q < 3; ++q) {
      if (members[q].size() > members[donor].size()) donor = q;
    }
    auto& from = members[donor];
    const auto smallest = std::min_element(from.begin(), from.end(), [&](std::size_t a, std::size_t b) {
      return bins[a].total() < bins[b].total();
    });
    members[p].push_back(*smallest);
    from.erase(smallest);
  }

  DatasetSplit split;
  split.ratios = ratios;
  split.seed = seed;
  std::array<std::vector<std::string>*, 3> parts{&split.train, &split.validation, &split.test};
  for (int p = 0; p < 3; ++p) {
    for (std::size_t s : members[p]) {
      for (const auto& id : bins[s].recordings) parts[p]->push_back(id);
    }
    std::sort(parts[p]->begin(), parts[p]->end());
  }
  return split;
}

DatasetSplit make_split(std::span<const RecordingRecord> records, SplitRatios ratios,
                        std::uint64_t seed) {
  std::vector<SplitItem> items;
  items.reserve(records.size());
  for (const auto& r : records) {
    if (!r.label) {
      throw MissingDataError("recording '" + r.recording_id + "' is unlabeled; filter it first");
    }
    items.push_back({r.recording_id, r.speaker_id, *r.label, 1});
  }
  return make_split(items, ratios, seed);
}

void write_split(const std::string& path, const DatasetSplit& split) {
  json j;
  j["seed"] = split.seed;
  j["ratios"] = {split.ratios.train, split.ratios.validation, split.ratios.test};
  j["train"] = split.train;
  j["validation"] = split.validation;
  j["test"] = split.test;
  write_file_atomic(path, j.dump(2) + "\n");
}

DatasetSplit read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open split file " + path);
  DatasetSplit s;
  try {
    const json j = json::parse(in);
    // seed and ratios are provenance only; hand-written splits may leave them out
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("ratios")) {
      const auto r = j.at("ratios").get<std::vector<double>>();
      if (r.size() != 3) throw FormatError("split ratios must have 3 entries");
      s.ratios = {r[0], r[1], r[2]};
    }
    s.train = j.at("train").get<std::vector<std::string>>();
    s.validation = j.at("validation").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError("split file " + path + ": " + e.what());
  }
  return s;
}

ClassWeights class_weights(std::span<const Label> labels) {
  const auto n_dep = static_cast<double>(std::count(labels.begin(), labels.end(), Label::Depressed));
  const auto n_total = static_cast<double>(labels.size());
  const double n_nd = n_total - n_dep;
  if (n_dep == 0.0 || n_nd == 0.0) {
    throw DegenerateClassError("class weights need both classes present (depressed=" +
                               std::to_string(static_cast<long>(n_dep)) +
                               ", nondepressed=" + std::to_string(static_cast<long>(n_nd)) + ")");
  }
  return {n_total / (2.0 * n_dep), n_total / (2.0 * n_nd)};
}

}  // namespace acfnet
