#ifndef ACFNET_DATA_INGEST_HPP
#define ACFNET_DATA_INGEST_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "acfnet/core.hpp"

namespace acfnet {

enum class Scale : std::uint8_t { HAMD, QIDS };

struct ClinicalScore {
  Scale scale;
  int value;
};

// Five-level clinical severity. Level 1 is the non-depressed class.
enum class SeverityLevel : int { Normal = 1, Mild = 2, Moderate = 3, Severe = 4, VerySevere = 5 };

enum class Database : std::uint8_t { MD1, MD2, SYNTH };

const char* to_string(Scale s);
const char* to_string(Database d);
Database database_from_string(const std::string& s);

struct RecordingRecord {
  std::string recording_id;
  std::string speaker_id;
  Database database = Database::SYNTH;
  std::string path;        // TV feature file, or audio for MFCC-only manifests
  std::string audio_path;  // optional: audio used for glottal / MFCC tracks
  std::string mfcc_path;   // optional: precomputed MFCC feature file
  std::vector<ClinicalScore> scores;
  std::optional<Label> label;
};

// How a record with two clinical scores is resolved.
//   SameLevel: both scores must land on the same five-way severity level.
//   SameClass: both scores must land on the same side of the binary split.
enum class AgreementMode : std::uint8_t { SameLevel, SameClass };

SeverityLevel score_to_severity(ClinicalScore score);
Label severity_to_label(SeverityLevel level);
std::optional<Label> assign_label(const RecordingRecord& record,
                                  AgreementMode mode = AgreementMode::SameLevel);

// Manifest: one JSON object per line.
std::vector<RecordingRecord> parse_manifest(std::istream& in,
                                            AgreementMode mode = AgreementMode::SameLevel);
std::vector<RecordingRecord> read_manifest(const std::string& path,
                                           AgreementMode mode = AgreementMode::SameLevel);
std::string manifest_line(const RecordingRecord& record);
void write_manifest(const std::string& path, std::span<const RecordingRecord> records);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

// One unit of the split problem. `count` is the number of training samples the
// recording contributes (segments when known, otherwise 1).
struct SplitItem {
  std::string recording_id;
  std::string speaker_id;
  Label label;
  std::size_t count = 1;
};

DatasetSplit make_split(std::span<const SplitItem> items, SplitRatios ratios, std::uint64_t seed);
DatasetSplit make_split(std::span<const RecordingRecord> records, SplitRatios ratios,
                        std::uint64_t seed);

void write_split(const std::string& path, const DatasetSplit& split);
DatasetSplit read_split(const std::string& path);

struct ClassWeights {
  double depressed = 1.0;
  double nondepressed = 1.0;

  double operator()(Label l) const { return l == Label::Depressed ? depressed : nondepressed; }
};

// Balanced inverse frequency: w_c = N / (2 N_c).
ClassWeights class_weights(std::span<const Label> labels);

}  // namespace acfnet

#endif  // ACFNET_DATA_INGEST_HPP
