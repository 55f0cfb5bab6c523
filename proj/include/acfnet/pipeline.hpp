#ifndef ACFNET_PIPELINE_HPP
#define ACFNET_PIPELINE_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "acfnet/acf.hpp"
#include "acfnet/data_ingest.hpp"
#include "acfnet/feature_track.hpp"
#include "acfnet/model.hpp"
#include "acfnet/synthetic.hpp"
#include "acfnet/training.hpp"

namespace acfnet {

// Relative manifest paths resolve against the manifest's directory.
std::string resolve_path(const std::string& path, const std::string& base_dir);

// Per-recording feature tracks at 100 Hz (tv8: 8 channels, mfcc12: 12).
FeatureTrack load_tv8_track(const RecordingRecord& record, const std::string& base_dir);
FeatureTrack load_mfcc12_track(const RecordingRecord& record, const std::string& base_dir);

struct SegmentFeatures {
  std::string segment_id;
  double start_time = 0.0;
  double end_time = 0.0;
  std::vector<ChannelDelayCorrelationMatrix> acfs;  // one per tower of the mode
};

// Normalizes each track over the whole recording, cuts 20 s / 5 s segments on
// the common frame range and builds one ACF per tower per segment.
std::vector<SegmentFeatures> featurize_tracks(const std::string& recording_id, std::vector<FeatureTrack> tracks,
                                              int max_delay);
std::vector<SegmentFeatures> featurize_recording(const RecordingRecord& record, const std::string& base_dir,
                                                 FeatureMode mode, int max_delay = 50);

struct SegmentEntry {
  std::string segment_id;
  std::string recording_id;
  std::string speaker_id;
  Database database = Database::SYNTH;
  Label label = Label::NonDepressed;
  double start_time = 0.0;
  double end_time = 0.0;
  std::map<std::string, std::string> files;  // "tv8" / "mfcc12" -> ACFT path
};

struct SegmentIndex {
  std::string base_dir;
  std::vector<SegmentEntry> entries;

  bool has(FeatureMode single_mode) const;
  std::vector<SplitItem> split_items() const;
  std::vector<RecordingRecord> recordings() const;
};

void write_segment_index(const std::string& path, const std::vector<SegmentEntry>& entries);
SegmentIndex read_segment_index(const std::string& path);

struct FeaturizeOptions {
  FeatureMode mode = FeatureMode::TV8;
  int max_delay = 50;
  int jobs = 1;
};

struct FeaturizeIssue {
  std::string recording_id;
  std::string message;
  bool failure = false;  // false: warning only
};

struct FeaturizeResult {
  std::vector<SegmentEntry> entries;
  std::vector<FeaturizeIssue> issues;
  std::size_t failures() const;
};

// Writes <out>/acf/<mode>/<segment>.acft and <out>/index.jsonl. Per-recording
// failures are collected, never thrown.
FeaturizeResult featurize(const std::vector<RecordingRecord>& records, const std::string& base_dir,
                          const std::string& out_dir, const FeaturizeOptions& options);

SegmentSample to_sample(const SegmentEntry& entry, std::vector<ChannelDelayCorrelationMatrix> acfs);

// Loads the towers `mode` needs for every entry whose recording is in `ids`
// (all entries when ids is empty). Missing tower files raise ConfigError.
std::vector<SegmentSample> load_segments(const SegmentIndex& index, FeatureMode mode,
                                         const std::set<std::string>& ids = {});

// In-memory path for generated corpora: segments plus split items whose
// counts are the segments per recording.
struct SampleSet {
  std::vector<SegmentSample> samples;
  std::vector<SplitItem> items;
};

SampleSet featurize_corpus(const std::vector<SynthRecording>& corpus, FeatureMode mode, int max_delay = 50);

struct SplitSamples {
  std::vector<SegmentSample> train, validation, test;
};

// Routes each sample by recording id; samples of unlisted recordings are dropped.
SplitSamples split_samples(std::span<const SegmentSample> samples, const DatasetSplit& split);

}  // namespace acfnet

#endif  // ACFNET_PIPELINE_HPP
