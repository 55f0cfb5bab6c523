#include "acfnet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "acfnet/dsp.hpp"
#include "acfnet/io_util.hpp"

namespace acfnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_wav(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".wav";
}

std::string mode_key(FeatureMode m) { return to_string(m); }

}  // namespace

std::string resolve_path(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).string();
}

FeatureTrack load_tv8_track(const RecordingRecord& record, const std::string& base_dir) {
  if (record.path.empty() || is_wav(record.path)) {
    throw MissingDataError("recording '" + record.recording_id + "' has no TV feature file");
  }
  FeatureTrack track = load_feature_track(resolve_path(record.path, base_dir));
  if (track.channels() == 8) return track;
  if (track.channels() != 6) {
    throw FormatError("recording '" + record.recording_id + "': TV file has " + std::to_string(track.channels()) +
                      " channels (expected 6, or 8 with glottal channels)");
  }
  if (record.audio_path.empty()) {
    throw MissingDataError("recording '" + record.recording_id + "' needs audio_path for the glottal channels");
  }
  const AudioClip clip = read_wav(resolve_path(record.audio_path, base_dir));
  return assemble_tv8(canonicalize_tv_track(std::move(track)), estimate_glottal_tracks(clip));
}

FeatureTrack load_mfcc12_track(const RecordingRecord& record, const std::string& base_dir) {
  if (!record.mfcc_path.empty()) {
    FeatureTrack track = load_feature_track(resolve_path(record.mfcc_path, base_dir));
    if (track.channels() != mfcc::kCoefficients) {
      throw FormatError("recording '" + record.recording_id + "': MFCC file has " +
                        std::to_string(track.channels()) + " channels, expected 12");
    }
    return track;
  }
  std::string audio = record.audio_path;
  if (audio.empty() && is_wav(record.path)) audio = record.path;
  if (audio.empty()) throw MissingDataError("recording '" + record.recording_id + "' has no audio for MFCCs");
  return compute_mfcc(read_wav(resolve_path(audio, base_dir)));
}

std::vector<SegmentFeatures> featurize_tracks(const std::string& recording_id, std::vector<FeatureTrack> tracks,
                                              int max_delay) {
  if (tracks.empty()) throw ShapeError("no tracks to featurize");
  const double rate = tracks.front().frame_rate;
  Eigen::Index frames = tracks.front().frames();
  for (const auto& t : tracks) {
    if (t.frame_rate != rate) throw AlignmentError("recording '" + recording_id + "': tracks differ in frame rate");
    if (std::abs(t.frames() - tracks.front().frames()) > 2) {
      throw AlignmentError("recording '" + recording_id + "': tracks differ by more than 2 frames");
    }
    frames = std::min(frames, t.frames());
  }
  for (auto& t : tracks) {
    t.data = t.data.leftCols(frames).eval();
    t = normalize_channels(t);
  }
  std::vector<SegmentFeatures> out;
  int k = 0;
  for (const auto& [begin, end] : segment_bounds(frames, rate)) {
    SegmentFeatures s;
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_s%03d", k++);
    s.segment_id = recording_id + suffix;
    s.start_time = static_cast<double>(begin) / rate;
    s.end_time = static_cast<double>(end) / rate;
    for (const auto& t : tracks) {
      FeatureTrack piece;
      piece.frame_rate = rate;
      piece.channel_names = t.channel_names;
      piece.data = t.data.middleCols(begin, end - begin);
      s.acfs.push_back(build_acf(piece, max_delay));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SegmentFeatures> featurize_recording(const RecordingRecord& record, const std::string& base_dir,
                                                 FeatureMode mode, int max_delay) {
  std::vector<FeatureTrack> tracks;
  for (FeatureMode m : tower_modes(mode)) {
    tracks.push_back(m == FeatureMode::TV8 ? load_tv8_track(record, base_dir) : load_mfcc12_track(record, base_dir));
  }
  return featurize_tracks(record.recording_id, std::move(tracks), max_delay);
}

bool SegmentIndex::has(FeatureMode single_mode) const {
  const std::string key = mode_key(single_mode);
  return !entries.empty() &&
         std::all_of(entries.begin(), entries.end(), [&](const SegmentEntry& e) { return e.files.count(key) > 0; });
}

std::vector<SplitItem> SegmentIndex::split_items() const {
  std::vector<SplitItem> items;
  std::map<std::string, std::size_t> pos;
  for (const auto& e : entries) {
    auto [it, fresh] = pos.emplace(e.recording_id, items.size());
    if (fresh) {
      items.push_back({e.recording_id, e.speaker_id, e.label, 1});
    } else {
      ++items[it->second].count;
    }
  }
  return items;
}

std::vector<RecordingRecord> SegmentIndex::recordings() const {
  std::vector<RecordingRecord> out;
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.recording_id).second) continue;
    RecordingRecord r;
    r.recording_id = e.recording_id;
    r.speaker_id = e.speaker_id;
    r.database = e.database;
    r.label = e.label;
    out.push_back(std::move(r));
  }
  return out;
}

void write_segment_index(const std::string& path, const std::vector<SegmentEntry>& entries) {
  std::string text;
  for (const auto& e : entries) {
    json j;
    j["segment_id"] = e.segment_id;
    j["recording_id"] = e.recording_id;
    j["speaker_id"] = e.speaker_id;
    j["database"] = to_string(e.database);
    j["label"] = to_string(e.label);
    j["start"] = e.start_time;
    j["end"] = e.end_time;
    j["files"] = e.files;
    text += j.dump() + "\n";
  }
  write_file_atomic(path, text);
}

SegmentIndex read_segment_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open segment index " + path);
  SegmentIndex index;
  index.base_dir = fs::path(path).parent_path().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      SegmentEntry e;
      e.segment_id = j.at("segment_id").get<std::string>();
      e.recording_id = j.at("recording_id").get<std::string>();
      e.speaker_id = j.at("speaker_id").get<std::string>();
      e.database = database_from_string(j.at("database").get<std::string>());
      e.label = label_from_string(j.at("label").get<std::string>());
      e.start_time = j.at("start").get<double>();
      e.end_time = j.at("end").get<double>();
      e.files = j.at("files").get<std::map<std::string, std::string>>();
      index.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw FormatError("segment index line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return index;
}

std::size_t FeaturizeResult::failures() const {
  return static_cast<std::size_t>(std::count_if(issues.begin(), issues.end(), [](const auto& i) { return i.failure; }));
}

FeaturizeResult featurize(const std::vector<RecordingRecord>& records, const std::string& base_dir,
                          const std::string& out_dir, const FeaturizeOptions& options) {
  const auto modes = tower_modes(options.mode);
  std::vector<std::vector<SegmentEntry>> per_record(records.size());
  std::vector<std::vector<FeaturizeIssue>> per_issues(records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      const RecordingRecord& r = records[i];
      if (!r.label) {
        per_issues[i].push_back({r.recording_id, "unlabeled (clinical scores disagree); skipped", false});
        continue;
      }
      try {
        const auto segments = featurize_recording(r, base_dir, options.mode, options.max_delay);
        if (segments.empty()) {
          per_issues[i].push_back({r.recording_id, "shorter than 10 s; no segments", false});
        }
        for (const auto& s : segments) {
          SegmentEntry e{s.segment_id, r.recording_id, r.speaker_id, r.database, *r.label, s.start_time, s.end_time, {}};
          for (std::size_t t = 0; t < modes.size(); ++t) {
            const std::string rel = "acf/" + mode_key(modes[t]) + "/" + s.segment_id + ".acft";
            save_feature_track((fs::path(out_dir) / rel).string(), acf_to_track(s.acfs[t]));
            e.files[mode_key(modes[t])] = rel;
          }
          per_record[i].push_back(std::move(e));
        }
      } catch (const Error& ex) {
        per_issues[i].push_back({r.recording_id, ex.what(), true});
      } catch (const fs::filesystem_error& ex) {
        per_issues[i].push_back({r.recording_id, ex.what(), true});
      }
    }
  };
  const int threads = std::max(1, std::min<int>(options.jobs, static_cast<int>(records.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  FeaturizeResult result;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (auto& e : per_record[i]) result.entries.push_back(std::move(e));
    for (auto& is : per_issues[i]) result.issues.push_back(std::move(is));
  }
  write_segment_index((fs::path(out_dir) / "index.jsonl").string(), result.entries);
  return result;
}

SegmentSample to_sample(const SegmentEntry& entry, std::vector<ChannelDelayCorrelationMatrix> acfs) {
  SegmentSample s;
  s.meta = {entry.segment_id, entry.recording_id, entry.speaker_id, entry.database, entry.label};
  s.acfs = std::move(acfs);
  return s;
}

std::vector<SegmentSample> load_segments(const SegmentIndex& index, FeatureMode mode,
                                         const std::set<std::string>& ids) {
  const auto modes = tower_modes(mode);
  for (FeatureMode m : modes) {
    if (!index.has(m)) {
      throw ConfigError("feature mode " + std::string(to_string(mode)) + " needs " + to_string(m) +
                        " features, which the segment index does not provide");
    }
  }
  std::vector<SegmentSample> out;
  for (const auto& e : index.entries) {
    if (!ids.empty() && !ids.count(e.recording_id)) continue;
    std::vector<ChannelDelayCorrelationMatrix> acfs;
    for (FeatureMode m : modes) {
      acfs.push_back(acf_from_track(load_feature_track(resolve_path(e.files.at(mode_key(m)), index.base_dir))));
    }
    out.push_back(to_sample(e, std::move(acfs)));
  }
  return out;
}

SampleSet featurize_corpus(const std::vector<SynthRecording>& corpus, FeatureMode mode, int max_delay) {
  SampleSet out;
  for (const auto& rec : corpus) {
    if (!rec.record.label) throw MissingDataError("recording '" + rec.record.recording_id + "' is unlabeled");
    std::vector<FeatureTrack> tracks;
    for (FeatureMode m : tower_modes(mode)) {
      if (m == FeatureMode::TV8) {
        tracks.push_back(rec.track);
      } else {
        if (!rec.secondary) throw ConfigError("corpus has no MFCC-side tracks for mode " + std::string(to_string(mode)));
        tracks.push_back(*rec.secondary);
      }
    }
    const auto segs = featurize_tracks(rec.record.recording_id, std::move(tracks), max_delay);
    if (segs.empty()) continue;
    out.items.push_back({rec.record.recording_id, rec.record.speaker_id, *rec.record.label, segs.size()});
    for (const auto& s : segs) {
      SegmentEntry e{s.segment_id, rec.record.recording_id, rec.record.speaker_id, rec.record.database,
                     *rec.record.label, s.start_time, s.end_time, {}};
      out.samples.push_back(to_sample(e, s.acfs));
    }
  }
  return out;
}

SplitSamples split_samples(std::span<const SegmentSample> samples, const DatasetSplit& split) {
  const std::set<std::string> tr(split.train.begin(), split.train.end());
  const std::set<std::string> va(split.validation.begin(), split.validation.end());
  const std::set<std::string> te(split.test.begin(), split.test.end());
  SplitSamples out;
  for (const auto& s : samples) {
    const std::string& id = s.meta.recording_id;
    if (tr.count(id)) out.train.push_back(s);
    else if (va.count(id)) out.validation.push_back(s);
    else if (te.count(id)) out.test.push_back(s);
  }
  return out;
}

}  // namespace acfnet
