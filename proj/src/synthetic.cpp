#include "acfnet/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <random>

namespace acfnet {

namespace {

void check_coupling(const CouplingSpec& c, int max_delay, Eigen::Index min_frames) {
  if (c.channels < 2) throw ConfigError("synthetic spec needs at least 2 channels");
  if (c.delays[0] == c.delays[1]) throw ConfigError("class delays must differ");
  for (int d : c.delays) {
    if (d < 0 || d >= max_delay) {
      throw ConfigError("coupling delay " + std::to_string(d) + " outside [0, " + std::to_string(max_delay) + ")");
    }
    if (d >= min_frames) {
      throw ConfigError("coupling delay " + std::to_string(d) + " frames exceeds the shortest recording (" +
                        std::to_string(min_frames) + " frames)");
    }
  }
  if (!(c.gain >= 0.0 && c.gain < 1.0)) throw ConfigError("coupling gain must lie in [0, 1)");
  if (!(c.noise > 0.0)) throw ConfigError("noise level must be positive");
  if (!(c.gain_jitter >= 0.0 && c.gain_jitter < 1.0)) throw ConfigError("gain jitter must lie in [0, 1)");
  if (!(std::abs(c.ar_coefficient) < 1.0)) throw ConfigError("AR coefficient must lie in (-1, 1)");
}

}  // namespace

void SynthSpec::validate() const {
  if (speakers_per_class < 1 || recordings_per_speaker < 1) throw ConfigError("synthetic corpus is empty");
  if (!(min_duration > 0.0 && max_duration >= min_duration)) throw ConfigError("bad duration range");
  if (!(frame_rate > 0.0)) throw ConfigError("frame rate must be positive");
  const auto min_frames = static_cast<Eigen::Index>(std::floor(min_duration * frame_rate));
  check_coupling(primary, max_delay, min_frames);
  if (secondary) check_coupling(*secondary, max_delay, min_frames);
}

CouplingSpec weak_mfcc_analog() {
  CouplingSpec c;
  c.channels = 12;
  c.delays = {5, 9};
  c.gain = 0.5;
  c.noise = 1.0;
  return c;
}

FeatureTrack generate_coupled_track(const CouplingSpec& c, Label label, double speaker_gain, Eigen::Index frames,
                                    double frame_rate, std::uint64_t seed) {
  const int delay = c.delays[label == Label::Depressed ? 1 : 0];
  // Enough history that every channel is stationary from frame 0.
  const Eigen::Index burn = 200 + static_cast<Eigen::Index>(c.channels) * delay;
  const Eigen::Index total = frames + burn;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double a = c.ar_coefficient;
  const double innovation = std::sqrt(1.0 - a * a);  // unit-variance AR(1)
  Eigen::MatrixXd x(c.channels, total);
  double prev = gauss(rng);
  for (Eigen::Index t = 0; t < total; ++t) {
    prev = a * prev + innovation * gauss(rng);
    x(0, t) = prev;
  }
  for (int j = 1; j < c.channels; ++j) {
    for (Eigen::Index t = 0; t < total; ++t) {
      const double src = t >= delay ? x(j - 1, t - delay) : 0.0;
      x(j, t) = speaker_gain * src + c.noise * gauss(rng);
    }
  }
  FeatureTrack track;
  track.data = x.rightCols(frames);
  track.frame_rate = frame_rate;
  for (int j = 0; j < c.channels; ++j) track.channel_names.push_back("s" + std::to_string(j + 1));
  return track;
}

std::vector<SynthRecording> generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<SynthRecording> out;
  std::mt19937_64 rng(mix_seed(spec.seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uint64_t recording_index = 0;
  for (int cls = 0; cls < 2; ++cls) {
    const Label label = cls == 1 ? Label::Depressed : Label::NonDepressed;
    for (int s = 0; s < spec.speakers_per_class; ++s) {
      const std::string speaker = spec.id_prefix + (cls == 1 ? "_d" : "_n") + std::to_string(s);
      const double jitter_p = 1.0 + spec.primary.gain_jitter * (2.0 * unit(rng) - 1.0);
      const double jitter_s = spec.secondary ? 1.0 + spec.secondary->gain_jitter * (2.0 * unit(rng) - 1.0) : 1.0;
      for (int r = 0; r < spec.recordings_per_speaker; ++r) {
        const double seconds = spec.min_duration + (spec.max_duration - spec.min_duration) * unit(rng);
        const auto frames = static_cast<Eigen::Index>(std::floor(seconds * spec.frame_rate));
        // HAMD inside the class's severity band.
        const int hamd = label == Label::Depressed ? 14 + static_cast<int>(unit(rng) * 17.0)
                                                   : static_cast<int>(unit(rng) * 8.0);
        SynthRecording rec;
        rec.record.recording_id = speaker + "_r" + std::to_string(r);
        rec.record.speaker_id = speaker;
        rec.record.database = spec.database;
        rec.record.scores = {{Scale::HAMD, std::min(hamd, label == Label::Depressed ? 30 : 7)}};
        rec.record.label = label;
        rec.track = generate_coupled_track(spec.primary, label, spec.primary.gain * jitter_p, frames,
                                           spec.frame_rate, mix_seed(spec.seed, 2 * recording_index + 1));
        if (spec.secondary) {
          rec.secondary = generate_coupled_track(*spec.secondary, label, spec.secondary->gain * jitter_s, frames,
                                                 spec.frame_rate, mix_seed(spec.seed, 2 * recording_index + 2));
        }
        ++recording_index;
        out.push_back(std::move(rec));
      }
    }
  }
  return out;
}

std::string write_corpus(const std::string& dir, const std::vector<SynthRecording>& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "tracks");
  std::vector<RecordingRecord> records;
  records.reserve(corpus.size());
  for (const auto& rec : corpus) {
    RecordingRecord r = rec.record;
    r.path = "tracks/" + r.recording_id + ".acft";
    save_feature_track((fs::path(dir) / r.path).string(), rec.track);
    if (rec.secondary) {
      r.mfcc_path = "tracks/" + r.recording_id + ".mfcc.acft";
      save_feature_track((fs::path(dir) / r.mfcc_path).string(), *rec.secondary);
    }
    records.push_back(std::move(r));
  }
  const std::string manifest = (fs::path(dir) / "manifest.jsonl").string();
  write_manifest(manifest, records);
  return manifest;
}

}  // namespace acfnet
