#ifndef ACFNET_SYNTHETIC_HPP
#define ACFNET_SYNTHETIC_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "acfnet/data_ingest.hpp"
#include "acfnet/feature_track.hpp"

namespace acfnet {

// Delayed-coupling chain: channel 1 is AR(1) noise, channel j copies channel
// j - 1 delayed by the class delay, scaled by the (jittered) gain, plus noise.
struct CouplingSpec {
  int channels = 8;
  std::array<int, 2> delays{3, 12};  // [nondepressed, depressed], frames
  double gain = 0.9;
  double noise = 0.5;
  double gain_jitter = 0.1;
  double ar_coefficient = 0.95;
};

struct SynthSpec {
  int speakers_per_class = 40;
  int recordings_per_speaker = 3;
  double min_duration = 30.0;  // seconds
  double max_duration = 60.0;
  double frame_rate = 100.0;
  int max_delay = 50;
  CouplingSpec primary;
  // Optional 12-channel stream written as the recording's MFCC-side track.
  std::optional<CouplingSpec> secondary;
  Database database = Database::SYNTH;
  std::string id_prefix = "syn";
  std::uint64_t seed = 0;

  void validate() const;
};

// The MFCC-analog used for fusion experiments: 12 channels with a weaker,
// independent class signal.
CouplingSpec weak_mfcc_analog();

struct SynthRecording {
  RecordingRecord record;
  FeatureTrack track;
  std::optional<FeatureTrack> secondary;
};

FeatureTrack generate_coupled_track(const CouplingSpec& c, Label label, double speaker_gain, Eigen::Index frames,
                                    double frame_rate, std::uint64_t seed);

std::vector<SynthRecording> generate(const SynthSpec& spec);

// Writes <dir>/manifest.jsonl plus one ACFT per track under <dir>/tracks; the
// manifest paths are relative to <dir>. Returns the manifest path.
std::string write_corpus(const std::string& dir, const std::vector<SynthRecording>& corpus);

}  // namespace acfnet

#endif  // ACFNET_SYNTHETIC_HPP
