#ifndef ACFNET_DSP_HPP
#define ACFNET_DSP_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "acfnet/core.hpp"
#include "acfnet/feature_track.hpp"

namespace acfnet {

struct AudioClip {
  Eigen::VectorXd samples;
  int sample_rate = 8000;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// PCM 16-bit mono RIFF/WAVE only. Samples are scaled by 1/32768.
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip read_wav(const std::string& path);
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);

namespace mfcc {
inline constexpr int kSampleRate = 8000;
inline constexpr int kWindow = 160;  // 20 ms
inline constexpr int kHop = 80;      // 10 ms
inline constexpr int kFftSize = 256;
inline constexpr int kFilters = 26;
inline constexpr int kCoefficients = 12;  // c1..c12, c0 dropped
inline constexpr double kLogFloor = 1e-10;

// kFilters x (kFftSize/2 + 1) triangular weights on the power spectrum.
const Eigen::MatrixXd& filterbank();
// Centre frequency (Hz) of each filter.
Eigen::VectorXd filter_centres();
Eigen::VectorXd hamming_window();
// Mel filter energies of one 160-sample frame (windowed, zero-padded FFT).
Eigen::VectorXd frame_energies(const Eigen::Ref<const Eigen::VectorXd>& frame);
}  // namespace mfcc

Eigen::Index frame_count(Eigen::Index samples, Eigen::Index window, Eigen::Index hop);

// 12 x frames track at 100 Hz.
FeatureTrack compute_mfcc(const AudioClip& clip);

// Average magnitude difference of frame [start, start+length) against lag.
// Pairs that run past the end of the signal are dropped from the mean.
double amdf(const Eigen::Ref<const Eigen::VectorXd>& signal, Eigen::Index start, Eigen::Index length,
            Eigen::Index lag);

// Periodicity / aperiodicity at 100 Hz from the AMDF over 2.5-20 ms lags.
FeatureTrack estimate_glottal_tracks(const AudioClip& clip);

inline const std::array<std::string, 6> kTvChannelNames = {"LA", "LP", "TBCL", "TBCD", "TTCL", "TTCD"};

FeatureTrack load_tv_track(const std::string& path);
FeatureTrack canonicalize_tv_track(FeatureTrack track);
FeatureTrack assemble_tv8(const FeatureTrack& tv, const FeatureTrack& glottal);

struct Segment {
  std::string recording_id;
  double start_time = 0.0;
  double end_time = 0.0;
  FeatureTrack track;
  Label label = Label::NonDepressed;
};

namespace segmentation {
inline constexpr double kMinSeconds = 10.0;
inline constexpr double kWindowSeconds = 20.0;
inline constexpr double kShiftSeconds = 5.0;
}  // namespace segmentation

// Frame ranges [begin, end) that segment_track would emit for a track.
std::vector<std::pair<Eigen::Index, Eigen::Index>> segment_bounds(Eigen::Index frames, double frame_rate);
std::vector<Segment> segment_track(const FeatureTrack& track, Label label,
                                   const std::string& recording_id = {});

FeatureTrack normalize_channels(const FeatureTrack& track);

}  // namespace acfnet

#endif  // ACFNET_DSP_HPP
