#include "acfnet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <set>

#include <unsupported/Eigen/FFT>

#include "acfnet/io_util.hpp"

namespace acfnet {

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes.data(), bytes.size());
  char id[4];
  try {
    r.get_bytes(id, 4);
    if (std::string_view(id, 4) != "RIFF") throw FormatError("not a RIFF file");
    r.get<std::uint32_t>();
    r.get_bytes(id, 4);
    if (std::string_view(id, 4) != "WAVE") throw FormatError("not a WAVE file");

    bool have_fmt = false;
    std::uint32_t rate = 0;
    while (r.remaining() > 0) {
      r.get_bytes(id, 4);
      const auto size = r.get<std::uint32_t>();
      const std::string_view chunk(id, 4);
      if (chunk == "fmt ") {
        if (size < 16) throw FormatError("fmt chunk too small");
        const auto format = r.get<std::uint16_t>();
        const auto channels = r.get<std::uint16_t>();
        rate = r.get<std::uint32_t>();
        r.get<std::uint32_t>();  // byte rate
        r.get<std::uint16_t>();  // block align
        const auto bits = r.get<std::uint16_t>();
        if (format != 1) throw FormatError("only PCM WAV is supported (format " + std::to_string(format) + ")");
        if (channels != 1) throw FormatError("only mono WAV is supported");
        if (bits != 16) throw FormatError("only 16-bit PCM is supported");
        if (rate == 0) throw FormatError("sample rate must be positive");
        std::vector<std::uint8_t> skip(size - 16 + (size & 1u));
        if (!skip.empty()) r.get_bytes(skip.data(), skip.size());
        have_fmt = true;
      } else if (chunk == "data") {
        if (!have_fmt) throw FormatError("data chunk before fmt chunk");
        if (size > r.remaining()) throw FormatError("truncated data chunk");
        if (size % 2 != 0) throw FormatError("odd byte count in 16-bit data chunk");
        const std::size_t n = size / 2;
        if (n == 0) throw FormatError("empty data chunk");
        std::vector<std::int16_t> pcm(n);
        r.get_bytes(pcm.data(), size);
        AudioClip clip;
        clip.sample_rate = static_cast<int>(rate);
        clip.samples.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) clip.samples[static_cast<Eigen::Index>(i)] = pcm[i] / 32768.0;
        return clip;
      } else {
        std::vector<std::uint8_t> skip(size + (size & 1u));
        r.get_bytes(skip.data(), skip.size());
      }
    }
  } catch (const FormatError& e) {
    throw FormatError(std::string("WAV: ") + e.what());
  }
  throw FormatError("WAV: no data chunk");
}

AudioClip read_wav(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return decode_wav(bytes);
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  ByteWriter w;
  w.put_bytes("RIFF", 4);
  w.put<std::uint32_t>(36 + 2 * n);
  w.put_bytes("WAVE", 4);
  w.put_bytes("fmt ", 4);
  w.put<std::uint32_t>(16);
  w.put<std::uint16_t>(1);
  w.put<std::uint16_t>(1);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(clip.sample_rate));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(clip.sample_rate) * 2);
  w.put<std::uint16_t>(2);
  w.put<std::uint16_t>(16);
  w.put_bytes("data", 4);
  w.put<std::uint32_t>(2 * n);
  for (Eigen::Index i = 0; i < clip.samples.size(); ++i) {
    const double v = std::clamp(std::round(clip.samples[i] * 32768.0), -32768.0, 32767.0);
    w.put<std::int16_t>(static_cast<std::int16_t>(v));
  }
  return std::move(w.bytes());
}

Eigen::Index frame_count(Eigen::Index samples, Eigen::Index window, Eigen::Index hop) {
  if (samples < window) return 0;
  return (samples - window) / hop + 1;
}

namespace mfcc {

namespace {
double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::VectorXd edge_frequencies() {
  const double top = hz_to_mel(kSampleRate / 2.0);
  Eigen::VectorXd edges(kFilters + 2);
  for (int i = 0; i < kFilters + 2; ++i) edges[i] = mel_to_hz(top * i / (kFilters + 1));
  return edges;
}

Eigen::MatrixXd make_filterbank() {
  const Eigen::VectorXd edges = edge_frequencies();
  const int bins = kFftSize / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(kFilters, bins);
  for (int m = 0; m < kFilters; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / kFftSize;
      if (f > lo && f <= centre) {
        fb(m, k) = (f - lo) / (centre - lo);
      } else if (f > centre && f < hi) {
        fb(m, k) = (hi - f) / (hi - centre);
      }
    }
  }
  return fb;
}

// Orthonormal DCT-II rows 1..kCoefficients.
Eigen::MatrixXd make_dct() {
  Eigen::MatrixXd dct(kCoefficients, kFilters);
  const double scale = std::sqrt(2.0 / kFilters);
  for (int n = 1; n <= kCoefficients; ++n) {
    for (int m = 0; m < kFilters; ++m) {
      dct(n - 1, m) = scale * std::cos(std::numbers::pi * n * (m + 0.5) / kFilters);
    }
  }
  return dct;
}
}  // namespace

const Eigen::MatrixXd& filterbank() {
  static const Eigen::MatrixXd fb = make_filterbank();
  return fb;
}

Eigen::VectorXd filter_centres() { return edge_frequencies().segment(1, kFilters); }

Eigen::VectorXd hamming_window() {
  Eigen::VectorXd w(kWindow);
  for (int n = 0; n < kWindow; ++n) {
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (kWindow - 1));
  }
  return w;
}

Eigen::VectorXd frame_energies(const Eigen::Ref<const Eigen::VectorXd>& frame) {
  if (frame.size() != kWindow) throw ShapeError("MFCC frame must have 160 samples");
  static const Eigen::VectorXd window = hamming_window();
  std::vector<double> padded(kFftSize, 0.0);
  for (int n = 0; n < kWindow; ++n) padded[n] = frame[n] * window[n];
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, padded);
  Eigen::VectorXd power(kFftSize / 2 + 1);
  for (int k = 0; k <= kFftSize / 2; ++k) power[k] = std::norm(spectrum[static_cast<std::size_t>(k)]);
  return filterbank() * power;
}

}  // namespace mfcc

namespace {
void require_8k(const AudioClip& clip) {
  if (clip.sample_rate != mfcc::kSampleRate) {
    throw FormatError("expected 8000 Hz audio, got " + std::to_string(clip.sample_rate) + " Hz");
  }
  if (clip.samples.size() < mfcc::kWindow) {
    throw TooShortError("clip shorter than one 20 ms analysis window");
  }
}
}  // namespace

FeatureTrack compute_mfcc(const AudioClip& clip) {
  require_8k(clip);
  static const Eigen::MatrixXd dct = [] {
    return Eigen::MatrixXd(mfcc::make_dct());
  }();
  const Eigen::Index frames = frame_count(clip.samples.size(), mfcc::kWindow, mfcc::kHop);
  FeatureTrack out;
  out.frame_rate = static_cast<double>(mfcc::kSampleRate) / mfcc::kHop;
  out.data.resize(mfcc::kCoefficients, frames);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::VectorXd energies =
        mfcc::frame_energies(clip.samples.segment(f * mfcc::kHop, mfcc::kWindow));
    const Eigen::VectorXd log_e = energies.array().max(mfcc::kLogFloor).log();
    out.data.col(f) = dct * log_e;
  }
  for (int c = 1; c <= mfcc::kCoefficients; ++c) out.channel_names.push_back("mfcc" + std::to_string(c));
  return out;
}

double amdf(const Eigen::Ref<const Eigen::VectorXd>& signal, Eigen::Index start, Eigen::Index length,
            Eigen::Index lag) {
  const Eigen::Index pairs = std::min(length, signal.size() - start - lag);
  if (pairs <= 0) return std::numeric_limits<double>::quiet_NaN();
  return (signal.segment(start, pairs) - signal.segment(start + lag, pairs)).cwiseAbs().mean();
}

FeatureTrack estimate_glottal_tracks(const AudioClip& clip) {
  require_8k(clip);
  constexpr Eigen::Index kMinLag = 20;   // 2.5 ms
  constexpr Eigen::Index kMaxLag = 160;  // 20 ms
  const Eigen::Index frames = frame_count(clip.samples.size(), mfcc::kWindow, mfcc::kHop);
  FeatureTrack out;
  out.frame_rate = static_cast<double>(mfcc::kSampleRate) / mfcc::kHop;
  out.channel_names = {"periodicity", "aperiodicity"};
  out.data.resize(2, frames);
  for (Eigen::Index f = 0; f < frames; ++f) {
    const Eigen::Index start = f * mfcc::kHop;
    double lo = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index lag = kMinLag; lag <= kMaxLag; ++lag) {
      const double v = amdf(clip.samples, start, mfcc::kWindow, lag);
      if (std::isnan(v)) break;
      lo = std::min(lo, v);
      sum += v;
      ++count;
    }
    double periodicity = 0.0;
    if (count > 0 && sum > 0.0) {
      periodicity = std::clamp(1.0 - lo / (sum / count), 0.0, 1.0);
    }
    out.data(0, f) = periodicity;
    out.data(1, f) = 1.0 - periodicity;
  }
  return out;
}

FeatureTrack canonicalize_tv_track(FeatureTrack track) {
  if (track.channels() != 6) {
    throw FormatError("TV track must have 6 channels, got " + std::to_string(track.channels()));
  }
  const std::set<std::string> have(track.channel_names.begin(), track.channel_names.end());
  const std::set<std::string> want(kTvChannelNames.begin(), kTvChannelNames.end());
  if (have == want) {
    Eigen::MatrixXd reordered(6, track.frames());
    for (int c = 0; c < 6; ++c) {
      const auto it = std::find(track.channel_names.begin(), track.channel_names.end(), kTvChannelNames[c]);
      reordered.row(c) = track.data.row(it - track.channel_names.begin());
    }
    track.data = std::move(reordered);
  }
  track.channel_names.assign(kTvChannelNames.begin(), kTvChannelNames.end());
  return track;
}

FeatureTrack load_tv_track(const std::string& path) {
  return canonicalize_tv_track(load_feature_track(path));
}

FeatureTrack assemble_tv8(const FeatureTrack& tv, const FeatureTrack& glottal) {
  if (tv.channels() != 6 || glottal.channels() != 2) {
    throw ShapeError("assemble_tv8 expects 6 TV channels and 2 glottal channels");
  }
  if (std::abs(tv.frame_rate - glottal.frame_rate) > 1e-9 * std::max(1.0, tv.frame_rate)) {
    throw AlignmentError("frame rate mismatch: TV " + std::to_string(tv.frame_rate) + " Hz vs glottal " +
                         std::to_string(glottal.frame_rate) + " Hz");
  }
  if (std::abs(tv.frames() - glottal.frames()) > 2) {
    throw AlignmentError("TV and glottal tracks differ by more than 2 frames");
  }
  const Eigen::Index n = std::min(tv.frames(), glottal.frames());
  FeatureTrack out;
  out.frame_rate = tv.frame_rate;
  out.data.resize(8, n);
  out.data.topRows(6) = tv.data.leftCols(n);
  out.data.bottomRows(2) = glottal.data.leftCols(n);
  out.channel_names = tv.channel_names;
  out.channel_names.insert(out.channel_names.end(), glottal.channel_names.begin(), glottal.channel_names.end());
  return out;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> segment_bounds(Eigen::Index frames, double frame_rate) {
  if (!(frame_rate > 0.0)) throw ConfigError("segmentation needs a positive frame rate");
  const auto min_frames = static_cast<Eigen::Index>(std::llround(segmentation::kMinSeconds * frame_rate));
  const auto window = static_cast<Eigen::Index>(std::llround(segmentation::kWindowSeconds * frame_rate));
  const auto shift = static_cast<Eigen::Index>(std::llround(segmentation::kShiftSeconds * frame_rate));
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  if (frames < min_frames) return out;
  if (frames <= window) {
    out.emplace_back(0, frames);
    return out;
  }
  for (Eigen::Index begin = 0; begin + window <= frames; begin += shift) out.emplace_back(begin, begin + window);
  return out;
}

std::vector<Segment> segment_track(const FeatureTrack& track, Label label, const std::string& recording_id) {
  if (track.frames() < 1) throw ShapeError("cannot segment an empty track");
  std::vector<Segment> out;
  for (const auto& [begin, end] : segment_bounds(track.frames(), track.frame_rate)) {
    Segment s;
    s.recording_id = recording_id;
    s.start_time = static_cast<double>(begin) / track.frame_rate;
    s.end_time = static_cast<double>(end) / track.frame_rate;
    s.track.frame_rate = track.frame_rate;
    s.track.channel_names = track.channel_names;
    s.track.data = track.data.middleCols(begin, end - begin);
    s.label = label;
    out.push_back(std::move(s));
  }
  return out;
}

FeatureTrack normalize_channels(const FeatureTrack& track) {
  FeatureTrack out = track;
  const auto n = static_cast<double>(track.frames());
  for (Eigen::Index c = 0; c < track.channels(); ++c) {
    const double mean = track.data.row(c).mean();
    const double var = (track.data.row(c).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
      out.data.row(c).setZero();
    } else {
      out.data.row(c) = (track.data.row(c).array() - mean) / sd;
    }
  }
  return out;
}

}  // namespace acfnet
