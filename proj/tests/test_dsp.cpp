#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"

#include "acfnet/dsp.hpp"
#include "acfnet/io_util.hpp"

using namespace acfnet;

namespace {

AudioClip tone(double hz, double seconds, double amp = 0.5) {
  AudioClip c;
  c.samples.resize(static_cast<Eigen::Index>(seconds * 8000));
  for (Eigen::Index n = 0; n < c.samples.size(); ++n) c.samples[n] = amp * std::sin(2 * std::numbers::pi * hz * n / 8000.0);
  return c;
}

FeatureTrack track(int channels, int frames, double rate, std::vector<std::string> names = {}) {
  FeatureTrack t;
  t.data = Eigen::MatrixXd::Random(channels, frames);
  t.frame_rate = rate;
  if (names.empty())
    for (int c = 0; c < channels; ++c) names.push_back("c" + std::to_string(c));
  t.channel_names = std::move(names);
  return t;
}

// Brute-force window enumeration at 0.1 s steps.
int brute_segments(double seconds) {
  if (seconds < 10.0) return 0;
  if (seconds <= 20.0) return 1;
  int n = 0;
  for (double start = 0.0; start + 20.0 <= seconds + 1e-9; start += 5.0) ++n;
  return n;
}

}  // namespace

TEST_CASE("wav decode") {
  AudioClip one_second;
  one_second.samples = Eigen::VectorXd::Zero(8000);
  const auto bytes = encode_wav(one_second);
  const auto back = decode_wav(bytes);
  CHECK(back.samples.size() == 8000);
  CHECK(back.sample_rate == 8000);
  CHECK(back.samples.cwiseAbs().maxCoeff() == 0.0);

  // Largest positive code.
  auto loud = bytes;
  loud[44] = 0xff;
  loud[45] = 0x7f;
  CHECK(decode_wav(loud).samples[0] == 32767.0 / 32768.0);
  loud[44] = 0x00;
  loud[45] = 0x80;
  CHECK(decode_wav(loud).samples[0] == -1.0);
}

TEST_CASE("wav rejects what it cannot read") {
  AudioClip c;
  c.samples = Eigen::VectorXd::Zero(100);
  auto bytes = encode_wav(c);

  auto truncated = bytes;
  truncated.resize(60);
  CHECK_THROWS_AS(decode_wav(truncated), FormatError);

  auto stereo = bytes;
  stereo[22] = 2;
  CHECK_THROWS_AS(decode_wav(stereo), FormatError);

  auto ieee = bytes;
  ieee[20] = 3;
  CHECK_THROWS_AS(decode_wav(ieee), FormatError);

  auto not_riff = bytes;
  not_riff[0] = 'X';
  CHECK_THROWS_AS(decode_wav(not_riff), FormatError);
}

TEST_CASE("mfcc frame count") {
  CHECK(compute_mfcc(tone(200, 1.0)).frames() == 99);
  for (Eigen::Index len : {160, 161, 239, 240, 241, 8000, 12345}) {
    AudioClip c;
    c.samples = Eigen::VectorXd::Random(len) * 0.1;
    const auto t = compute_mfcc(c);
    CHECK(t.frames() == (len - 160) / 80 + 1);
    CHECK(t.channels() == 12);
    CHECK(t.frame_rate == 100.0);
  }
  AudioClip short_clip;
  short_clip.samples = Eigen::VectorXd::Zero(159);
  CHECK_THROWS_AS(compute_mfcc(short_clip), TooShortError);
  AudioClip wrong_rate = tone(100, 1.0);
  wrong_rate.sample_rate = 16000;
  CHECK_THROWS_AS(compute_mfcc(wrong_rate), FormatError);
}

TEST_CASE("mfcc of silence is constant") {
  AudioClip c;
  c.samples = Eigen::VectorXd::Zero(4000);
  const auto t = compute_mfcc(c);
  for (Eigen::Index ch = 0; ch < 12; ++ch) {
    CHECK(t.data.row(ch).maxCoeff() == t.data.row(ch).minCoeff());
  }
}

TEST_CASE("1 kHz tone peaks in the filter around 1 kHz") {
  const AudioClip c = tone(1000, 0.5);
  const Eigen::VectorXd frame = c.samples.segment(800, 160);
  const Eigen::VectorXd energies = mfcc::frame_energies(frame);

  // Oracle: direct DFT of the windowed, zero-padded frame.
  const Eigen::VectorXd w = mfcc::hamming_window();
  Eigen::VectorXd power(129);
  for (int k = 0; k <= 128; ++k) {
    std::complex<double> acc = 0.0;
    for (int n = 0; n < 160; ++n) acc += frame[n] * w[n] * std::polar(1.0, -2 * std::numbers::pi * k * n / 256.0);
    power[k] = std::norm(acc);
  }
  const Eigen::VectorXd oracle = mfcc::filterbank() * power;
  CHECK((energies - oracle).norm() <= 1e-9 * oracle.norm());

  Eigen::Index best;
  energies.maxCoeff(&best);
  const Eigen::VectorXd centres = mfcc::filter_centres();
  Eigen::Index nearest;
  (centres.array() - 1000.0).abs().minCoeff(&nearest);
  CHECK(std::abs(best - nearest) <= 1);
  // The winning filter's support contains 1 kHz.
  const double lo = best == 0 ? 0.0 : centres[best - 1];
  const double hi = best + 1 < centres.size() ? centres[best + 1] : 4000.0;
  CHECK(lo < 1000.0);
  CHECK(hi > 1000.0);
}

TEST_CASE("filterbank shape") {
  const auto& fb = mfcc::filterbank();
  CHECK(fb.rows() == 26);
  CHECK(fb.cols() == 129);
  CHECK(fb.minCoeff() >= 0.0);
  CHECK(fb.maxCoeff() <= 1.0);
  const Eigen::VectorXd centres = mfcc::filter_centres();
  for (Eigen::Index i = 1; i < centres.size(); ++i) CHECK(centres[i] > centres[i - 1]);
  CHECK(centres[25] < 4000.0);
}

TEST_CASE("glottal periodicity") {
  AudioClip saw;
  saw.samples.resize(8000);
  for (Eigen::Index n = 0; n < 8000; ++n) saw.samples[n] = 0.8 * (static_cast<double>(n % 80) / 80.0 - 0.5);
  const auto g = estimate_glottal_tracks(saw);
  CHECK(g.channels() == 2);
  CHECK(g.frames() == 99);
  for (Eigen::Index f = 5; f < g.frames() - 5; ++f) CHECK(g.data(0, f) >= 0.9);

  AudioClip noise;
  noise.samples.resize(8000);
  std::mt19937 rng(1);
  std::normal_distribution<double> gauss(0.0, 0.2);
  for (Eigen::Index n = 0; n < 8000; ++n) noise.samples[n] = gauss(rng);
  const auto gn = estimate_glottal_tracks(noise);
  CHECK(gn.data.row(0).mean() < 0.5);
  CHECK(gn.data.row(0).mean() < g.data.row(0).mean());

  for (const auto* t : {&g, &gn}) {
    CHECK(t->data.minCoeff() >= 0.0);
    CHECK(t->data.maxCoeff() <= 1.0);
    for (Eigen::Index f = 0; f < t->frames(); ++f) CHECK(t->data(0, f) + t->data(1, f) == 1.0);
  }
}

TEST_CASE("amdf oracle") {
  Eigen::VectorXd x(10);
  x << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9;
  CHECK(amdf(x, 0, 4, 2) == 2.0);
  CHECK(amdf(x, 6, 4, 2) == 2.0);  // only two pairs remain
  CHECK(std::isnan(amdf(x, 8, 4, 2)));
}

TEST_CASE("tv tracks") {
  const auto path = (std::filesystem::temp_directory_path() / "acfnet_tv_test.acft").string();
  FeatureTrack t = track(6, 500, 100.0, {"TTCD", "LA", "LP", "TBCL", "TBCD", "TTCL"});
  t.data = t.data.cast<float>().cast<double>();
  save_feature_track(path, t);
  const FeatureTrack raw = load_feature_track(path);
  CHECK(raw.data == t.data);
  CHECK(raw.duration() == 5.0);
  const FeatureTrack tv = load_tv_track(path);
  CHECK(tv.channel_names[0] == "LA");
  CHECK(tv.data.row(0) == t.data.row(1));
  CHECK(tv.data.row(5) == t.data.row(0));

  save_feature_track(path, track(5, 100, 100.0));
  CHECK_THROWS_AS(load_tv_track(path), FormatError);
  auto bytes = read_file_bytes(path);
  bytes[0] = 'Z';
  CHECK_THROWS_AS(decode_acft(bytes), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("assemble tv8") {
  const auto tv = canonicalize_tv_track(track(6, 100, 100.0));
  const auto a = assemble_tv8(tv, track(2, 100, 100.0, {"periodicity", "aperiodicity"}));
  CHECK(a.channels() == 8);
  CHECK(a.frames() == 100);
  CHECK(a.channel_names[6] == "periodicity");
  const auto b = assemble_tv8(canonicalize_tv_track(track(6, 101, 100.0)), track(2, 100, 100.0));
  CHECK(b.frames() == 100);
  CHECK_THROWS_AS(assemble_tv8(tv, track(2, 100, 50.0)), AlignmentError);
  CHECK_THROWS_AS(assemble_tv8(tv, track(2, 97, 100.0)), AlignmentError);
}

TEST_CASE("segmentation examples") {
  auto starts = [](double seconds) {
    std::vector<double> out;
    for (const auto& s : segment_track(track(2, static_cast<int>(seconds * 100), 100.0), Label::Depressed))
      out.push_back(s.start_time);
    return out;
  };
  CHECK(starts(45) == std::vector<double>{0, 5, 10, 15, 20, 25});
  const auto fifteen = segment_track(track(2, 1500, 100.0), Label::NonDepressed, "r");
  REQUIRE(fifteen.size() == 1);
  CHECK(fifteen[0].end_time == 15.0);
  CHECK(fifteen[0].track.frames() == 1500);
  CHECK(fifteen[0].recording_id == "r");
  CHECK(starts(8).empty());
}

TEST_CASE("segment count over 0-300 s") {
  for (int tenths = 0; tenths <= 3000; ++tenths) {
    const double seconds = tenths / 10.0;
    const auto bounds = segment_bounds(tenths * 10, 100.0);
    CHECK(static_cast<int>(bounds.size()) == brute_segments(seconds));
    for (const auto& [b, e] : bounds) {
      CHECK(e - b >= 1000);
      CHECK(e - b <= 2000);
    }
  }
}

TEST_CASE("channel normalization") {
  FeatureTrack t;
  t.data.resize(2, 3);
  t.data << 1, 2, 3, 5, 5, 5;
  t.frame_rate = 100;
  t.channel_names = {"a", "b"};
  const auto n = normalize_channels(t);
  CHECK(n.data(0, 0) == doctest::Approx(-std::sqrt(1.5)).epsilon(1e-12));
  CHECK(n.data(0, 1) == doctest::Approx(0.0));
  CHECK(n.data(0, 2) == doctest::Approx(std::sqrt(1.5)).epsilon(1e-12));
  CHECK(n.data.row(1).cwiseAbs().maxCoeff() == 0.0);

  const auto r = normalize_channels(track(4, 300, 100.0));
  for (Eigen::Index c = 0; c < 4; ++c) {
    const double mean = r.data.row(c).mean();
    const double sd = std::sqrt((r.data.row(c).array() - mean).square().mean());
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(sd - 1.0) < 1e-6);
  }
  const auto twice = normalize_channels(r);
  CHECK((twice.data - r.data).cwiseAbs().maxCoeff() < 1e-6);
}
