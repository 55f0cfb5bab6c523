#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "acfnet/acf.hpp"
#include "acfnet/dsp.hpp"

using namespace acfnet;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

FeatureTrack random_track(int m, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  FeatureTrack t;
  t.data.resize(m, n);
  for (Eigen::Index k = 0; k < t.data.size(); ++k) t.data.data()[k] = g(rng);
  t.frame_rate = 100;
  for (int c = 0; c < m; ++c) t.channel_names.push_back("c" + std::to_string(c));
  return normalize_channels(t);
}

ChannelDelayCorrelationMatrix wrap(Eigen::MatrixXd m) {
  ChannelDelayCorrelationMatrix a;
  a.data = std::move(m);
  a.channels = 1;
  a.max_delay = static_cast<int>(a.data.cols()) - 1;
  return a;
}

}  // namespace

TEST_CASE("delayed correlation examples") {
  CHECK(delayed_correlation(vec({1, 2, 3, 4}), vec({1, 0, 1, 0}), 1) == doctest::Approx(2.0 / 3.0));
  CHECK(delayed_correlation(vec({1, 2, 3, 4}), vec({0, 0, 0, 0}), 2) == 0.0);
  CHECK(delayed_correlation(vec({1, 1, 1, 1}), vec({1, 1, 1, 1}), 0) == 1.0);
  CHECK_THROWS_AS(delayed_correlation(vec({1, 2}), vec({1, 2}), 2), DelayRangeError);
  CHECK_THROWS_AS(delayed_correlation(vec({1, 2}), vec({1, 2, 3}), 0), ShapeError);
}

TEST_CASE("correlation vector") {
  const Eigen::VectorXd r = correlation_vector(vec({1, 0, 1, 0}), vec({0, 1, 0, 1}), 2);
  REQUIRE(r.size() == 3);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == doctest::Approx(2.0 / 3.0));
  CHECK(r[2] == 0.0);
  CHECK(correlation_vector(vec({1, 2, 3}), vec({3, 2, 1}), 0)[0] == doctest::Approx(10.0 / 3.0));

  Eigen::VectorXd slow(400);
  for (Eigen::Index t = 0; t < 400; ++t) slow[t] = std::sin(2 * std::numbers::pi * static_cast<double>(t) / 100.0);
  const Eigen::VectorXd auto_r = correlation_vector(slow, slow, 40);
  for (Eigen::Index d = 0; d <= 40; ++d) {
    // edge terms of a partial period stay small
    CHECK(std::abs(auto_r[d] - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(d) / 100.0)) < 0.03);
  }
}

TEST_CASE("acf shapes") {
  std::mt19937_64 rng(1);
  CHECK(build_acf(random_track(8, 2000, rng), 50).data.rows() == 64);
  CHECK(build_acf(random_track(8, 2000, rng), 50).data.cols() == 51);
  const auto mf = build_acf(random_track(12, 1000, rng), 50);
  CHECK(mf.data.rows() == 144);
  CHECK(mf.data.cols() == 51);
  CHECK(mf.row_order()[13] == std::pair<int, int>(1, 1));
  CHECK_THROWS_AS(build_acf(random_track(2, 50, rng), 50), TooShortError);
}

TEST_CASE("acf matches the triple loop") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 4);
    const int d = static_cast<int>(rng() % 21);
    const int n = d + 1 + static_cast<int>(rng() % (200 - d));
    const auto t = random_track(m, n, rng);
    const Eigen::MatrixXd want = oracle::acf(t.data, d);
    const Eigen::MatrixXd got = build_acf(t, d).data;
    const double scale = std::max(1.0, want.cwiseAbs().maxCoeff());
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12 * scale);
  }
}

TEST_CASE("lag-0 symmetry") {
  std::mt19937_64 rng(3);
  const auto acf = build_acf(random_track(5, 300, rng), 10);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(acf.data(i * 5 + j, 0) == acf.data(j * 5 + i, 0));
}

TEST_CASE("white noise autocorrelation") {
  std::mt19937_64 rng(11);
  const auto acf = build_acf(random_track(1, 10000, rng), 20);
  CHECK(acf.data(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(acf.data.row(0).tail(20).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("correlation peak follows a shift") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 400);
  for (int t = 10; t < 380; t += 37) x(0, t) = 1.0;
  for (int s : {0, 3, 9, 17}) {
    x.row(1).setZero();
    for (int t = 0; t + s < 400; ++t) x(1, t + s) = x(0, t);
    const Eigen::VectorXd r = correlation_vector(x.row(0).transpose(), x.row(1).transpose(), 30);
    Eigen::Index peak;
    r.maxCoeff(&peak);
    CHECK(peak == s);
  }
}

TEST_CASE("norm stats") {
  Eigen::MatrixXd a(2, 3);
  a << 1, -2, 0, 3, 0.5, -4;
  std::vector<ChannelDelayCorrelationMatrix> one{wrap(a)};
  auto s = fit_norm_stats(one);
  CHECK(s.mean == a);
  CHECK(s.std.cwiseAbs().maxCoeff() == 0.0);

  std::vector<ChannelDelayCorrelationMatrix> pair{wrap(a), wrap(-a)};
  s = fit_norm_stats(pair);
  CHECK(s.mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.std == a.cwiseAbs());
  const auto z = apply_norm(wrap(a), s);
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double want = a.data()[k] > 0 ? 1.0 : a.data()[k] < 0 ? -1.0 : 0.0;
    CHECK(z.data.data()[k] == want);
  }
  CHECK(apply_norm(wrap(s.mean), s).data.cwiseAbs().maxCoeff() == 0.0);

  std::vector<ChannelDelayCorrelationMatrix> mixed{wrap(a), wrap(Eigen::MatrixXd::Zero(3, 3))};
  CHECK_THROWS_AS(fit_norm_stats(mixed), ShapeError);
  CHECK_THROWS_AS(apply_norm(wrap(Eigen::MatrixXd::Zero(3, 3)), s), ShapeError);
}

TEST_CASE("normalized fitting set has zero mean and unit std") {
  std::mt19937_64 rng(5);
  std::vector<ChannelDelayCorrelationMatrix> acfs;
  for (int k = 0; k < 30; ++k) acfs.push_back(build_acf(random_track(3, 150, rng), 12));
  const auto s = fit_norm_stats(acfs);
  std::vector<ChannelDelayCorrelationMatrix> z;
  for (const auto& a : acfs) z.push_back(apply_norm(a, s));
  const auto zs = fit_norm_stats(z);
  for (Eigen::Index k = 0; k < zs.mean.size(); ++k) {
    if (s.std.data()[k] < kDegenerateStd) continue;
    CHECK(std::abs(zs.mean.data()[k]) < 1e-5);
    CHECK(std::abs(zs.std.data()[k] - 1.0) < 1e-4);
  }
}

TEST_CASE("acf cache round trip") {
  std::mt19937_64 rng(9);
  const auto acf = build_acf(random_track(3, 200, rng), 20);
  const auto t = acf_to_track(acf);
  CHECK(t.frame_rate == 0.0);
  CHECK(t.channel_names[1] == "r(1,2)");
  const auto back = acf_from_track(decode_acft(encode_acft(t)));
  CHECK(back.channels == 3);
  CHECK(back.max_delay == 20);
  CHECK((back.data - acf.data).cwiseAbs().maxCoeff() < 1e-6);
}
