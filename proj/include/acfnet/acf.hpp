#ifndef ACFNET_ACF_HPP
#define ACFNET_ACF_HPP

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "acfnet/core.hpp"
#include "acfnet/feature_track.hpp"

namespace acfnet {

// Mean lagged product of x_i[t] and x_j[t + d] over the N - d overlapping frames.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar delayed_correlation(const Eigen::MatrixBase<DerivedA>& x_i,
                                              const Eigen::MatrixBase<DerivedB>& x_j, Eigen::Index d) {
  const Eigen::Index n = x_i.size();
  if (x_j.size() != n) throw ShapeError("delayed_correlation: channel lengths differ");
  if (d < 0 || d >= n) {
    throw DelayRangeError("delay " + std::to_string(d) + " outside [0, " + std::to_string(n) + ")");
  }
  const Eigen::Index overlap = n - d;
  return x_i.head(overlap).dot(x_j.segment(d, overlap)) / static_cast<typename DerivedA::Scalar>(overlap);
}

template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, 1> correlation_vector(
    const Eigen::MatrixBase<DerivedA>& x_i, const Eigen::MatrixBase<DerivedB>& x_j, Eigen::Index max_delay) {
  Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, 1> r(max_delay + 1);
  for (Eigen::Index d = 0; d <= max_delay; ++d) r[d] = delayed_correlation(x_i, x_j, d);
  return r;
}

// Stacks all ordered channel pairs (i outer, j inner) into M^2 rows of D + 1
// lags. Each lag is one channels x channels product of shifted views.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> correlation_matrix(
    const Eigen::MatrixBase<Derived>& x, Eigen::Index max_delay) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index m = x.rows();
  const Eigen::Index n = x.cols();
  if (max_delay < 0 || n <= max_delay) {
    throw TooShortError("segment of " + std::to_string(n) + " frames is too short for max delay " +
                        std::to_string(max_delay));
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(m * m, max_delay + 1);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> lagged(m, m);
  for (Eigen::Index d = 0; d <= max_delay; ++d) {
    const Eigen::Index overlap = n - d;
    lagged.noalias() = x.leftCols(overlap) * x.middleCols(d, overlap).transpose();
    lagged /= static_cast<Scalar>(overlap);
    // GEMM blocking can round the two halves differently
    if (d == 0) lagged.template triangularView<Eigen::StrictlyLower>() = lagged.transpose();
    for (Eigen::Index i = 0; i < m; ++i) out.col(d).segment(i * m, m) = lagged.row(i).transpose();
  }
  return out;
}

struct ChannelDelayCorrelationMatrix {
  Eigen::MatrixXd data;  // M^2 x (D + 1)
  int channels = 0;
  int max_delay = 0;

  // Zero-based (i, j) for each row, row k = i * M + j.
  std::vector<std::pair<int, int>> row_order() const;
};

ChannelDelayCorrelationMatrix build_acf(const FeatureTrack& normalized, int max_delay);

// Cached in the ACFT container with frame_rate 0 and names "r(i,j)" (1-based).
FeatureTrack acf_to_track(const ChannelDelayCorrelationMatrix& acf);
ChannelDelayCorrelationMatrix acf_from_track(const FeatureTrack& track);

struct NormStats {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd std;
};

inline constexpr double kDegenerateStd = 1e-8;

NormStats fit_norm_stats(std::span<const ChannelDelayCorrelationMatrix> acfs);
ChannelDelayCorrelationMatrix apply_norm(const ChannelDelayCorrelationMatrix& acf, const NormStats& stats);

}  // namespace acfnet

#endif  // ACFNET_ACF_HPP
