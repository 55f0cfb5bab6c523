#ifndef ACFNET_NN_LOSS_HPP
#define ACFNET_NN_LOSS_HPP

#include <algorithm>
#include <cmath>
#include <span>

#include "acfnet/nn/tensor.hpp"

namespace acfnet::nn {

inline constexpr double kProbabilityClamp = 1e-7;

// -w (y ln p + (1 - y) ln(1 - p)), p clamped to [1e-7, 1 - 1e-7].
inline double weighted_bce(double p, double y, double w) {
  const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -w * (y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

template <typename Scalar>
struct BatchLoss {
  double value = 0.0;
  Tensor<Scalar> grad;  // d value / d probability, shape of the predictions
};

// Batch loss is sum_i w_i * bce_i / B, so it scales linearly with the weights.
template <typename Scalar>
BatchLoss<Scalar> weighted_bce_batch(const Tensor<Scalar>& probabilities, std::span<const double> targets,
                                     std::span<const double> weights) {
  const Index n = probabilities.size();
  if (static_cast<Index>(targets.size()) != n || static_cast<Index>(weights.size()) != n) {
    throw ShapeError("loss: predictions, targets and weights differ in length");
  }
  BatchLoss<Scalar> out{0.0, Tensor<Scalar>(probabilities.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Index i = 0; i < n; ++i) {
    const double p = probabilities[i];
    const double y = targets[static_cast<std::size_t>(i)];
    const double w = weights[static_cast<std::size_t>(i)];
    out.value += weighted_bce(p, y, w) * inv_n;
    if (p > kProbabilityClamp && p < 1.0 - kProbabilityClamp) {
      out.grad[i] = static_cast<Scalar>(-w * (y / p - (1.0 - y) / (1.0 - p)) * inv_n);
    }
  }
  return out;
}

}  // namespace acfnet::nn

#endif  // ACFNET_NN_LOSS_HPP
