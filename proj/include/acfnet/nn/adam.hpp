#ifndef ACFNET_NN_ADAM_HPP
#define ACFNET_NN_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "acfnet/nn/layers.hpp"

namespace acfnet::nn {

struct AdamOptions {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update of `value` in place. `step` is 1-based.
template <typename DerivedX, typename DerivedG, typename DerivedM, typename DerivedV>
void adam_update(Eigen::MatrixBase<DerivedX>& value, const Eigen::MatrixBase<DerivedG>& grad,
                 Eigen::MatrixBase<DerivedM>& m, Eigen::MatrixBase<DerivedV>& v, std::int64_t step,
                 const AdamOptions& o) {
  using Scalar = typename DerivedX::Scalar;
  const auto b1 = static_cast<Scalar>(o.beta1);
  const auto b2 = static_cast<Scalar>(o.beta2);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(o.beta1, static_cast<double>(step)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(o.beta2, static_cast<double>(step)));
  const auto lr = static_cast<Scalar>(o.learning_rate);
  const auto eps = static_cast<Scalar>(o.epsilon);
  value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamOptions options) : options_(options) {}

  // Applies one update to every parameter using its accumulated gradient.
  // A non-finite gradient aborts before any parameter is touched.
  void step(std::span<Parameter<Scalar>* const> params) {
    for (const auto* p : params) {
      if (!p->grad.values().allFinite()) {
        throw TrainingError("non-finite gradient in parameter '" + p->name + "' at optimizer step " +
                            std::to_string(step_ + 1));
      }
    }
    if (first_.empty()) {
      for (const auto* p : params) {
        first_.emplace_back(p->value.shape());
        second_.emplace_back(p->value.shape());
      }
    }
    if (first_.size() != params.size()) throw ShapeError("optimizer state does not match parameter list");
    ++step_;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& values = params[k]->value.values();
      adam_update(values, params[k]->grad.values(), first_[k].values(), second_[k].values(), step_, options_);
    }
  }

  std::int64_t steps() const { return step_; }
  void set_steps(std::int64_t s) { step_ = s; }
  std::vector<Tensor<Scalar>>& first_moments() { return first_; }
  std::vector<Tensor<Scalar>>& second_moments() { return second_; }
  const std::vector<Tensor<Scalar>>& first_moments() const { return first_; }
  const std::vector<Tensor<Scalar>>& second_moments() const { return second_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::vector<Tensor<Scalar>> first_, second_;
};

}  // namespace acfnet::nn

#endif  // ACFNET_NN_ADAM_HPP
