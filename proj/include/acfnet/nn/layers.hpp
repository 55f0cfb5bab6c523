#ifndef ACFNET_NN_LAYERS_HPP
#define ACFNET_NN_LAYERS_HPP

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "acfnet/nn/conv.hpp"
#include "acfnet/nn/tensor.hpp"

namespace acfnet::nn {

using Rng = std::mt19937_64;

template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  double l2 = 0.0;  // penalty l2 * sum(value^2) added to the training loss
};

// Non-trainable state that still belongs in a checkpoint.
template <typename Scalar>
struct Buffer {
  std::string name;
  Tensor<Scalar> value;
};

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;
};

// Uniform(-sqrt(6 / fan_in), +sqrt(6 / fan_in)).
template <typename Scalar>
void he_uniform(Tensor<Scalar>& t, Index fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
class Conv2D {
 public:
  Conv2D() = default;
  Conv2D(std::string name, Index in_channels, Index filters, Conv2dOptions options)
      : options_(options) {
    weight_.name = name + ".kernel";
    weight_.value = Tensor<Scalar>({filters, in_channels, options.kernel_h, options.kernel_w});
    weight_.grad = Tensor<Scalar>(weight_.value.shape());
    bias_.name = name + ".bias";
    bias_.value = Tensor<Scalar>({filters});
    bias_.grad = Tensor<Scalar>({filters});
  }

  void initialize(Rng& rng) {
    he_uniform(weight_.value, weight_.value.dim(1) * options_.kernel_h * options_.kernel_w, rng);
    bias_.value.set_zero();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, const ForwardContext&) {
    input_shape_ = x.shape();
    return conv2d_forward(x, weight_.value, bias_.value, options_, &cols_);
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy) {
    auto g = conv2d_backward(input_shape_, weight_.value, cols_, dy, options_, need_input_grad_);
    weight_.grad.values() += g.weights.values();
    bias_.grad.values() += g.bias.values();
    return std::move(g.input);
  }

  Shape output_shape(const Shape& in) const {
    const auto g = conv_geometry(in, weight_.value.shape(), options_);
    return {in[0], weight_.value.dim(0), g.h.out, g.w.out};
  }

  void collect(std::vector<Parameter<Scalar>*>& out) { out.push_back(&weight_); out.push_back(&bias_); }
  const Conv2dOptions& options() const { return options_; }
  // First-layer convolutions can skip the input gradient during training.
  void set_need_input_grad(bool need) { need_input_grad_ = need; }

 private:
  Conv2dOptions options_;
  bool need_input_grad_ = true;
  Parameter<Scalar> weight_, bias_;
  Shape input_shape_;
  ColumnBuffer<Scalar> cols_;
};

// Normalizes each channel (axis 1) over every other axis.
template <typename Scalar>
class BatchNorm {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm() = default;
  BatchNorm(std::string name, Index channels) {
    gamma_ = {name + ".gamma", Tensor<Scalar>({channels}), Tensor<Scalar>({channels})};
    beta_ = {name + ".beta", Tensor<Scalar>({channels}), Tensor<Scalar>({channels})};
    gamma_.value.values().setOnes();
    running_mean_ = {name + ".running_mean", Tensor<Scalar>({channels})};
    running_var_ = {name + ".running_var", Tensor<Scalar>({channels})};
    running_var_.value.values().setOnes();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, const ForwardContext& ctx) {
    const Index B = x.dim(0), C = x.dim(1);
    const Index inner = x.size() / (B * C);
    const Index n = B * inner;
    if (C != gamma_.value.size()) throw ShapeError("batchnorm channel count mismatch");
    Tensor<Scalar> y(x.shape());
    x_hat_ = Tensor<Scalar>(x.shape());
    inv_std_.resize(C);
    batch_stats_ = ctx.training;
    for (Index c = 0; c < C; ++c) {
      double mean = 0.0, var = 0.0;
      if (ctx.training) {
        for (Index b = 0; b < B; ++b) {
          const Scalar* p = x.data() + (b * C + c) * inner;
          for (Index k = 0; k < inner; ++k) mean += p[k];
        }
        mean /= static_cast<double>(n);
        for (Index b = 0; b < B; ++b) {
          const Scalar* p = x.data() + (b * C + c) * inner;
          for (Index k = 0; k < inner; ++k) var += (p[k] - mean) * (p[k] - mean);
        }
        var /= static_cast<double>(n);
        const double unbiased = n > 1 ? var * n / (n - 1) : var;
        running_mean_.value[c] =
            static_cast<Scalar>((1.0 - kMomentum) * running_mean_.value[c] + kMomentum * mean);
        running_var_.value[c] =
            static_cast<Scalar>((1.0 - kMomentum) * running_var_.value[c] + kMomentum * unbiased);
      } else {
        mean = running_mean_.value[c];
        var = running_var_.value[c];
      }
      const Scalar inv = static_cast<Scalar>(1.0 / std::sqrt(var + kEpsilon));
      inv_std_[c] = inv;
      const Scalar m = static_cast<Scalar>(mean);
      for (Index b = 0; b < B; ++b) {
        const Index off = (b * C + c) * inner;
        for (Index k = 0; k < inner; ++k) {
          const Scalar xh = (x[off + k] - m) * inv;
          x_hat_[off + k] = xh;
          y[off + k] = gamma_.value[c] * xh + beta_.value[c];
        }
      }
    }
    return y;
  }

  // In train mode the batch statistics depend on the input; in eval mode they are constants.
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) {
    const Index B = dy.dim(0), C = dy.dim(1);
    const Index inner = dy.size() / (B * C);
    const auto n = static_cast<Scalar>(B * inner);
    Tensor<Scalar> dx(dy.shape());
    for (Index c = 0; c < C; ++c) {
      Scalar sum_dy = 0, sum_dy_xh = 0;
      for (Index b = 0; b < B; ++b) {
        const Index off = (b * C + c) * inner;
        for (Index k = 0; k < inner; ++k) {
          sum_dy += dy[off + k];
          sum_dy_xh += dy[off + k] * x_hat_[off + k];
        }
      }
      gamma_.grad[c] += sum_dy_xh;
      beta_.grad[c] += sum_dy;
      const Scalar scale = gamma_.value[c] * inv_std_[c] / n;
      for (Index b = 0; b < B; ++b) {
        const Index off = (b * C + c) * inner;
        for (Index k = 0; k < inner; ++k) {
          dx[off + k] = batch_stats_ ? scale * (n * dy[off + k] - sum_dy - x_hat_[off + k] * sum_dy_xh)
                                     : gamma_.value[c] * inv_std_[c] * dy[off + k];
        }
      }
    }
    return dx;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) { out.push_back(&gamma_); out.push_back(&beta_); }
  void collect_buffers(std::vector<Buffer<Scalar>*>& out) {
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

 private:
  Parameter<Scalar> gamma_, beta_;
  Buffer<Scalar> running_mean_, running_var_;
  Tensor<Scalar> x_hat_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std_;
  bool batch_stats_ = true;
};

enum class ActivationKind { LeakyReLU, ReLU, Sigmoid };

template <typename Scalar>
Scalar activate(ActivationKind kind, Scalar v, Scalar alpha) {
  switch (kind) {
    case ActivationKind::LeakyReLU: return v >= 0 ? v : alpha * v;
    case ActivationKind::ReLU: return v > 0 ? v : Scalar(0);
    case ActivationKind::Sigmoid: return Scalar(1) / (Scalar(1) + std::exp(-v));
  }
  return v;
}

template <typename Scalar>
class Activation {
 public:
  Activation() = default;
  explicit Activation(ActivationKind kind, Scalar alpha = Scalar(0.01)) : kind_(kind), alpha_(alpha) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, const ForwardContext&) {
    Tensor<Scalar> y(x.shape());
    for (Index i = 0; i < x.size(); ++i) y[i] = activate(kind_, x[i], alpha_);
    input_ = x;
    output_ = y;
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy) const {
    Tensor<Scalar> dx(dy.shape());
    for (Index i = 0; i < dy.size(); ++i) {
      switch (kind_) {
        case ActivationKind::LeakyReLU: dx[i] = input_[i] >= 0 ? dy[i] : alpha_ * dy[i]; break;
        case ActivationKind::ReLU: dx[i] = input_[i] > 0 ? dy[i] : Scalar(0); break;
        case ActivationKind::Sigmoid: dx[i] = dy[i] * output_[i] * (Scalar(1) - output_[i]); break;
      }
    }
    return dx;
  }

 private:
  ActivationKind kind_ = ActivationKind::ReLU;
  Scalar alpha_ = Scalar(0.01);
  Tensor<Scalar> input_, output_;
};

// Inverted dropout: kept units are scaled by 1 / (1 - p) during training.
template <typename Scalar>
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double p) : p_(p) {
    if (!(p >= 0.0 && p < 1.0)) throw ShapeError("dropout probability must lie in [0, 1)");
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, const ForwardContext& ctx) {
    active_ = ctx.training && p_ > 0.0;
    if (!active_) return x;
    if (!ctx.rng) throw TrainingError("dropout in training mode needs a random generator");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto keep = static_cast<Scalar>(1.0 / (1.0 - p_));
    mask_ = Tensor<Scalar>(x.shape());
    for (Index i = 0; i < x.size(); ++i) mask_[i] = u(*ctx.rng) >= p_ ? keep : Scalar(0);
    Tensor<Scalar> y(x.shape());
    y.values() = x.values().cwiseProduct(mask_.values());
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy) const {
    if (!active_) return dy;
    Tensor<Scalar> dx(dy.shape());
    dx.values() = dy.values().cwiseProduct(mask_.values());
    return dx;
  }

  double probability() const { return p_; }

 private:
  double p_ = 0.0;
  bool active_ = false;
  Tensor<Scalar> mask_;
};

// Non-overlapping max pooling over (H, W) windows; trailing remainders dropped.
template <typename Scalar>
class MaxPool {
 public:
  MaxPool() = default;
  MaxPool(Index ph, Index pw) : ph_(ph), pw_(pw) {}

  Shape output_shape(const Shape& in) const { return {in[0], in[1], in[2] / ph_, in[3] / pw_}; }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, const ForwardContext&) {
    input_shape_ = x.shape();
    const Shape os = output_shape(x.shape());
    if (os[2] < 1 || os[3] < 1) throw ShapeError("max pool window larger than input");
    Tensor<Scalar> y(os);
    argmax_.assign(static_cast<std::size_t>(y.size()), 0);
    const Index H = x.dim(2), W = x.dim(3);
    for (Index bc = 0; bc < x.dim(0) * x.dim(1); ++bc) {
      for (Index ho = 0; ho < os[2]; ++ho) {
        for (Index wo = 0; wo < os[3]; ++wo) {
          Index best = (bc * H + ho * ph_) * W + wo * pw_;
          for (Index i = 0; i < ph_; ++i) {
            for (Index j = 0; j < pw_; ++j) {
              const Index k = (bc * H + ho * ph_ + i) * W + wo * pw_ + j;
              if (x[k] > x[best]) best = k;
            }
          }
          const Index o = (bc * os[2] + ho) * os[3] + wo;
          y[o] = x[best];
          argmax_[static_cast<std::size_t>(o)] = best;
        }
      }
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy) const {
    Tensor<Scalar> dx(input_shape_);
    for (Index o = 0; o < dy.size(); ++o) dx[argmax_[static_cast<std::size_t>(o)]] += dy[o];
    return dx;
  }

 private:
  Index ph_ = 2, pw_ = 1;
  Shape input_shape_;
  std::vector<Index> argmax_;
};

template <typename Scalar>
class Flatten {
 public:
  Tensor<Scalar> forward(Tensor<Scalar> x, const ForwardContext&) {
    input_shape_ = x.shape();
    const Index b = x.dim(0);
    x.reshape({b, x.size() / b});
    return x;
  }
  Tensor<Scalar> backward(Tensor<Scalar> dy) const {
    dy.reshape(input_shape_);
    return dy;
  }

 private:
  Shape input_shape_;
};

// y = x W + b with W [in, out] (x is [B, in]).
template <typename Scalar>
class Dense {
 public:
  Dense() = default;
  Dense(std::string name, Index in, Index out, double l2 = 0.0) {
    weight_ = {name + ".kernel", Tensor<Scalar>({in, out}), Tensor<Scalar>({in, out}), l2};
    bias_ = {name + ".bias", Tensor<Scalar>({out}), Tensor<Scalar>({out}), 0.0};
  }

  void initialize(Rng& rng) {
    he_uniform(weight_.value, weight_.value.dim(0), rng);
    bias_.value.set_zero();
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, const ForwardContext&) {
    if (x.rank() != 2 || x.dim(1) != weight_.value.dim(0)) {
      throw ShapeError("dense input " + shape_string(x.shape()) + " does not match kernel " +
                       shape_string(weight_.value.shape()));
    }
    input_ = x;
    Tensor<Scalar> y({x.dim(0), weight_.value.dim(1)});
    y.matrix().noalias() = x.matrix() * weight_.value.matrix();
    y.matrix().rowwise() += bias_.value.values().transpose();
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy) {
    weight_.grad.matrix().noalias() += input_.matrix().transpose() * dy.matrix();
    bias_.grad.values() += dy.matrix().colwise().sum().transpose();
    Tensor<Scalar> dx(input_.shape());
    dx.matrix().noalias() = dy.matrix() * weight_.value.matrix().transpose();
    return dx;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) { out.push_back(&weight_); out.push_back(&bias_); }
  Index units() const { return weight_.value.dim(1); }

 private:
  Parameter<Scalar> weight_, bias_;
  Tensor<Scalar> input_;
};

// Concatenates along axis 1; all other extents must agree.
template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Shape shape = parts.front().shape();
  const Index B = shape[0];
  Index total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size() || s[0] != B) throw ShapeError("concat: batch or rank mismatch");
    for (std::size_t a = 2; a < s.size(); ++a) {
      if (s[a] != shape[a]) throw ShapeError("concat: spatial extents differ");
    }
    total += s[1];
  }
  shape[1] = total;
  Tensor<Scalar> out(shape);
  const Index out_row = out.size() / B;
  Index offset = 0;
  for (const auto& p : parts) {
    const Index row = p.size() / B;
    for (Index b = 0; b < B; ++b) {
      out.values().segment(b * out_row + offset, row) = p.values().segment(b * row, row);
    }
    offset += row;
  }
  return out;
}

// Inverse of concat_channels given the channel count of each part.
template <typename Scalar>
std::vector<Tensor<Scalar>> split_channels(const Tensor<Scalar>& x, const std::vector<Index>& channels) {
  const Index B = x.dim(0);
  const Index inner = x.size() / (B * x.dim(1));
  std::vector<Tensor<Scalar>> out;
  Index offset = 0;
  for (Index c : channels) {
    Shape s = x.shape();
    s[1] = c;
    Tensor<Scalar> part(s);
    const Index row = c * inner;
    for (Index b = 0; b < B; ++b) {
      part.values().segment(b * row, row) = x.values().segment(b * x.size() / B + offset, row);
    }
    out.push_back(std::move(part));
    offset += row;
  }
  return out;
}

}  // namespace acfnet::nn

#endif  // ACFNET_NN_LAYERS_HPP
