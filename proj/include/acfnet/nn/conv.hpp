#ifndef ACFNET_NN_CONV_HPP
#define ACFNET_NN_CONV_HPP

#include <algorithm>
#include <optional>
#include <utility>

#include "acfnet/nn/tensor.hpp"

namespace acfnet::nn {

enum class Padding { Same, Valid };

struct Conv2dOptions {
  Index kernel_h = 1, kernel_w = 1;
  Index dilation_h = 1, dilation_w = 1;
  Index stride_h = 1, stride_w = 1;
  Padding padding = Padding::Same;
};

struct AxisGeometry {
  Index out = 0;
  Index pad_before = 0;
};

// TensorFlow conventions: same -> ceil(in / stride), valid -> no padding.
inline AxisGeometry conv_axis(Index in, Index kernel, Index dilation, Index stride, Padding padding) {
  if (kernel < 1 || dilation < 1 || stride < 1) throw ShapeError("kernel, dilation and stride must be positive");
  const Index effective = 1 + (kernel - 1) * dilation;
  AxisGeometry g;
  if (padding == Padding::Same) {
    g.out = (in + stride - 1) / stride;
    const Index total = std::max<Index>((g.out - 1) * stride + effective - in, 0);
    g.pad_before = total / 2;
  } else {
    if (effective > in) {
      throw ShapeError("effective kernel " + std::to_string(effective) + " exceeds input extent " +
                       std::to_string(in));
    }
    g.out = (in - effective) / stride + 1;
  }
  return g;
}

template <typename Scalar>
using ColumnBuffer = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Inputs of width 1 convolved by (k, 1) kernels at stride 1. Each kernel tap
// then reads one contiguous run of rows, and taps that only ever see padding
// can be dropped from the unrolled matrix.
inline bool column_case(const Shape& input, const Conv2dOptions& o) {
  return input[3] == 1 && o.kernel_w == 1 && o.stride_h == 1;
}

struct TapRange {
  Index first = 0;
  Index count = 0;
};

// Output rows [lo, hi) for which tap i reads a real input row.
inline std::pair<Index, Index> tap_span(Index i, Index H, const Conv2dOptions& o, const AxisGeometry& gh) {
  const Index shift = i * o.dilation_h - gh.pad_before;
  const Index lo = std::clamp<Index>(-shift, 0, gh.out);
  const Index hi = std::clamp<Index>(H - shift, lo, gh.out);
  return {lo, hi};
}

inline TapRange live_taps(Index H, const Conv2dOptions& o, const AxisGeometry& gh) {
  Index first = o.kernel_h, last = 0;
  for (Index i = 0; i < o.kernel_h; ++i) {
    const auto [lo, hi] = tap_span(i, H, o, gh);
    if (hi > lo) {
      first = std::min(first, i);
      last = i + 1;
    }
  }
  return first < last ? TapRange{first, last - first} : TapRange{0, 0};
}

// Unrolls receptive fields: row (c, i, j), column (b, ho, wo). In the column
// case only the taps in `taps` are unrolled (row c * taps.count + i - first).
template <typename Scalar>
ColumnBuffer<Scalar> im2col(const Tensor<Scalar>& x, const Conv2dOptions& o, const AxisGeometry& gh,
                            const AxisGeometry& gw, std::optional<TapRange> taps = std::nullopt) {
  const Index B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index P = gh.out * gw.out;
  if (column_case(x.shape(), o)) {
    const TapRange t = taps.value_or(TapRange{0, o.kernel_h});
    ColumnBuffer<Scalar> cols(C * t.count, B * P);
    for (Index c = 0; c < C; ++c) {
      for (Index i = t.first; i < t.first + t.count; ++i) {
        Scalar* row = cols.row(c * t.count + i - t.first).data();
        const Index shift = i * o.dilation_h - gh.pad_before;
        const auto [lo, hi] = tap_span(i, H, o, gh);
        for (Index b = 0; b < B; ++b) {
          Scalar* dst = row + b * P;
          const Scalar* src = x.data() + (b * C + c) * H;
          std::fill(dst, dst + lo, Scalar(0));
          if (hi > lo) std::copy(src + lo + shift, src + hi + shift, dst + lo);
          std::fill(dst + hi, dst + P, Scalar(0));
        }
      }
    }
    return cols;
  }
  ColumnBuffer<Scalar> cols = ColumnBuffer<Scalar>::Zero(C * o.kernel_h * o.kernel_w, B * P);
  for (Index c = 0; c < C; ++c) {
    for (Index i = 0; i < o.kernel_h; ++i) {
      for (Index j = 0; j < o.kernel_w; ++j) {
        Scalar* row = cols.row((c * o.kernel_h + i) * o.kernel_w + j).data();
        const Index oh = i * o.dilation_h - gh.pad_before;
        const Index ow = j * o.dilation_w - gw.pad_before;
        for (Index b = 0; b < B; ++b) {
          const Scalar* src = x.data() + (b * C + c) * H * W;
          Scalar* dst = row + b * P;
          for (Index ho = 0; ho < gh.out; ++ho) {
            const Index h = ho * o.stride_h + oh;
            if (h < 0 || h >= H) continue;
            for (Index wo = 0; wo < gw.out; ++wo) {
              const Index w = wo * o.stride_w + ow;
              if (w >= 0 && w < W) dst[ho * gw.out + wo] = src[h * W + w];
            }
          }
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
Tensor<Scalar> col2im(const ColumnBuffer<Scalar>& cols, const Shape& input_shape, const Conv2dOptions& o,
                      const AxisGeometry& gh, const AxisGeometry& gw, std::optional<TapRange> taps = std::nullopt) {
  Tensor<Scalar> dx(input_shape);
  const Index B = input_shape[0], C = input_shape[1], H = input_shape[2], W = input_shape[3];
  const Index P = gh.out * gw.out;
  if (column_case(input_shape, o)) {
    const TapRange t = taps.value_or(TapRange{0, o.kernel_h});
    for (Index c = 0; c < C; ++c) {
      for (Index i = t.first; i < t.first + t.count; ++i) {
        const Scalar* row = cols.row(c * t.count + i - t.first).data();
        const Index shift = i * o.dilation_h - gh.pad_before;
        const auto [lo, hi] = tap_span(i, H, o, gh);
        for (Index b = 0; b < B; ++b) {
          Scalar* dst = dx.data() + (b * C + c) * H;
          const Scalar* src = row + b * P;
          for (Index ho = lo; ho < hi; ++ho) dst[ho + shift] += src[ho];
        }
      }
    }
    return dx;
  }
  for (Index c = 0; c < C; ++c) {
    for (Index i = 0; i < o.kernel_h; ++i) {
      for (Index j = 0; j < o.kernel_w; ++j) {
        const Scalar* row = cols.row((c * o.kernel_h + i) * o.kernel_w + j).data();
        const Index oh = i * o.dilation_h - gh.pad_before;
        const Index ow = j * o.dilation_w - gw.pad_before;
        for (Index b = 0; b < B; ++b) {
          Scalar* dst = dx.data() + (b * C + c) * H * W;
          const Scalar* src = row + b * P;
          for (Index ho = 0; ho < gh.out; ++ho) {
            const Index h = ho * o.stride_h + oh;
            if (h < 0 || h >= H) continue;
            for (Index wo = 0; wo < gw.out; ++wo) {
              const Index w = wo * o.stride_w + ow;
              if (w >= 0 && w < W) dst[h * W + w] += src[ho * gw.out + wo];
            }
          }
        }
      }
    }
  }
  return dx;
}

struct ConvGeometry {
  AxisGeometry h, w;
  std::optional<TapRange> taps;  // column case only
};

inline ConvGeometry conv_geometry(const Shape& input, const Shape& weights, const Conv2dOptions& o) {
  if (input.size() != 4 || weights.size() != 4) throw ShapeError("conv2d expects 4-D input and weights");
  if (weights[1] != input[1] || weights[2] != o.kernel_h || weights[3] != o.kernel_w) {
    throw ShapeError("conv2d weights " + shape_string(weights) + " do not fit input " + shape_string(input));
  }
  ConvGeometry g{conv_axis(input[2], o.kernel_h, o.dilation_h, o.stride_h, o.padding),
                 conv_axis(input[3], o.kernel_w, o.dilation_w, o.stride_w, o.padding), std::nullopt};
  if (column_case(input, o)) g.taps = live_taps(input[2], o, g.h);
  return g;
}

// Kernel columns of the live taps, laid out like the pruned im2col rows.
template <typename Scalar>
ColumnBuffer<Scalar> gather_taps(const Tensor<Scalar>& weights, const TapRange& t) {
  const Index F = weights.dim(0), C = weights.dim(1), kh = weights.dim(2);
  const auto w = weights.matrix();
  ColumnBuffer<Scalar> out(F, C * t.count);
  for (Index c = 0; c < C; ++c) out.middleCols(c * t.count, t.count) = w.middleCols(c * kh + t.first, t.count);
  return out;
}

inline bool pruned(const ConvGeometry& g, const Conv2dOptions& o) {
  return g.taps && g.taps->count != o.kernel_h;
}

// Cross-correlation (no kernel flip). input [B,C,H,W], weights [F,C,kh,kw], bias [F].
// When `cols_out` is given the unrolled input is kept for the backward pass.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& weights,
                              const Tensor<Scalar>& bias, const Conv2dOptions& o,
                              ColumnBuffer<Scalar>* cols_out = nullptr) {
  const ConvGeometry g = conv_geometry(input.shape(), weights.shape(), o);
  const Index B = input.dim(0), F = weights.dim(0);
  require_shape(bias.shape(), {F}, "conv2d bias");
  const Index P = g.h.out * g.w.out;
  ColumnBuffer<Scalar> cols = im2col(input, o, g.h, g.w, g.taps);
  ColumnBuffer<Scalar> out_mat(F, B * P);
  if (pruned(g, o)) {
    out_mat.noalias() = gather_taps(weights, *g.taps) * cols;
  } else {
    out_mat.noalias() = weights.matrix() * cols;
  }
  Tensor<Scalar> out({B, F, g.h.out, g.w.out});
  for (Index b = 0; b < B; ++b) {
    for (Index f = 0; f < F; ++f) {
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(out.data() + (b * F + f) * P, P) =
          out_mat.row(f).segment(b * P, P).transpose().array() + bias[f];
    }
  }
  if (cols_out) *cols_out = std::move(cols);
  return out;
}

template <typename Scalar>
struct Conv2dGradients {
  Tensor<Scalar> input, weights, bias;
};

template <typename Scalar>
Conv2dGradients<Scalar> conv2d_backward(const Shape& input_shape, const Tensor<Scalar>& weights,
                                        const ColumnBuffer<Scalar>& cols, const Tensor<Scalar>& grad_out,
                                        const Conv2dOptions& o, bool need_input_grad = true) {
  const ConvGeometry g = conv_geometry(input_shape, weights.shape(), o);
  const Index B = input_shape[0], F = weights.dim(0);
  const Index P = g.h.out * g.w.out;
  require_shape(grad_out.shape(), {B, F, g.h.out, g.w.out}, "conv2d grad_out");
  ColumnBuffer<Scalar> dout(F, B * P);
  for (Index b = 0; b < B; ++b) {
    for (Index f = 0; f < F; ++f) {
      dout.row(f).segment(b * P, P) =
          Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(grad_out.data() + (b * F + f) * P, P);
    }
  }
  Conv2dGradients<Scalar> grads;
  grads.weights = Tensor<Scalar>(weights.shape());
  grads.bias = Tensor<Scalar>({F});
  grads.bias.values() = dout.rowwise().sum();
  if (pruned(g, o)) {
    // Taps that only see padding get exactly zero gradient.
    const TapRange& t = *g.taps;
    const Index C = weights.dim(1), kh = weights.dim(2);
    ColumnBuffer<Scalar> dw(F, C * t.count);
    dw.noalias() = dout * cols.transpose();
    auto full = grads.weights.matrix();
    for (Index c = 0; c < C; ++c) full.middleCols(c * kh + t.first, t.count) = dw.middleCols(c * t.count, t.count);
  } else {
    grads.weights.matrix().noalias() = dout * cols.transpose();
  }
  if (need_input_grad) {
    ColumnBuffer<Scalar> dcols(cols.rows(), cols.cols());
    if (pruned(g, o)) {
      dcols.noalias() = gather_taps(weights, *g.taps).transpose() * dout;
    } else {
      dcols.noalias() = weights.matrix().transpose() * dout;
    }
    grads.input = col2im(dcols, input_shape, o, g.h, g.w, g.taps);
  }
  return grads;
}

}  // namespace acfnet::nn

#endif  // ACFNET_NN_CONV_HPP
