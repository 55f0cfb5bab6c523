#ifndef ACFNET_MODEL_HPP
#define ACFNET_MODEL_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "acfnet/nn/layers.hpp"

namespace acfnet {

enum class FeatureMode : std::uint8_t { TV8, MFCC12, FUSED };

const char* to_string(FeatureMode m);
FeatureMode feature_mode_from_string(const std::string& s);

// Feature channels per tower input track: 8 (6 TVs + 2 glottal) or 12 MFCCs.
int track_channels(FeatureMode single_mode);
std::vector<FeatureMode> tower_modes(FeatureMode mode);

struct ModelConfig {
  FeatureMode feature_mode = FeatureMode::TV8;
  int max_delay = 50;

  // Grid dimensions.
  int o1 = 32;          // C1-C4 filters
  int o2 = 16;          // C6 filters
  int k1 = 3;           // C6 kernel height (width 1)
  int o3 = 8;           // D2 units
  double dropout = 0.5;

  int d1_units = 32;
  double learning_rate = 1e-5;
  int batch_size = 32;
  std::uint64_t seed = 0;
  int max_epochs = 300;
  int patience = 15;
  double l2 = 0.01;
  double leaky_alpha = 0.01;

  int branch_kernel = 15;
  std::vector<int> dilations{1, 3, 7, 15};
  int c5_filters = 16;
  int c5_kernel = 3;
  int c5_stride = 2;

  // Layer placement.
  bool batchnorm = true;
  bool maxpool_after_c6 = true;
  bool dropout_after_flatten = true;
  bool dropout_after_d1 = true;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  // Best grid points per feature set.
  static ModelConfig best_tv();
  static ModelConfig best_mfcc();
  static ModelConfig best_fused();
};

struct TowerSpec {
  std::string name;
  int input_channels = 64;  // M^2
  int height = 51;          // D + 1
  int o1 = 32, o2 = 16, k1 = 3;
  int branch_kernel = 15;
  std::vector<int> dilations{1, 3, 7, 15};
  int c5_filters = 16, c5_kernel = 3, c5_stride = 2;
  bool batchnorm = true;
  bool maxpool = true;
  double leaky_alpha = 0.01;

  int c5_height() const;
  int c6_height() const;
  int output_height() const;
  int flatten_width() const { return output_height() * o2; }
  std::int64_t parameter_count() const;
};

struct HeadSpec {
  int d1_units = 32;
  int o3 = 8;
  double dropout = 0.5;
  double l2 = 0.01;
  bool dropout_after_flatten = true;
  bool dropout_after_d1 = true;

  std::int64_t parameter_count(int input_width) const;
};

TowerSpec tower_spec(const ModelConfig& config, FeatureMode single_mode);
HeadSpec head_spec(const ModelConfig& config);

// Closed-form trainable parameter count.
std::int64_t parameter_count(const ModelConfig& config);

// Dilated convolutional tower: four parallel dilated branches, channel concat,
// a strided convolution, a valid convolution, optional max pool, flatten.
template <typename Scalar>
class Tower {
 public:
  Tower() = default;
  explicit Tower(const TowerSpec& spec) : spec_(spec) {
    using nn::Conv2dOptions;
    using nn::Padding;
    for (std::size_t b = 0; b < spec.dilations.size(); ++b) {
      const std::string name = spec.name + ".c" + std::to_string(b + 1);
      Conv2dOptions o{spec.branch_kernel, 1, spec.dilations[b], 1, 1, 1, Padding::Same};
      branches_.push_back({nn::Conv2D<Scalar>(name, spec.input_channels, spec.o1, o),
                           nn::BatchNorm<Scalar>(name + ".bn", spec.o1),
                           nn::Activation<Scalar>(nn::ActivationKind::LeakyReLU, Scalar(spec.leaky_alpha))});
    }
    const auto concat_channels = static_cast<int>(spec.dilations.size()) * spec.o1;
    const std::string c5 = spec.name + ".c5";
    const std::string c6 = spec.name + ".c6";
    c5_ = {nn::Conv2D<Scalar>(c5, concat_channels, spec.c5_filters,
                              Conv2dOptions{spec.c5_kernel, 1, 1, 1, spec.c5_stride, 1, Padding::Same}),
           nn::BatchNorm<Scalar>(c5 + ".bn", spec.c5_filters),
           nn::Activation<Scalar>(nn::ActivationKind::LeakyReLU, Scalar(spec.leaky_alpha))};
    c6_ = {nn::Conv2D<Scalar>(c6, spec.c5_filters, spec.o2, Conv2dOptions{spec.k1, 1, 1, 1, 1, 1, Padding::Valid}),
           nn::BatchNorm<Scalar>(c6 + ".bn", spec.o2),
           nn::Activation<Scalar>(nn::ActivationKind::LeakyReLU, Scalar(spec.leaky_alpha))};
    pool_ = nn::MaxPool<Scalar>(2, 1);
  }

  void initialize(nn::Rng& rng) {
    for (auto& b : branches_) b.conv.initialize(rng);
    c5_.conv.initialize(rng);
    c6_.conv.initialize(rng);
  }

  void set_need_input_grad(bool need) {
    for (auto& b : branches_) b.conv.set_need_input_grad(need);
  }

  // x: [B, M^2, D + 1, 1] -> [B, flatten_width]
  nn::Tensor<Scalar> forward(const nn::Tensor<Scalar>& x, const nn::ForwardContext& ctx) {
    nn::require_shape(x.shape(), {x.dim(0), spec_.input_channels, spec_.height, 1}, "tower input");
    std::vector<nn::Tensor<Scalar>> outs;
    outs.reserve(branches_.size());
    for (auto& b : branches_) outs.push_back(b.forward(x, ctx, spec_.batchnorm));
    auto h = nn::concat_channels(outs);
    h = c5_.forward(h, ctx, spec_.batchnorm);
    h = c6_.forward(h, ctx, spec_.batchnorm);
    if (spec_.maxpool) h = pool_.forward(h, ctx);
    return flatten_.forward(std::move(h), ctx);
  }

  // Returns the input gradient (empty when input gradients are disabled).
  nn::Tensor<Scalar> backward(const nn::Tensor<Scalar>& dy) {
    auto g = flatten_.backward(dy);
    if (spec_.maxpool) g = pool_.backward(g);
    g = c6_.backward(g, spec_.batchnorm);
    g = c5_.backward(g, spec_.batchnorm);
    const std::vector<Index> widths(branches_.size(), spec_.o1);
    auto parts = nn::split_channels(g, widths);
    nn::Tensor<Scalar> dx;
    for (std::size_t b = 0; b < branches_.size(); ++b) {
      auto d = branches_[b].backward(parts[b], spec_.batchnorm);
      if (d.size() == 0) continue;
      if (dx.size() == 0) {
        dx = std::move(d);
      } else {
        dx.values() += d.values();
      }
    }
    return dx;
  }

  void collect(std::vector<nn::Parameter<Scalar>*>& out) {
    for (auto& b : branches_) b.collect(out, spec_.batchnorm);
    c5_.collect(out, spec_.batchnorm);
    c6_.collect(out, spec_.batchnorm);
  }
  void collect_buffers(std::vector<nn::Buffer<Scalar>*>& out) {
    if (!spec_.batchnorm) return;
    for (auto& b : branches_) b.bn.collect_buffers(out);
    c5_.bn.collect_buffers(out);
    c6_.bn.collect_buffers(out);
  }

  const TowerSpec& spec() const { return spec_; }

 private:
  using Index = nn::Index;

  struct ConvBlock {
    nn::Conv2D<Scalar> conv;
    nn::BatchNorm<Scalar> bn;
    nn::Activation<Scalar> act;

    nn::Tensor<Scalar> forward(const nn::Tensor<Scalar>& x, const nn::ForwardContext& ctx, bool use_bn) {
      auto h = conv.forward(x, ctx);
      if (use_bn) h = bn.forward(h, ctx);
      return act.forward(h, ctx);
    }
    nn::Tensor<Scalar> backward(const nn::Tensor<Scalar>& dy, bool use_bn) {
      auto g = act.backward(dy);
      if (use_bn) g = bn.backward(g);
      return conv.backward(g);
    }
    void collect(std::vector<nn::Parameter<Scalar>*>& out, bool use_bn) {
      conv.collect(out);
      if (use_bn) bn.collect(out);
    }
  };

  TowerSpec spec_;
  std::vector<ConvBlock> branches_;
  ConvBlock c5_, c6_;
  nn::MaxPool<Scalar> pool_;
  nn::Flatten<Scalar> flatten_;
};

// One or two towers, flattened features concatenated, then
// [dropout] D1 ReLU [dropout] D2 ReLU, and a single sigmoid unit.
template <typename Scalar>
class Network {
 public:
  Network() = default;
  Network(std::vector<TowerSpec> towers, HeadSpec head) : head_spec_(head) {
    int width = 0;
    for (const auto& t : towers) {
      towers_.emplace_back(t);
      width += t.flatten_width();
    }
    flatten_width_ = width;
    drop1_ = nn::Dropout<Scalar>(head.dropout_after_flatten ? head.dropout : 0.0);
    d1_ = nn::Dense<Scalar>("head.d1", width, head.d1_units, head.l2);
    relu1_ = nn::Activation<Scalar>(nn::ActivationKind::ReLU);
    drop2_ = nn::Dropout<Scalar>(head.dropout_after_d1 ? head.dropout : 0.0);
    d2_ = nn::Dense<Scalar>("head.d2", head.d1_units, head.o3, head.l2);
    relu2_ = nn::Activation<Scalar>(nn::ActivationKind::ReLU);
    out_ = nn::Dense<Scalar>("head.out", head.o3, 1, 0.0);
    sigmoid_ = nn::Activation<Scalar>(nn::ActivationKind::Sigmoid);
    for (auto& t : towers_) t.set_need_input_grad(false);
  }

  void initialize(std::uint64_t seed) {
    nn::Rng rng(seed);
    for (auto& t : towers_) t.initialize(rng);
    d1_.initialize(rng);
    d2_.initialize(rng);
    out_.initialize(rng);
  }

  void set_need_input_grad(bool need) {
    for (auto& t : towers_) t.set_need_input_grad(need);
  }

  // Flattened (and concatenated) tower features before the head.
  nn::Tensor<Scalar> features(std::span<const nn::Tensor<Scalar>> inputs, const nn::ForwardContext& ctx) {
    if (inputs.size() != towers_.size()) {
      throw ShapeError("network expects " + std::to_string(towers_.size()) + " input tensors");
    }
    std::vector<nn::Tensor<Scalar>> feats;
    for (std::size_t t = 0; t < towers_.size(); ++t) feats.push_back(towers_[t].forward(inputs[t], ctx));
    return feats.size() == 1 ? std::move(feats.front()) : nn::concat_channels(feats);
  }

  // Probabilities [B, 1].
  nn::Tensor<Scalar> forward(std::span<const nn::Tensor<Scalar>> inputs, const nn::ForwardContext& ctx) {
    auto h = features(inputs, ctx);
    h = drop1_.forward(h, ctx);
    h = relu1_.forward(d1_.forward(h, ctx), ctx);
    h = drop2_.forward(h, ctx);
    h = relu2_.forward(d2_.forward(h, ctx), ctx);
    return sigmoid_.forward(out_.forward(h, ctx), ctx);
  }

  // Accumulates parameter gradients; returns input gradients per tower.
  std::vector<nn::Tensor<Scalar>> backward(const nn::Tensor<Scalar>& d_prob) {
    auto g = out_.backward(sigmoid_.backward(d_prob));
    g = d2_.backward(relu2_.backward(g));
    g = drop2_.backward(g);
    g = d1_.backward(relu1_.backward(g));
    g = drop1_.backward(g);
    std::vector<Index> widths;
    for (const auto& t : towers_) widths.push_back(t.spec().flatten_width());
    auto parts = nn::split_channels(g, widths);
    std::vector<nn::Tensor<Scalar>> dx;
    for (std::size_t t = 0; t < towers_.size(); ++t) dx.push_back(towers_[t].backward(parts[t]));
    return dx;
  }

  std::vector<nn::Parameter<Scalar>*> parameters() {
    std::vector<nn::Parameter<Scalar>*> out;
    for (auto& t : towers_) t.collect(out);
    d1_.collect(out);
    d2_.collect(out);
    out_.collect(out);
    return out;
  }

  std::vector<nn::Buffer<Scalar>*> buffers() {
    std::vector<nn::Buffer<Scalar>*> out;
    for (auto& t : towers_) t.collect_buffers(out);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->grad.set_zero();
  }

  // sum over parameters of l2 * ||w||^2; its gradient is added by add_l2_grad.
  double l2_penalty() {
    double total = 0.0;
    for (auto* p : parameters()) {
      if (p->l2 > 0.0) total += p->l2 * p->value.values().template cast<double>().squaredNorm();
    }
    return total;
  }
  void add_l2_grad() {
    for (auto* p : parameters()) {
      if (p->l2 > 0.0) p->grad.values() += static_cast<Scalar>(2.0 * p->l2) * p->value.values();
    }
  }

  std::int64_t parameter_count() {
    std::int64_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  std::size_t tower_count() const { return towers_.size(); }
  Tower<Scalar>& tower(std::size_t k) { return towers_.at(k); }
  const HeadSpec& head() const { return head_spec_; }
  int flatten_width() const { return flatten_width_; }

 private:
  using Index = nn::Index;

  std::vector<Tower<Scalar>> towers_;
  HeadSpec head_spec_;
  int flatten_width_ = 0;
  nn::Dropout<Scalar> drop1_, drop2_;
  nn::Dense<Scalar> d1_, d2_, out_;
  nn::Activation<Scalar> relu1_, relu2_, sigmoid_;
};

template <typename Scalar>
Network<Scalar> build_single_tower(const ModelConfig& config) {
  config.validate();
  if (config.feature_mode == FeatureMode::FUSED) {
    throw ConfigError("build_single_tower needs feature mode tv8 or mfcc12");
  }
  Network<Scalar> net({tower_spec(config, config.feature_mode)}, head_spec(config));
  net.initialize(config.seed);
  return net;
}

template <typename Scalar>
Network<Scalar> build_fused(const TowerSpec& tv, const TowerSpec& mfcc, const HeadSpec& head, std::uint64_t seed) {
  Network<Scalar> net({tv, mfcc}, head);
  net.initialize(seed);
  return net;
}

template <typename Scalar>
Network<Scalar> build_network(const ModelConfig& config) {
  config.validate();
  if (config.feature_mode != FeatureMode::FUSED) return build_single_tower<Scalar>(config);
  return build_fused<Scalar>(tower_spec(config, FeatureMode::TV8), tower_spec(config, FeatureMode::MFCC12),
                             head_spec(config), config.seed);
}

}  // namespace acfnet

#endif  // ACFNET_MODEL_HPP
