#include "acfnet/model.hpp"

#include <algorithm>

namespace acfnet {

const char* to_string(FeatureMode m) {
  switch (m) {
    case FeatureMode::TV8: return "tv8";
    case FeatureMode::MFCC12: return "mfcc12";
    case FeatureMode::FUSED: return "fused";
  }
  return "?";
}

FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "tv8") return FeatureMode::TV8;
  if (s == "mfcc12") return FeatureMode::MFCC12;
  if (s == "fused") return FeatureMode::FUSED;
  throw ConfigError("unknown feature mode '" + s + "' (expected tv8, mfcc12 or fused)");
}

int track_channels(FeatureMode single_mode) {
  switch (single_mode) {
    case FeatureMode::TV8: return 8;
    case FeatureMode::MFCC12: return 12;
    case FeatureMode::FUSED: break;
  }
  throw ConfigError("fused mode has no single channel count");
}

std::vector<FeatureMode> tower_modes(FeatureMode mode) {
  if (mode == FeatureMode::FUSED) return {FeatureMode::TV8, FeatureMode::MFCC12};
  return {mode};
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid model config: " + what);
  };
  require(max_delay >= 1, "max_delay must be >= 1");
  require(o1 > 0 && o2 > 0 && k1 > 0 && o3 > 0 && d1_units > 0, "layer sizes must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(learning_rate > 0.0, "learning rate must be positive");
  require(batch_size > 0, "batch size must be positive");
  require(max_epochs > 0 && patience > 0, "epoch limits must be positive");
  require(l2 >= 0.0, "l2 must be non-negative");
  require(branch_kernel > 0 && !dilations.empty(), "branch kernel and dilations required");
  require(std::all_of(dilations.begin(), dilations.end(), [](int d) { return d > 0; }), "dilations must be positive");
  require(c5_filters > 0 && c5_kernel > 0 && c5_stride > 0, "C5 settings must be positive");
  const TowerSpec t = tower_spec(*this, FeatureMode::TV8);
  require(t.c6_height() >= 1, "C6 kernel taller than C5 output");
  require(t.output_height() >= 1, "nothing left after pooling");
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["feature_mode"] = to_string(feature_mode);
  j["max_delay"] = max_delay;
  j["o1"] = o1;
  j["o2"] = o2;
  j["k1"] = k1;
  j["o3"] = o3;
  j["dropout"] = dropout;
  j["d1_units"] = d1_units;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["max_epochs"] = max_epochs;
  j["patience"] = patience;
  j["l2"] = l2;
  j["leaky_alpha"] = leaky_alpha;
  j["branch_kernel"] = branch_kernel;
  j["dilations"] = dilations;
  j["c5_filters"] = c5_filters;
  j["c5_kernel"] = c5_kernel;
  j["c5_stride"] = c5_stride;
  j["batchnorm"] = batchnorm;
  j["maxpool_after_c6"] = maxpool_after_c6;
  j["dropout_after_flatten"] = dropout_after_flatten;
  j["dropout_after_d1"] = dropout_after_d1;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    if (j.contains("feature_mode")) c.feature_mode = feature_mode_from_string(j["feature_mode"].get<std::string>());
    c.max_delay = j.value("max_delay", c.max_delay);
    c.o1 = j.value("o1", c.o1);
    c.o2 = j.value("o2", c.o2);
    c.k1 = j.value("k1", c.k1);
    c.o3 = j.value("o3", c.o3);
    c.dropout = j.value("dropout", c.dropout);
    c.d1_units = j.value("d1_units", c.d1_units);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.l2 = j.value("l2", c.l2);
    c.leaky_alpha = j.value("leaky_alpha", c.leaky_alpha);
    c.branch_kernel = j.value("branch_kernel", c.branch_kernel);
    c.dilations = j.value("dilations", c.dilations);
    c.c5_filters = j.value("c5_filters", c.c5_filters);
    c.c5_kernel = j.value("c5_kernel", c.c5_kernel);
    c.c5_stride = j.value("c5_stride", c.c5_stride);
    c.batchnorm = j.value("batchnorm", c.batchnorm);
    c.maxpool_after_c6 = j.value("maxpool_after_c6", c.maxpool_after_c6);
    c.dropout_after_flatten = j.value("dropout_after_flatten", c.dropout_after_flatten);
    c.dropout_after_d1 = j.value("dropout_after_d1", c.dropout_after_d1);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

ModelConfig ModelConfig::best_tv() {
  ModelConfig c;
  c.feature_mode = FeatureMode::TV8;
  c.o1 = 32;
  c.o2 = 16;
  c.k1 = 3;
  c.o3 = 8;
  c.dropout = 0.5;
  return c;
}

ModelConfig ModelConfig::best_mfcc() {
  ModelConfig c;
  c.feature_mode = FeatureMode::MFCC12;
  c.o1 = 16;
  c.o2 = 8;
  c.k1 = 3;
  c.o3 = 16;
  c.dropout = 0.5;
  return c;
}

ModelConfig ModelConfig::best_fused() {
  ModelConfig c;
  c.feature_mode = FeatureMode::FUSED;
  c.o1 = 32;
  c.o2 = 8;
  c.k1 = 3;
  c.o3 = 8;
  c.dropout = 0.5;
  return c;
}

int TowerSpec::c5_height() const { return (height + c5_stride - 1) / c5_stride; }
int TowerSpec::c6_height() const { return c5_height() - k1 + 1; }
int TowerSpec::output_height() const { return maxpool ? c6_height() / 2 : c6_height(); }

std::int64_t TowerSpec::parameter_count() const {
  const std::int64_t bn = batchnorm ? 2 : 0;
  const auto branches = static_cast<std::int64_t>(dilations.size());
  std::int64_t n = branches * (static_cast<std::int64_t>(input_channels) * branch_kernel * o1 + o1 + bn * o1);
  n += static_cast<std::int64_t>(branches * o1) * c5_kernel * c5_filters + c5_filters + bn * c5_filters;
  n += static_cast<std::int64_t>(c5_filters) * k1 * o2 + o2 + bn * o2;
  return n;
}

std::int64_t HeadSpec::parameter_count(int input_width) const {
  return static_cast<std::int64_t>(input_width) * d1_units + d1_units + static_cast<std::int64_t>(d1_units) * o3 +
         o3 + o3 + 1;
}

TowerSpec tower_spec(const ModelConfig& c, FeatureMode single_mode) {
  TowerSpec t;
  t.name = single_mode == FeatureMode::TV8 ? "tv" : "mfcc";
  const int m = track_channels(single_mode);
  t.input_channels = m * m;
  t.height = c.max_delay + 1;
  t.o1 = c.o1;
  t.o2 = c.o2;
  t.k1 = c.k1;
  t.branch_kernel = c.branch_kernel;
  t.dilations = c.dilations;
  t.c5_filters = c.c5_filters;
  t.c5_kernel = c.c5_kernel;
  t.c5_stride = c.c5_stride;
  t.batchnorm = c.batchnorm;
  t.maxpool = c.maxpool_after_c6;
  t.leaky_alpha = c.leaky_alpha;
  return t;
}

HeadSpec head_spec(const ModelConfig& c) {
  HeadSpec h;
  h.d1_units = c.d1_units;
  h.o3 = c.o3;
  h.dropout = c.dropout;
  h.l2 = c.l2;
  h.dropout_after_flatten = c.dropout_after_flatten;
  h.dropout_after_d1 = c.dropout_after_d1;
  return h;
}

std::int64_t parameter_count(const ModelConfig& config) {
  std::int64_t n = 0;
  int width = 0;
  for (FeatureMode m : tower_modes(config.feature_mode)) {
    const TowerSpec t = tower_spec(config, m);
    n += t.parameter_count();
    width += t.flatten_width();
  }
  return n + head_spec(config).parameter_count(width);
}

}  // namespace acfnet
