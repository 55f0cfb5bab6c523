#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "acfnet/pipeline.hpp"
#include "acfnet/synthetic.hpp"
#include "acfnet/training.hpp"

using namespace acfnet;

namespace {

// Tiny corpus and model so that a few epochs take well under a second.
struct Fixture {
  PreparedData data;
  ClassWeights weights;
  ModelConfig config;
  DatasetSplit split;
  std::vector<SegmentSample> all;

  Fixture() {
    SynthSpec spec;
    spec.speakers_per_class = 5;
    spec.recordings_per_speaker = 1;
    spec.min_duration = 20.0;
    spec.max_duration = 30.0;
    spec.max_delay = 20;
    spec.seed = 3;
    const SampleSet set = featurize_corpus(generate(spec), FeatureMode::TV8, spec.max_delay);
    all = set.samples;
    split = make_split(set.items, {0.6, 0.2, 0.2}, 4);
    const SplitSamples parts = split_samples(set.samples, split);
    data = prepare_datasets(parts.train, parts.validation, parts.test);
    weights = class_weights(data.train.labels());
    config = ModelConfig::best_tv();
    config.max_delay = 20;
    config.o1 = 4;
    config.o2 = 4;
    config.d1_units = 8;
    config.batch_size = 8;
    config.learning_rate = 1e-3;
    config.seed = 17;
    config.max_epochs = 4;
  }
};

std::vector<double> random_losses(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v;
  double level = 1.0;
  const int k = kind(rng);
  for (int e = 0; e < n; ++e) {
    switch (k) {
      case 0: v.push_back(u(rng)); break;                              // noise
      case 1: level *= 0.97 + 0.05 * u(rng); v.push_back(level); break;  // noisy decay
      case 2: v.push_back(std::round(u(rng) * 4) / 4); break;          // many exact ties
      default: v.push_back(1.0 / (1.0 + e) + (u(rng) < 0.05 ? 0.5 : 0.0)); break;
    }
  }
  return v;
}

}  // namespace

TEST_CASE("early stopping agrees with the reference automaton") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto losses = random_losses(rng, 300);
    EarlyStopping s(15, 300);
    std::size_t e = 0;
    while (!s.update(losses[e])) ++e;
    const auto want = oracle::early_stop(losses, 15, 300);
    CHECK(s.epoch() == want.stopped_epoch);
    CHECK(s.best_epoch() == want.best_epoch);
    CHECK(s.best_loss() == losses[static_cast<std::size_t>(want.best_epoch - 1)]);
  }
}

TEST_CASE("early stopping edge cases") {
  EarlyStopping flat(15, 300);
  int epochs = 0;
  while (!flat.update(0.7)) ++epochs;
  CHECK(flat.epoch() == 16);
  CHECK(flat.best_epoch() == 1);

  EarlyStopping falling(15, 300);
  for (int e = 1; e <= 300; ++e) {
    const bool stop = falling.update(1.0 / e);
    CHECK(stop == (e == 300));
  }
  CHECK(falling.best_epoch() == 300);
  CHECK_THROWS_AS(falling.update(0.0), TrainingError);

  EarlyStopping bad(15, 300);
  CHECK_THROWS_AS(bad.update(std::nan("")), TrainingError);

  EarlyStopping s(3, 10);
  s.update(1.0);
  s.update(1.5);
  const auto r = EarlyStopping::from_json(s.to_json());
  CHECK(r.epoch() == 2);
  CHECK(r.wait() == 1);
  CHECK(r.best_loss() == 1.0);

  EarlyStopping capped(15, 2);
  capped.update(1.0);
  CHECK(capped.update(0.5));
  capped.set_max_epochs(4);
  CHECK(!capped.stopped());
  CHECK(!capped.update(0.4));
  CHECK(capped.update(0.3));
}

TEST_CASE("make_batch stacks examples") {
  Fixture f;
  const std::vector<std::size_t> idx{2, 0};
  const auto batch = make_batch<float>(f.data.train, idx);
  REQUIRE(batch.size() == 1);
  CHECK(batch[0].shape() == nn::Shape{2, 64, 21, 1});
  CHECK(batch[0].at(0, 5, 7, 0) == f.data.train.inputs[2][0](5, 7));
  CHECK(batch[0].at(1, 63, 20, 0) == f.data.train.inputs[0][0](63, 20));
}

TEST_CASE("training restores the best epoch") {
  Fixture f;
  Trainer t(f.config, f.weights, f.data.stats);
  std::vector<int> seen;
  const auto out = t.run(f.data.train, f.data.validation, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  CHECK(seen == std::vector<int>{1, 2, 3, 4});
  CHECK(out.report.stopped_epoch == 4);
  CHECK(out.report.best_epoch <= out.report.stopped_epoch);
  CHECK(out.report.restored_best);
  CHECK(out.report.validation_loss.size() == 4);
  const double best = *std::min_element(out.report.validation_loss.begin(), out.report.validation_loss.end());
  CHECK(out.report.best_validation_loss == best);
  CHECK(weighted_loss(t.network(), f.data.validation, f.weights) == best);
  auto reloaded = load_network(out.best);
  CHECK(weighted_loss(reloaded, f.data.validation, f.weights) == best);
}

TEST_CASE("fixed seed training is bit-identical") {
  Fixture f;
  Trainer a(f.config, f.weights, f.data.stats);
  Trainer b(f.config, f.weights, f.data.stats);
  const auto oa = a.run(f.data.train, f.data.validation);
  const auto ob = b.run(f.data.train, f.data.validation);
  CHECK(nn::encode_checkpoint(oa.last) == nn::encode_checkpoint(ob.last));
  CHECK(nn::encode_checkpoint(oa.best) == nn::encode_checkpoint(ob.best));
  CHECK(oa.report.train_loss == ob.report.train_loss);

  ModelConfig other = f.config;
  other.seed = 18;
  Trainer c(other, f.weights, f.data.stats);
  CHECK(c.run(f.data.train, f.data.validation).report.train_loss != oa.report.train_loss);
}

TEST_CASE("resuming continues the same trajectory and epoch numbering") {
  Fixture f;
  Trainer straight(f.config, f.weights, f.data.stats);
  const auto full = straight.run(f.data.train, f.data.validation);

  ModelConfig half = f.config;
  half.max_epochs = 2;
  Trainer first(half, f.weights, f.data.stats);
  const auto part = first.run(f.data.train, f.data.validation);
  const auto bytes = nn::encode_checkpoint(part.last);
  Trainer resumed = Trainer::resume(nn::decode_checkpoint(bytes));
  resumed.set_max_epochs(4);
  std::vector<int> seen;
  const auto rest = resumed.run(f.data.train, f.data.validation, [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  CHECK(seen == std::vector<int>{3, 4});
  CHECK(rest.report.train_loss == full.report.train_loss);
  CHECK(rest.report.validation_loss == full.report.validation_loss);
  CHECK(rest.report.first_epoch == 1);
  CHECK(nn::encode_checkpoint(rest.last) == nn::encode_checkpoint(full.last));
}

TEST_CASE("checkpoint round trip reproduces forward outputs bit for bit") {
  Fixture f;
  Trainer t(f.config, f.weights, f.data.stats);
  const auto out = t.run(f.data.train, f.data.validation);
  auto net = load_network(nn::decode_checkpoint(nn::encode_checkpoint(out.best)));
  const auto a = score(t.network(), f.data.test);
  const auto b = score(net, f.data.test);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].score == b[i].score);
  const auto stats = load_norm_stats(out.best);
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].mean == f.data.stats[0].mean);
  CHECK(stats[0].std == f.data.stats[0].std);
  CHECK(checkpoint_config(out.best).to_json() == f.config.to_json());
}

TEST_CASE("weighted loss scales linearly with the class weights") {
  Fixture f;
  auto net = build_network<float>(f.config);
  const double one = weighted_loss(net, f.data.validation, {1.0, 1.0});
  const double three = weighted_loss(net, f.data.validation, {3.0, 3.0});
  CHECK(three == doctest::Approx(3.0 * one).epsilon(1e-12));

  // First-step gradient of the data term scales the same way.
  const std::vector<std::size_t> idx{0, 1, 2};
  const auto batch = make_batch<float>(f.data.train, idx);
  std::vector<double> y;
  for (std::size_t i : idx) y.push_back(label_value(f.data.train.meta[i].label));
  auto grads = [&](double w) {
    net.zero_grad();
    const auto p = net.forward(batch, {});
    net.backward(nn::weighted_bce_batch(p, y, std::vector<double>(3, w)).grad);
    std::vector<float> g;
    for (auto* prm : net.parameters()) g.insert(g.end(), prm->grad.data(), prm->grad.data() + prm->grad.size());
    return g;
  };
  const auto g1 = grads(1.0);
  const auto g2 = grads(2.0);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-5));
}

TEST_CASE("non-finite losses abort with diagnostics") {
  Fixture f;
  Dataset broken = f.data.train;
  broken.inputs[0][0](0, 0) = std::numeric_limits<float>::quiet_NaN();
  Trainer t(f.config, f.weights, f.data.stats);
  try {
    t.run(broken, f.data.validation);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    INFO(std::string(e.what()));
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("leakage guards") {
  Fixture f;
  const SplitSamples parts = split_samples(f.all, f.split);
  CHECK_NOTHROW(assert_disjoint(parts.train, parts.validation, parts.test));

  // Shared speaker.
  auto val = parts.validation;
  val.push_back(parts.train.front());
  CHECK_THROWS_AS(assert_disjoint(parts.train, val, parts.test), LeakageError);
  CHECK_THROWS_AS(prepare_datasets(parts.train, val, parts.test), LeakageError);

  // Same speaker id in train and test even with different segments.
  auto test = parts.test;
  test.front().meta.speaker_id = parts.train.front().meta.speaker_id;
  CHECK_THROWS_AS(assert_disjoint(parts.train, parts.validation, test), LeakageError);

  DatasetSplit bad = f.split;
  bad.test.push_back(bad.train.front());
  std::vector<RecordingRecord> recs;
  std::set<std::string> seen;
  for (const auto& s : f.all) {
    if (!seen.insert(s.meta.recording_id).second) continue;
    RecordingRecord r;
    r.recording_id = s.meta.recording_id;
    r.speaker_id = s.meta.speaker_id;
    recs.push_back(r);
  }
  CHECK_NOTHROW(assert_disjoint(f.split, recs));
  CHECK_THROWS_AS(assert_disjoint(bad, recs), LeakageError);

  // Norm stats depend on the training part only.
  auto noisy_val = parts.validation;
  for (auto& s : noisy_val) s.acfs[0].data.array() += 10.0;
  const auto p1 = prepare_datasets(parts.train, parts.validation, parts.test);
  const auto p2 = prepare_datasets(parts.train, noisy_val, parts.test);
  CHECK(p1.stats[0].mean == p2.stats[0].mean);
  CHECK(p1.stats[0].std == p2.stats[0].std);
  CHECK(p1.stats[0].mean == fit_tower_stats(parts.train)[0].mean);
}

TEST_CASE("grid expansion covers the search ranges") {
  const GridRanges g;
  const auto configs = g.expand(ModelConfig::best_tv());
  CHECK(configs.size() == 32);
  std::set<std::tuple<int, int, int, int, double>> keys;
  for (const auto& c : configs) keys.insert({c.o1, c.o2, c.k1, c.o3, c.dropout});
  CHECK(keys.size() == 32);
  CHECK(keys.count({32, 16, 3, 8, 0.5}) == 1);
  CHECK(keys.count({16, 8, 3, 16, 0.5}) == 1);
  CHECK(keys.count({32, 8, 3, 8, 0.5}) == 1);
  CHECK(selection_metric_from_string("val_auc") == SelectionMetric::ValidationAuc);
  CHECK_THROWS_AS(selection_metric_from_string("f1"), ConfigError);
}

TEST_CASE("grid search selects the lowest validation loss") {
  Fixture f;
  GridRanges g;
  g.o1 = {2, 4};
  g.o2 = {4};
  g.k1 = {3, 4};
  g.o3 = {4};
  g.dropout = {0.4};
  ModelConfig base = f.config;
  base.max_epochs = 2;
  std::size_t reported = 0;
  const auto r = grid_search(f.data.train, f.data.validation, f.weights, f.data.stats, base, g,
                             SelectionMetric::ValidationLoss, 2, [&](std::size_t, const GridPoint&) { ++reported; });
  REQUIRE(r.points.size() == 4);
  CHECK(reported == 4);
  for (const auto& p : r.points) {
    CHECK(p.error.empty());
    CHECK(r.points[r.best].best_validation_loss <= p.best_validation_loss);
    CHECK(p.to_json().contains("best_validation_loss"));
  }
  REQUIRE(r.best_checkpoint.has_value());
  CHECK(checkpoint_config(*r.best_checkpoint).o1 == r.points[r.best].config.o1);

  // Failing points are recorded and the rest continue.
  GridRanges broken = g;
  broken.k1 = {3, 40};
  const auto rb = grid_search(f.data.train, f.data.validation, f.weights, f.data.stats, base, broken);
  int failed = 0;
  for (const auto& p : rb.points) failed += !p.error.empty();
  CHECK(failed == 2);
  CHECK(rb.points[rb.best].error.empty());
}
