// Times training on the default synthetic corpus.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "acfnet/pipeline.hpp"
#include "acfnet/synthetic.hpp"
#include "acfnet/training.hpp"

using namespace acfnet;

int main(int argc, char** argv) {
  const int epochs = argc > 1 ? std::atoi(argv[1]) : 3;
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;
  const double gain = argc > 3 ? std::atof(argv[3]) : 0.9;

  auto t0 = std::chrono::steady_clock::now();
  auto secs = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  SynthSpec spec;
  spec.seed = seed;
  spec.primary.gain = gain;
  const SampleSet set = featurize_corpus(generate(spec), FeatureMode::TV8, spec.max_delay);
  std::printf("corpus: %zu segments (%.1fs)\n", set.samples.size(), secs());
  const DatasetSplit split = make_split(set.items, {}, mix_seed(seed, 7));
  const SplitSamples parts = split_samples(set.samples, split);
  const auto data = prepare_datasets(parts.train, parts.validation, parts.test);
  ModelConfig cfg = ModelConfig::best_tv();
  cfg.seed = seed;
  cfg.max_epochs = epochs;
  Trainer trainer(cfg, class_weights(data.train.labels()), data.stats);
  const double start = secs();
  auto out = trainer.run(data.train, data.validation, [&](const EpochRecord& r) {
    std::printf("epoch %d train %.4f val %.4f (%.1fs)\n", r.epoch, r.train_loss, r.validation_loss, secs());
    std::fflush(stdout);
  });
  std::printf("train %zu val %zu test %zu; %.2fs/epoch\n", data.train.size(), data.validation.size(),
              data.test.size(), (secs() - start) / out.report.stopped_epoch);
  const auto summary = evaluate(trainer.network(), data.test);
  std::printf("test auc %.4f acc %.4f\n", summary.overall.auc_roc, summary.overall.accuracy);
}
