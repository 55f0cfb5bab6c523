// acfnet: featurize, train, evaluate, grid-search, synth.
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "acfnet/io_util.hpp"
#include "acfnet/pipeline.hpp"
#include "acfnet/synthetic.hpp"
#include "acfnet/training.hpp"

using namespace acfnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void log(const char* cmd, const std::string& msg) {
  std::fprintf(stderr, "[%s] %s\n", cmd, msg.c_str());
}

// Seed handling shared by every command: a missing --seed draws one.
struct Seed {
  std::optional<std::uint64_t> given;
  std::uint64_t value() {
    if (!given) given = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
    return *given;
  }
};

struct RunManifest {
  std::string command;
  std::string config_path;
  json inputs = json::object();
  json outputs = json::object();
  std::optional<std::uint64_t> seed;
  std::vector<std::string> argv;

  void write(const std::string& dir) const {
    json j;
    j["command"] = command;
    j["config"] = config_path.empty() ? json(nullptr) : json(config_path);
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["timestamp"] = timestamp();
    j["tool_version"] = kVersion;
    j["argv"] = argv;
    fs::create_directories(dir);
    write_file_atomic((fs::path(dir) / ("run_" + command + ".json")).string(), j.dump(2) + "\n");
  }
};

std::string join(const fs::path& dir, const std::string& name) { return (dir / name).string(); }

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  Seed seed;
  SynthSpec spec;
  bool mfcc_analog = false;
  std::string database = "SYNTH";
};

int run_synth(SynthArgs& a, RunManifest& m) {
  a.spec.seed = a.seed.value();
  a.spec.database = database_from_string(a.database);
  if (a.mfcc_analog) a.spec.secondary = weak_mfcc_analog();
  const auto corpus = generate(a.spec);
  const std::string manifest = write_corpus(a.out, corpus);
  log("synth", "wrote " + std::to_string(corpus.size()) + " recordings to " + manifest);
  m.seed = a.spec.seed;
  m.inputs = {{"speakers_per_class", a.spec.speakers_per_class},
              {"recordings_per_speaker", a.spec.recordings_per_speaker},
              {"duration", {a.spec.min_duration, a.spec.max_duration}},
              {"delays", a.spec.primary.delays},
              {"gain", a.spec.primary.gain},
              {"noise", a.spec.primary.noise},
              {"mfcc_analog", a.mfcc_analog},
              {"database", a.database}};
  m.outputs = {{"manifest", manifest}};
  m.write(a.out);
  return 0;
}

// ---------------------------------------------------------------- featurize

struct FeaturizeArgs {
  std::vector<std::string> manifests;
  std::string out;
  std::string mode = "tv8";
  std::string agreement = "same-level";
  int jobs = 1;
  int max_delay = 50;
};

int run_featurize(FeaturizeArgs& a, RunManifest& m) {
  AgreementMode agree = AgreementMode::SameLevel;
  if (a.agreement == "same-class") agree = AgreementMode::SameClass;
  else if (a.agreement != "same-level") throw ConfigError("--agreement must be same-level or same-class");

  // Paths from several manifests are made absolute against their own directory.
  std::vector<RecordingRecord> records;
  std::set<std::string> ids;
  for (const auto& path : a.manifests) {
    const std::string base = fs::absolute(fs::path(path)).parent_path().string();
    for (auto r : read_manifest(path, agree)) {
      if (!ids.insert(r.recording_id).second) throw FormatError("recording '" + r.recording_id + "' listed twice");
      r.path = resolve_path(r.path, base);
      r.audio_path = resolve_path(r.audio_path, base);
      r.mfcc_path = resolve_path(r.mfcc_path, base);
      records.push_back(std::move(r));
    }
  }
  FeaturizeOptions opts{feature_mode_from_string(a.mode), a.max_delay, a.jobs};
  fs::create_directories(a.out);
  const auto result = featurize(records, "", a.out, opts);
  for (const auto& is : result.issues) {
    log("featurize", std::string(is.failure ? "error: " : "warning: ") + is.recording_id + ": " + is.message);
  }
  log("featurize", std::to_string(result.entries.size()) + " segments from " + std::to_string(records.size()) +
                       " recordings, " + std::to_string(result.failures()) + " failures");
  m.inputs = {{"manifests", a.manifests}, {"feature_mode", a.mode}, {"max_delay", a.max_delay}};
  m.outputs = {{"index", join(a.out, "index.jsonl")},
               {"segments", result.entries.size()},
               {"failures", result.failures()}};
  m.write(a.out);
  return result.failures() > 0 ? kExitFailure : 0;
}

// ---------------------------------------------------------------- train / grid-search shared

struct DataArgs {
  std::string index;
  std::string split;
  std::optional<std::uint64_t> split_seed;
  std::vector<double> ratios{0.8, 0.1, 0.1};
};

struct LoadedData {
  SegmentIndex index;
  DatasetSplit split;
  SplitSamples parts;
  std::string train_databases;
};

std::string databases_of(std::span<const SegmentSample> samples) {
  std::set<std::string> names;
  for (const auto& s : samples) names.insert(to_string(s.meta.database));
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : "&") + n;
  return out;
}

LoadedData load_data(const DataArgs& a, FeatureMode mode, std::uint64_t seed, const char* cmd) {
  LoadedData d;
  d.index = read_segment_index(a.index);
  if (d.index.entries.empty()) throw ConfigError("segment index " + a.index + " is empty");
  if (!a.split.empty()) {
    d.split = read_split(a.split);
  } else {
    if (a.ratios.size() != 3) throw ConfigError("--ratios needs three values");
    const std::uint64_t s = a.split_seed.value_or(mix_seed(seed, 7));
    d.split = make_split(d.index.split_items(), {a.ratios[0], a.ratios[1], a.ratios[2]}, s);
  }
  assert_disjoint(d.split, d.index.recordings());
  std::set<std::string> wanted;
  for (const auto* part : {&d.split.train, &d.split.validation, &d.split.test}) wanted.insert(part->begin(), part->end());
  const auto samples = load_segments(d.index, mode, wanted);
  d.parts = split_samples(samples, d.split);
  d.train_databases = databases_of(d.parts.train);
  log(cmd, "segments: train " + std::to_string(d.parts.train.size()) + ", validation " +
               std::to_string(d.parts.validation.size()) + ", test " + std::to_string(d.parts.test.size()));
  if (d.parts.train.empty() || d.parts.validation.empty()) throw ConfigError("train or validation split is empty");
  return d;
}

// Default configs follow the index; explicit configs and checkpoints must agree with it.
void match_max_delay(ModelConfig& c, const LoadedData& d, bool adopt) {
  const int delay = static_cast<int>(d.parts.train.front().acfs.front().data.cols()) - 1;
  if (c.max_delay == delay) return;
  if (!adopt) {
    throw ConfigError("model expects max delay " + std::to_string(c.max_delay) + " but the index has " +
                      std::to_string(delay));
  }
  c.max_delay = delay;
  c.validate();
}

ModelConfig load_model_config(const std::string& path, const std::string& mode_flag) {
  ModelConfig c;
  if (!path.empty()) {
    json j;
    try {
      j = json::parse(read_file_text(path));
    } catch (const json::exception& e) {
      throw ConfigError("config " + path + ": " + e.what());
    }
    if (!mode_flag.empty()) j["feature_mode"] = mode_flag;
    c = ModelConfig::from_json(j);
  } else {
    const FeatureMode m = feature_mode_from_string(mode_flag.empty() ? "tv8" : mode_flag);
    c = m == FeatureMode::TV8 ? ModelConfig::best_tv() : m == FeatureMode::MFCC12 ? ModelConfig::best_mfcc()
                                                                                 : ModelConfig::best_fused();
  }
  return c;
}

json report_json(const EvaluationReport& r) {
  return {{"accuracy", r.accuracy},
          {"auc_roc", std::isfinite(r.auc_roc) ? json(r.auc_roc) : json(nullptr)},
          {"f1_depressed", r.f1_depressed},
          {"f1_nondepressed", r.f1_nondepressed},
          {"tp", r.counts.tp},
          {"fp", r.counts.fp},
          {"tn", r.counts.tn},
          {"fn", r.counts.fn},
          {"n_depressed", r.n_depressed},
          {"n_nondepressed", r.n_nondepressed},
          {"threshold", r.threshold},
          {"warnings", r.warnings}};
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  DataArgs data;
  std::string out;
  std::string config;
  std::string mode;
  std::string resume;
  Seed seed;
  std::optional<int> max_epochs;
};

int run_train(TrainArgs& a, RunManifest& m) {
  const fs::path out(a.out);
  fs::create_directories(out);
  std::optional<Trainer> trainer;
  ModelConfig config;
  std::string log_text;
  int resumed_at = 0;
  if (!a.resume.empty()) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(a.resume);
    config = checkpoint_config(ckpt);
    if (!a.mode.empty() && feature_mode_from_string(a.mode) != config.feature_mode) {
      throw ConfigError("--feature-mode " + a.mode + " does not match the checkpoint (" +
                        to_string(config.feature_mode) + ")");
    }
    a.seed.given = config.seed;
    trainer.emplace(Trainer::resume(ckpt));
    if (a.max_epochs) trainer->set_max_epochs(*a.max_epochs);
    resumed_at = trainer->stopper().epoch();
    if (a.data.split.empty() && fs::exists(out / "split.json")) a.data.split = join(out, "split.json");
    if (fs::exists(out / "train_log.jsonl")) log_text = read_file_text(join(out, "train_log.jsonl"));
    log("train", "resuming " + a.resume + " after epoch " + std::to_string(resumed_at));
  } else {
    config = load_model_config(a.config, a.mode);
    config.seed = a.seed.value();
    if (a.max_epochs) config.max_epochs = *a.max_epochs;
    config.validate();
  }

  LoadedData d = load_data(a.data, config.feature_mode, config.seed, "train");
  match_max_delay(config, d, a.config.empty() && !trainer);
  PreparedData prep;
  if (trainer) {
    assert_disjoint(d.parts.train, d.parts.validation, d.parts.test);
    const auto stats = load_norm_stats(nn::load_checkpoint(a.resume));
    prep.stats = stats;
    prep.train = to_dataset(d.parts.train, stats);
    prep.validation = to_dataset(d.parts.validation, stats);
    prep.test = to_dataset(d.parts.test, stats);
  } else {
    prep = prepare_datasets(d.parts.train, d.parts.validation, d.parts.test);
    trainer.emplace(config, class_weights(prep.train.labels()), prep.stats);
  }
  write_split(join(out, "split.json"), d.split);

  const auto started = std::chrono::steady_clock::now();
  const TrainOutcome outcome = trainer->run(prep.train, prep.validation, [&](const EpochRecord& r) {
    json j{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"validation_loss", r.validation_loss},
           {"timestamp", timestamp()}};
    log_text += j.dump() + "\n";
    write_file_atomic(join(out, "train_log.jsonl"), log_text);
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %d train %.5f val %.5f", r.epoch, r.train_loss, r.validation_loss);
    log("train", buf);
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  auto stamp = [&](nn::Checkpoint c) {
    c.config["data"] = {{"index", a.data.index}, {"train_databases", d.train_databases}};
    return c;
  };
  nn::save_checkpoint(join(out, "last.ckpt"), stamp(outcome.last));
  // A resumed run that never improved keeps the earlier best checkpoint.
  const bool improved = outcome.report.best_epoch > resumed_at;
  if (improved || !fs::exists(out / "model.ckpt")) nn::save_checkpoint(join(out, "model.ckpt"), stamp(outcome.best));

  Network<float> best = load_network(nn::load_checkpoint(join(out, "model.ckpt")));
  json report;
  report["train"] = outcome.report.to_json();
  report["seconds"] = seconds;
  report["validation"] = report_json(evaluate(best, prep.validation).overall);
  if (prep.test.size() > 0) report["test"] = report_json(evaluate(best, prep.test).overall);
  write_file_atomic(join(out, "report.json"), report.dump(2) + "\n");
  log("train", "stopped at epoch " + std::to_string(outcome.report.stopped_epoch) + ", best epoch " +
                   std::to_string(outcome.report.best_epoch));

  m.config_path = a.config;
  m.seed = config.seed;
  m.inputs = {{"index", a.data.index}, {"split", a.data.split}, {"resume", a.resume},
              {"model", trainer->config().to_json()}};
  m.outputs = {{"checkpoint", join(out, "model.ckpt")},
               {"last", join(out, "last.ckpt")},
               {"log", join(out, "train_log.jsonl")},
               {"split", join(out, "split.json")},
               {"report", join(out, "report.json")}};
  m.write(a.out);
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint;
  std::string index;
  std::string split;
  std::string subset = "all";
  std::string out;
  double threshold = 0.5;
  bool by_recording = false;
};

int run_evaluate(EvaluateArgs& a, RunManifest& m) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(a.checkpoint);
  const ModelConfig config = checkpoint_config(ckpt);
  const SegmentIndex index = read_segment_index(a.index);

  std::set<std::string> ids;
  if (a.subset != "all") {
    if (a.split.empty()) throw ConfigError("--subset " + a.subset + " needs --split");
    const DatasetSplit split = read_split(a.split);
    const std::vector<std::string>* part = a.subset == "train"        ? &split.train
                                           : a.subset == "validation" ? &split.validation
                                           : a.subset == "test"       ? &split.test
                                                                      : nullptr;
    if (!part) throw ConfigError("--subset must be train, validation, test or all");
    if (part->empty()) throw ConfigError("subset " + a.subset + " is empty");
    ids.insert(part->begin(), part->end());
  }
  // Raises ConfigError when the index lacks the checkpoint's feature streams.
  const auto samples = load_segments(index, config.feature_mode, ids);
  if (samples.empty()) throw ConfigError("no segments selected for evaluation");
  const auto stats = load_norm_stats(ckpt);
  for (std::size_t t = 0; t < stats.size(); ++t) {
    if (samples.front().acfs[t].data.rows() != stats[t].mean.rows() ||
        samples.front().acfs[t].data.cols() != stats[t].mean.cols()) {
      throw ConfigError("feature shape does not match the checkpoint's normalization statistics");
    }
  }
  const Dataset data = to_dataset(samples, stats);
  Network<float> net = load_network(ckpt);
  auto scored = score(net, data);
  if (a.by_recording) scored = aggregate_by_recording(scored);
  const EvaluationSummary s = summarize(scored, a.threshold);

  const std::string feats = to_string(config.feature_mode);
  const std::string train = ckpt.config.contains("data") ? ckpt.config["data"].value("train_databases", "?") : "?";
  std::string table = std::string(kReportHeader) + "\n";
  // one row per test database; the pooled numbers go to report.json only
  for (const auto& [db, r] : s.by_database) table += report_row(feats, train, to_string(db), r) + "\n";

  json j;
  j["feature_mode"] = feats;
  j["subset"] = a.subset;
  j["unit"] = a.by_recording ? "recording" : "segment";
  j["overall"] = report_json(s.overall);
  for (const auto& [db, r] : s.by_database) j["by_database"][to_string(db)] = report_json(r);
  std::string scores = "id\tdatabase\tlabel\tscore\n";
  for (const auto& x : scored) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", x.score);
    scores += x.id + "\t" + to_string(x.database) + "\t" + to_string(x.label) + "\t" + buf + "\n";
  }

  const fs::path out(a.out);
  fs::create_directories(out);
  write_file_atomic(join(out, "report.tsv"), table);
  write_file_atomic(join(out, "report.json"), j.dump(2) + "\n");
  write_file_atomic(join(out, "scores.tsv"), scores);
  std::fputs(table.c_str(), stdout);
  for (const auto& w : s.overall.warnings) log("evaluate", "warning: " + w);

  m.inputs = {{"checkpoint", a.checkpoint}, {"index", a.index}, {"split", a.split}, {"subset", a.subset},
              {"threshold", a.threshold}};
  m.outputs = {{"report", join(out, "report.tsv")}, {"json", join(out, "report.json")},
               {"scores", join(out, "scores.tsv")}};
  m.write(a.out);
  return 0;
}

// ---------------------------------------------------------------- grid-search

struct GridArgs {
  DataArgs data;
  std::string out;
  std::string config;
  std::string mode;
  std::string selection = "val_loss";
  Seed seed;
  int jobs = 1;
  std::optional<int> max_epochs;
};

int run_grid(GridArgs& a, RunManifest& m) {
  ModelConfig base = load_model_config(a.config, a.mode);
  base.seed = a.seed.value();
  if (a.max_epochs) base.max_epochs = *a.max_epochs;
  const SelectionMetric metric = selection_metric_from_string(a.selection);
  LoadedData d = load_data(a.data, base.feature_mode, base.seed, "grid-search");
  match_max_delay(base, d, a.config.empty());
  const PreparedData prep = prepare_datasets(d.parts.train, d.parts.validation, d.parts.test);
  const fs::path out(a.out);
  fs::create_directories(out);
  write_split(join(out, "split.json"), d.split);

  const GridRanges ranges;
  const std::size_t total = ranges.expand(base).size();
  const GridResult r = grid_search(prep.train, prep.validation, class_weights(prep.train.labels()), prep.stats, base,
                                   ranges, metric, a.jobs, [&](std::size_t i, const GridPoint& p) {
                                     char buf[160];
                                     std::snprintf(buf, sizeof buf, "point %zu/%zu o1=%d o2=%d k1=%d o3=%d dp=%.1f %s",
                                                   i + 1, total, p.config.o1, p.config.o2, p.config.k1, p.config.o3,
                                                   p.config.dropout, p.error.empty() ? "ok" : "FAILED");
                                     log("grid-search", buf);
                                   });

  std::string jsonl, tsv = "o1\to2\tk1\to3\tdropout\tseed\tbest_validation_loss\tvalidation_auc\tvalidation_accuracy\t"
                           "best_epoch\tstopped_epoch\terror\n";
  for (const auto& p : r.points) {
    jsonl += p.to_json().dump() + "\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d\t%d\t%d\t%d\t%.2f\t%llu\t%.6f\t%.6f\t%.6f\t%d\t%d\t", p.config.o1, p.config.o2,
                  p.config.k1, p.config.o3, p.config.dropout, static_cast<unsigned long long>(p.config.seed),
                  p.best_validation_loss, p.validation_auc, p.validation_accuracy, p.report.best_epoch,
                  p.report.stopped_epoch);
    tsv += buf + p.error + "\n";
  }
  write_file_atomic(join(out, "ledger.jsonl"), jsonl);
  write_file_atomic(join(out, "ledger.tsv"), tsv);
  nn::Checkpoint best = *r.best_checkpoint;
  best.config["data"] = {{"index", a.data.index}, {"train_databases", d.train_databases}};
  nn::save_checkpoint(join(out, "best.ckpt"), best);
  write_file_atomic(join(out, "best_config.json"), r.points[r.best].config.to_json().dump(2) + "\n");
  std::size_t failed = 0;
  for (const auto& p : r.points) failed += !p.error.empty();
  log("grid-search", "best point " + std::to_string(r.best + 1) + " of " + std::to_string(r.points.size()) + ", " +
                         std::to_string(failed) + " failed");

  m.config_path = a.config;
  m.seed = base.seed;
  m.inputs = {{"index", a.data.index}, {"split", a.data.split}, {"selection", a.selection}, {"jobs", a.jobs}};
  m.outputs = {{"ledger", join(out, "ledger.tsv")}, {"ledger_jsonl", join(out, "ledger.jsonl")},
               {"checkpoint", join(out, "best.ckpt")}, {"best_config", join(out, "best_config.json")}};
  m.write(a.out);
  return failed > 0 ? kExitFailure : 0;
}

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--index", d.index, "segment index (index.jsonl) written by featurize")->required()
      ->check(CLI::ExistingFile);
  auto* split = cmd->add_option("--split", d.split, "split file (JSON with train/validation/test recording ids)")
                    ->check(CLI::ExistingFile);
  cmd->add_option("--split-seed", d.split_seed, "seed for a fresh speaker-disjoint split")->excludes(split);
  cmd->add_option("--ratios", d.ratios, "train/validation/test ratios for a fresh split")->expected(3);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACF depression classifier: featurize, train, evaluate, grid-search, synth"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a labeled synthetic corpus (manifest + ACFT tracks)");
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--seed", synth.seed.given, "random seed (drawn and recorded when absent)");
  c_synth->add_option("--speakers", synth.spec.speakers_per_class, "speakers per class");
  c_synth->add_option("--recordings", synth.spec.recordings_per_speaker, "recordings per speaker");
  c_synth->add_option("--min-duration", synth.spec.min_duration, "shortest recording, seconds");
  c_synth->add_option("--max-duration", synth.spec.max_duration, "longest recording, seconds");
  c_synth->add_option("--channels", synth.spec.primary.channels, "channels of the main track");
  c_synth->add_option("--delays", synth.spec.primary.delays, "coupling delay in frames: nondepressed depressed")
      ->expected(2);
  c_synth->add_option("--gain", synth.spec.primary.gain, "coupling gain in [0, 1)");
  c_synth->add_option("--noise", synth.spec.primary.noise, "noise level");
  c_synth->add_option("--max-delay", synth.spec.max_delay, "largest ACF delay the corpus must support");
  c_synth->add_flag("--mfcc-analog", synth.mfcc_analog, "also write a 12-channel track with a weaker signal");
  c_synth->add_option("--database", synth.database, "database tag: SYNTH, MD1 or MD2");
  c_synth->add_option("--id-prefix", synth.spec.id_prefix, "prefix of speaker and recording ids");

  FeaturizeArgs feat;
  auto* c_feat = app.add_subcommand("featurize", "segment recordings and write per-segment ACF files");
  c_feat->add_option("--manifest", feat.manifests, "manifest (JSONL); repeat to merge corpora")
      ->required()->check(CLI::ExistingFile);
  c_feat->add_option("--out", feat.out, "output directory")->required();
  c_feat->add_option("--feature-mode", feat.mode, "tv8, mfcc12 or fused")
      ->check(CLI::IsMember({"tv8", "mfcc12", "fused"}));
  c_feat->add_option("--jobs", feat.jobs, "parallel recordings")->check(CLI::PositiveNumber);
  c_feat->add_option("--max-delay", feat.max_delay, "largest delay D")->check(CLI::PositiveNumber);
  c_feat->add_option("--agreement", feat.agreement, "how two clinical scores must agree: same-level or same-class");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train one model with early stopping");
  add_data_options(c_train, train.data);
  c_train->add_option("--out", train.out, "output directory")->required();
  c_train->add_option("--config", train.config, "model config JSON")->check(CLI::ExistingFile);
  c_train->add_option("--feature-mode", train.mode, "tv8, mfcc12 or fused")
      ->check(CLI::IsMember({"tv8", "mfcc12", "fused"}));
  c_train->add_option("--seed", train.seed.given, "random seed (drawn and recorded when absent)");
  c_train->add_option("--max-epochs", train.max_epochs, "epoch cap (default 300)")->check(CLI::PositiveNumber);
  c_train->add_option("--resume", train.resume, "continue from a last.ckpt")->check(CLI::ExistingFile);

  EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "score segments and write metric reports");
  c_eval->add_option("--checkpoint", eval.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--index", eval.index, "segment index")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--split", eval.split, "split file")->check(CLI::ExistingFile);
  c_eval->add_option("--subset", eval.subset, "train, validation, test or all");
  c_eval->add_option("--threshold", eval.threshold, "decision threshold")->check(CLI::Range(0.0, 1.0));
  c_eval->add_option("--out", eval.out, "output directory")->required();
  c_eval->add_flag("--by-recording", eval.by_recording, "average segment scores per recording (experimental)");

  GridArgs grid;
  auto* c_grid = app.add_subcommand("grid-search", "train every point of the 32-point grid");
  add_data_options(c_grid, grid.data);
  c_grid->add_option("--out", grid.out, "output directory")->required();
  c_grid->add_option("--config", grid.config, "base model config JSON")->check(CLI::ExistingFile);
  c_grid->add_option("--feature-mode", grid.mode, "tv8, mfcc12 or fused")
      ->check(CLI::IsMember({"tv8", "mfcc12", "fused"}));
  c_grid->add_option("--seed", grid.seed.given, "random seed (drawn and recorded when absent)");
  c_grid->add_option("--jobs", grid.jobs, "grid points trained in parallel")->check(CLI::PositiveNumber);
  c_grid->add_option("--selection", grid.selection, "val_loss, val_auc or val_accuracy");
  c_grid->add_option("--max-epochs", grid.max_epochs, "epoch cap per point")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  RunManifest manifest;
  manifest.argv.assign(argv, argv + argc);
  const char* name = "acfnet";
  try {
    if (c_synth->parsed()) {
      manifest.command = name = "synth";
      return run_synth(synth, manifest);
    }
    if (c_feat->parsed()) {
      manifest.command = name = "featurize";
      return run_featurize(feat, manifest);
    }
    if (c_train->parsed()) {
      manifest.command = name = "train";
      return run_train(train, manifest);
    }
    if (c_eval->parsed()) {
      manifest.command = name = "evaluate";
      return run_evaluate(eval, manifest);
    }
    if (c_grid->parsed()) {
      manifest.command = name = "grid-search";
      return run_grid(grid, manifest);
    }
  } catch (const ConfigError& e) {
    log(name, std::string("error: ") + e.what());
    return kExitUsage;
  } catch (const LeakageError& e) {
    log(name, std::string("refused: ") + e.what());
    return kExitUsage;
  } catch (const Error& e) {
    log(name, std::string("error: ") + e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    log(name, std::string("error: ") + e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
