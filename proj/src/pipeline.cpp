#include "tinyvib/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "rng.hpp"
#include "tinyvib/error.hpp"

namespace fs = std::filesystem;

namespace tinyvib {

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

template <class F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::Internal, std::string(name) + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<LabeledFeatures> featurize(std::span<const TimeSeriesSample> samples, const Preprocessor& prep) {
  std::vector<LabeledFeatures> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({to_channels_last(prep(s.series)), s.label});
  return out;
}

void stamp_prep_metadata(ModelArtifact& model, const PreprocessConfig& prep) {
  auto& md = model.metadata;
  md["prep.alpha"] = fmt(prep.alpha);
  md["prep.eps"] = fmt(prep.eps);
  md["prep.nfft"] = std::to_string(prep.stft.nfft);
  md["prep.overlap"] = std::to_string(prep.stft.overlap);
  md["prep.pool_time"] = std::to_string(prep.pool_time);
  md["prep.pool_freq"] = std::to_string(prep.pool_freq);
  md["prep.norm"] = prep.norm == NormMode::Joint ? "joint" : "per_axis";
}

PreprocessConfig prep_from_metadata(const ModelArtifact& model) {
  RunConfig tmp;
  for (const char* key : {"prep.alpha", "prep.eps", "prep.nfft", "prep.overlap", "prep.pool_time", "prep.pool_freq",
                          "prep.norm"}) {
    const auto it = model.metadata.find(key);
    if (it == model.metadata.end()) {
      throw Error(ErrorCode::Format, std::string("model metadata lacks ") + key);
    }
    set_config_value(tmp, key, it->second);
  }
  tmp.prep.validate();
  return tmp.prep;
}

std::pair<ModelArtifact, TrainHistory> train_from_config(const RunConfig& cfg,
                                                         std::span<const TimeSeriesSample> train_set) {
  const Preprocessor prep(cfg.prep);
  const auto features = featurize(train_set, prep);
  Shape input = default_input_shape();
  if (!features.empty()) input = {features.front().x.d0, features.front().x.d1, features.front().x.d2};
  auto result = train(default_architecture(), input, features, cfg.train_config());
  stamp_prep_metadata(result.first, cfg.prep);
  result.first.metadata["config_hash"] = hex64(config_hash(cfg));
  result.first.metadata["seed"] = std::to_string(cfg.seed);
  return result;
}

ModelArtifact quantize_from_samples(ModelArtifact model, std::span<const TimeSeriesSample> pool, std::size_t n,
                                    std::uint64_t seed) {
  if (pool.empty() || n == 0) throw Error(ErrorCode::EmptyInput, "quantize: empty calibration set");
  const Preprocessor prep(prep_from_metadata(model));
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto rng = detail::make_stream(seed, 0xCA11B);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(n, idx.size()));
  std::vector<Tensor3> calib;
  calib.reserve(idx.size());
  for (std::size_t i : idx) calib.push_back(to_channels_last(prep(pool[i].series)));
  ModelArtifact out = quantize_model(std::move(model), calib);
  out.metadata["calibration_seed"] = std::to_string(seed);
  return out;
}

double evaluate_samples(const ModelArtifact& model, std::span<const TimeSeriesSample> samples, Precision precision) {
  const Preprocessor prep(prep_from_metadata(model));
  const auto features = featurize(samples, prep);
  return evaluate(model, features, precision);
}

RunSummary run_pipeline(const RunConfig& cfg, std::ostream* log) {
  auto say = [&](const std::string& msg) {
    if (log) *log << msg << std::endl;
  };
  stage("validate", [&] {
    const auto violations = validate_config(cfg);
    if (!violations.empty()) {
      std::string msg;
      for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v.field + ": " + v.message;
      throw Error(ErrorCode::InvalidArgument, msg);
    }
  });

  RunSummary sum;
  sum.config_hash = config_hash(cfg);

  const auto samples = stage("synth", [&] { return synth_dataset(cfg.synth_config(), cfg.n_good, cfg.n_bad); });
  say("synth: " + std::to_string(cfg.n_good) + " good + " + std::to_string(cfg.n_bad) + " bad samples");

  const auto split = stage("split", [&] { return split_dataset(samples, cfg.split_ratio, cfg.seed, cfg.stratified); });
  sum.n_train = split.train.size();
  sum.n_test = split.test.size();
  sum.n_train_good = static_cast<std::size_t>(
      std::count_if(split.train.begin(), split.train.end(), [](const auto& s) { return s.label == Label::Good; }));
  sum.n_test_good = static_cast<std::size_t>(
      std::count_if(split.test.begin(), split.test.end(), [](const auto& s) { return s.label == Label::Good; }));
  say("split: " + std::to_string(sum.n_train) + " train / " + std::to_string(sum.n_test) + " test");

  if (!cfg.dataset_dir.empty()) {
    stage("dataset", [&] {
      const auto entries = save_dataset(cfg.dataset_dir, samples);
      std::vector<Label> labels;
      for (const auto& s : samples) labels.push_back(s.label);
      const auto idx = split_indices(labels, cfg.split_ratio, cfg.seed, cfg.stratified);
      std::vector<ManifestEntry> tr, te;
      for (auto i : idx.train) tr.push_back(entries[i]);
      for (auto i : idx.test) te.push_back(entries[i]);
      write_manifest(fs::path(cfg.dataset_dir) / "train.txt", tr);
      write_manifest(fs::path(cfg.dataset_dir) / "test.txt", te);
    });
  }

  auto [model, history] = stage("train", [&] { return train_from_config(cfg, split.train); });
  sum.history = history;
  say("train: stopped at epoch " + std::to_string(history.stop_epoch) + " (" + history.stop_reason + ")");

  model = stage("quantize",
                [&] { return quantize_from_samples(std::move(model), split.train, cfg.calib_samples, cfg.seed); });
  sum.param_bytes = param_budget(model.layers);
  sum.activation_bytes = activation_bytes(model);

  stage("evaluate", [&] {
    sum.float_accuracy = evaluate_samples(model, split.test, Precision::Float32);
    sum.int8_accuracy = evaluate_samples(model, split.test, Precision::Int8);
  });
  say("evaluate: float " + fmt(sum.float_accuracy) + ", int8 " + fmt(sum.int8_accuracy));

  stage("write", [&] {
    const fs::path model_path(cfg.model_path);
    if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
    const std::string bytes = serialize_model(model);
    write_text(model_path, bytes);
    sum.model_hash = fnv1a64(bytes);
    sum.model_path = model_path.string();

    fs::create_directories(cfg.report_dir);
    std::ostringstream hist;
    write_history_csv(hist, history);
    sum.history_path = (fs::path(cfg.report_dir) / "history.csv").string();
    write_text(sum.history_path, hist.str());
  });

  stage("bench", [&] {
    const Preprocessor prep(prep_from_metadata(model));
    const TimeSeries& probe = split.test.empty() ? split.train.front().series : split.test.front().series;
    sum.timings = time_stages(probe, model, prep, cfg.bench_reps);

    BenchReport report;
    report.timings = sum.timings;
    report.memory = memory_summary(model);
    if (!cfg.trace_path.empty()) {
      report.energy = energy_from_trace(read_trace_csv(cfg.trace_path), cfg.energy_t_infer_ms / 1000.0);
    }
    report.info = {
        {"n_train", std::to_string(sum.n_train)},
        {"n_test", std::to_string(sum.n_test)},
        {"n_train_good", std::to_string(sum.n_train_good)},
        {"n_train_bad", std::to_string(sum.n_train - sum.n_train_good)},
        {"n_test_good", std::to_string(sum.n_test_good)},
        {"n_test_bad", std::to_string(sum.n_test - sum.n_test_good)},
        {"float_accuracy", fmt(sum.float_accuracy)},
        {"int8_accuracy", fmt(sum.int8_accuracy)},
        {"stop_epoch", std::to_string(history.stop_epoch)},
        {"config_hash", hex64(sum.config_hash)},
        {"model_fnv1a64", hex64(sum.model_hash)},
    };
    sum.report_path = (fs::path(cfg.report_dir) / "report.csv").string();
    write_text(sum.report_path, report_csv(report));
    write_text(fs::path(cfg.report_dir) / "report.txt", report_text(report));
  });
  say("bench: report written to " + sum.report_path);
  return sum;
}

}  // namespace tinyvib
