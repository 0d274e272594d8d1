#include "tinyvib/tinyvib.h"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <memory>
#include <new>
#include <optional>
#include <sstream>

#include "tinyvib/bench.hpp"
#include "tinyvib/config.hpp"
#include "tinyvib/dsp.hpp"
#include "tinyvib/error.hpp"
#include "tinyvib/nn.hpp"
#include "tinyvib/pipeline.hpp"
#include "tinyvib/signals.hpp"

struct tv_config {
  tinyvib::RunConfig cfg;
};

struct tv_dataset {
  std::vector<tinyvib::TimeSeriesSample> samples;
};

struct tv_model {
  tinyvib::ModelArtifact model;
  std::optional<tinyvib::TrainHistory> history;
};

namespace {

thread_local std::string g_last_error;

tv_status to_status(tinyvib::ErrorCode code) {
  using tinyvib::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return TV_ERR_INVALID_ARGUMENT;
    case ErrorCode::DegenerateInput: return TV_ERR_DEGENERATE_INPUT;
    case ErrorCode::ShapeMismatch: return TV_ERR_SHAPE_MISMATCH;
    case ErrorCode::EmptyInput: return TV_ERR_EMPTY_INPUT;
    case ErrorCode::Io: return TV_ERR_IO;
    case ErrorCode::Format: return TV_ERR_FORMAT;
    case ErrorCode::BudgetExceeded: return TV_ERR_BUDGET_EXCEEDED;
    case ErrorCode::MissingQuantization: return TV_ERR_MISSING_QUANTIZATION;
    case ErrorCode::Internal: return TV_ERR_INTERNAL;
  }
  return TV_ERR_INTERNAL;
}

tv_status fail(tv_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

// Runs body, translating exceptions into status codes.
template <class F>
tv_status guard(F&& body) noexcept {
  try {
    body();
    return TV_OK;
  } catch (const tinyvib::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TV_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(TV_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(TV_ERR_INTERNAL, "unknown exception");
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw tinyvib::Error(tinyvib::ErrorCode::InvalidArgument, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

tinyvib::Label to_label(int label) {
  if (label == TV_LABEL_GOOD) return tinyvib::Label::Good;
  if (label == TV_LABEL_BAD) return tinyvib::Label::Bad;
  throw tinyvib::Error(tinyvib::ErrorCode::InvalidArgument, "label must be TV_LABEL_GOOD or TV_LABEL_BAD");
}

tinyvib::TimeSeries from_planar(const float* planar, std::size_t n, double sample_rate) {
  require(planar, "planar");
  tinyvib::TimeSeries ts;
  ts.sample_rate = sample_rate;
  for (std::size_t a = 0; a < 3; ++a) ts.axes[a].assign(planar + a * n, planar + (a + 1) * n);
  ts.validate();
  return ts;
}

tinyvib::StageTimings from_c(const tv_stage_timings& t) {
  tinyvib::StageTimings out;
  for (std::size_t s = 0; s < tinyvib::kStageCount; ++s) out.ns[s] = t.stage_ns[s];
  out.end_to_end_ns = t.end_to_end_ns;
  out.repetitions = t.repetitions;
  return out;
}

tinyvib::EnergyReport from_c(const tv_energy_report& e) { return {e.vdd_avg, e.idd_avg, e.p_avg, e.epi, e.t_infer}; }

void to_c(const tinyvib::EnergyReport& e, tv_energy_report* out) {
  *out = {e.vdd_avg, e.idd_avg, e.p_avg, e.epi, e.t_infer};
}

tinyvib::BenchReport build_report(const tv_stage_timings* timings, const tv_energy_report* energy,
                                  const tv_model* model) {
  tinyvib::BenchReport r;
  if (timings) r.timings = from_c(*timings);
  if (energy) r.energy = from_c(*energy);
  if (model) {
    r.memory = tinyvib::memory_summary(model->model);
    const auto it = model->model.metadata.find("config_hash");
    if (it != model->model.metadata.end()) r.info.emplace_back("config_hash", it->second);
  }
  return r;
}

}  // namespace

extern "C" {

const char* tv_version(void) { return "0.1.0"; }

const char* tv_status_name(tv_status status) {
  switch (status) {
    case TV_OK: return "ok";
    case TV_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case TV_ERR_DEGENERATE_INPUT: return "degenerate_input";
    case TV_ERR_SHAPE_MISMATCH: return "shape_mismatch";
    case TV_ERR_EMPTY_INPUT: return "empty_input";
    case TV_ERR_IO: return "io";
    case TV_ERR_FORMAT: return "format";
    case TV_ERR_BUDGET_EXCEEDED: return "budget_exceeded";
    case TV_ERR_MISSING_QUANTIZATION: return "missing_quantization";
    case TV_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* tv_last_error(void) { return g_last_error.c_str(); }

void tv_string_free(char* s) { std::free(s); }

const char* tv_stage_name(size_t stage) {
  if (stage >= tinyvib::kStageCount) return nullptr;
  return tinyvib::stage_name(static_cast<tinyvib::Stage>(stage)).data();
}

size_t tv_param_budget_limit(void) { return tinyvib::kParamBudgetBytes; }

// --- config ---------------------------------------------------------------

tv_status tv_config_new(tv_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new tv_config{};
  });
}

tv_status tv_config_parse(const char* text, tv_config** out) {
  return guard([&] {
    require(text, "text");
    require(out, "out");
    *out = new tv_config{tinyvib::parse_config(text)};
  });
}

tv_status tv_config_load(const char* path, tv_config** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new tv_config{tinyvib::load_config(path)};
  });
}

tv_status tv_config_set(tv_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    tinyvib::set_config_value(cfg->cfg, key, value);
  });
}

tv_status tv_config_get(const tv_config* cfg, const char* key, char** value) {
  return guard([&] {
    require(cfg, "cfg");
    require(key, "key");
    require(value, "value");
    *value = dup_string(tinyvib::get_config_value(cfg->cfg, key));
  });
}

tv_status tv_config_emit(const tv_config* cfg, char** text) {
  return guard([&] {
    require(cfg, "cfg");
    require(text, "text");
    *text = dup_string(tinyvib::emit_config(cfg->cfg));
  });
}

tv_status tv_config_validate(const tv_config* cfg, size_t* count, char** report) {
  return guard([&] {
    require(cfg, "cfg");
    require(count, "count");
    const auto violations = tinyvib::validate_config(cfg->cfg);
    std::string text;
    for (const auto& v : violations) text += v.field + ": " + v.message + "\n";
    *count = violations.size();
    if (report) *report = dup_string(text);
  });
}

tv_status tv_config_hash(const tv_config* cfg, uint64_t* hash) {
  return guard([&] {
    require(cfg, "cfg");
    require(hash, "hash");
    *hash = tinyvib::config_hash(cfg->cfg);
  });
}

void tv_config_free(tv_config* cfg) { delete cfg; }

// --- datasets ---------------------------------------------------------------

tv_status tv_dataset_synth(const tv_config* cfg, size_t n_good, size_t n_bad, tv_dataset** out) {
  return guard([&] {
    require(cfg, "cfg");
    require(out, "out");
    *out = new tv_dataset{tinyvib::synth_dataset(cfg->cfg.synth_config(), n_good, n_bad)};
  });
}

tv_status tv_dataset_load(const char* manifest_path, tv_dataset** out) {
  return guard([&] {
    require(manifest_path, "manifest_path");
    require(out, "out");
    *out = new tv_dataset{tinyvib::load_dataset(manifest_path)};
  });
}

tv_status tv_dataset_save(const tv_dataset* ds, const char* dir) {
  return guard([&] {
    require(ds, "ds");
    require(dir, "dir");
    tinyvib::save_dataset(dir, ds->samples);
  });
}

tv_status tv_dataset_size(const tv_dataset* ds, size_t* n) {
  return guard([&] {
    require(ds, "ds");
    require(n, "n");
    *n = ds->samples.size();
  });
}

tv_status tv_dataset_count_label(const tv_dataset* ds, int label, size_t* n) {
  return guard([&] {
    require(ds, "ds");
    require(n, "n");
    const auto l = to_label(label);
    *n = static_cast<size_t>(
        std::count_if(ds->samples.begin(), ds->samples.end(), [&](const auto& s) { return s.label == l; }));
  });
}

tv_status tv_dataset_sample(const tv_dataset* ds, size_t i, float* buf, size_t capacity, size_t* samples_per_axis,
                            double* sample_rate, int* label) {
  return guard([&] {
    require(ds, "ds");
    if (i >= ds->samples.size()) {
      throw tinyvib::Error(tinyvib::ErrorCode::InvalidArgument, "sample index out of range");
    }
    const auto& s = ds->samples[i];
    const std::size_t n = s.series.length();
    if (samples_per_axis) *samples_per_axis = n;
    if (sample_rate) *sample_rate = s.series.sample_rate;
    if (label) *label = static_cast<int>(s.label);
    if (buf) {
      if (capacity < 3 * n) throw tinyvib::Error(tinyvib::ErrorCode::ShapeMismatch, "buffer too small");
      for (std::size_t a = 0; a < 3; ++a) std::copy(s.series.axes[a].begin(), s.series.axes[a].end(), buf + a * n);
    }
  });
}

tv_status tv_dataset_split(const tv_dataset* ds, double ratio, uint64_t seed, int stratified, tv_dataset** train,
                           tv_dataset** test) {
  return guard([&] {
    require(ds, "ds");
    require(train, "train");
    require(test, "test");
    auto split = tinyvib::split_dataset(ds->samples, ratio, seed, stratified != 0);
    auto tr = std::make_unique<tv_dataset>(tv_dataset{std::move(split.train)});
    *test = new tv_dataset{std::move(split.test)};
    *train = tr.release();
  });
}

void tv_dataset_free(tv_dataset* ds) { delete ds; }

tv_status tv_manifest_split(const char* manifest_path, double ratio, uint64_t seed, int stratified,
                            const char* out_dir, size_t* n_train, size_t* n_test) {
  return guard([&] {
    require(manifest_path, "manifest_path");
    require(out_dir, "out_dir");
    namespace fs = std::filesystem;
    const auto entries = tinyvib::read_manifest(manifest_path);
    std::vector<tinyvib::Label> labels;
    for (const auto& e : entries) labels.push_back(e.label);
    const auto idx = tinyvib::split_indices(labels, ratio, seed, stratified != 0);

    // Paths are rewritten relative to out_dir.
    const fs::path src_dir = fs::absolute(fs::path(manifest_path)).parent_path();
    fs::create_directories(out_dir);
    const fs::path dst_dir = fs::absolute(out_dir);
    auto rebase = [&](const tinyvib::ManifestEntry& e) {
      tinyvib::ManifestEntry r = e;
      if (!fs::path(e.path).is_absolute()) r.path = fs::relative(src_dir / e.path, dst_dir).generic_string();
      return r;
    };
    std::vector<tinyvib::ManifestEntry> tr, te;
    for (auto i : idx.train) tr.push_back(rebase(entries[i]));
    for (auto i : idx.test) te.push_back(rebase(entries[i]));
    tinyvib::write_manifest(dst_dir / "train.txt", tr);
    tinyvib::write_manifest(dst_dir / "test.txt", te);
    if (n_train) *n_train = tr.size();
    if (n_test) *n_test = te.size();
  });
}

tv_status tv_segment_recording(const char* raw_path, size_t rms_window, double threshold, int label,
                               tv_dataset** out, size_t* n_segments) {
  return guard([&] {
    require(raw_path, "raw_path");
    require(out, "out");
    const auto l = to_label(label);
    const auto raw = tinyvib::read_raw(raw_path);
    const auto segments = tinyvib::segment_movements(raw, rms_window, threshold);
    const std::string source = std::filesystem::path(raw_path).filename().string();
    std::vector<tinyvib::TimeSeriesSample> samples;
    for (std::size_t s = 0; s < segments.size(); ++s) {
      auto w = tinyvib::window_segment(segments[s], l, {source, static_cast<std::uint32_t>(s), 0});
      samples.insert(samples.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    if (n_segments) *n_segments = segments.size();
    *out = new tv_dataset{std::move(samples)};
  });
}

// --- preprocessing -----------------------------------------------------------

tv_status tv_preprocess(const tv_config* cfg, const float* planar, size_t samples_per_axis, double sample_rate,
                        float* out, size_t capacity, size_t dims[3]) {
  return guard([&] {
    require(cfg, "cfg");
    require(out, "out");
    const auto t = tinyvib::preprocess(from_planar(planar, samples_per_axis, sample_rate), cfg->cfg.prep);
    if (capacity < t.size()) throw tinyvib::Error(tinyvib::ErrorCode::ShapeMismatch, "output buffer too small");
    std::copy(t.data.begin(), t.data.end(), out);
    if (dims) {
      dims[0] = t.d0;
      dims[1] = t.d1;
      dims[2] = t.d2;
    }
  });
}

tv_status tv_preprocess_export(const tv_config* cfg, const tv_dataset* ds, size_t index, const char* path) {
  return guard([&] {
    require(cfg, "cfg");
    require(ds, "ds");
    require(path, "path");
    if (index >= ds->samples.size()) {
      throw tinyvib::Error(tinyvib::ErrorCode::InvalidArgument, "sample index out of range");
    }
    const auto& p = cfg->cfg.prep;
    const auto t = tinyvib::preprocess(ds->samples[index].series, p);
    tinyvib::write_feature_file(path, t,
                                {{"stage", "log_pooled"},
                                 {"layout", "axis,time,freq"},
                                 {"alpha", shortest(p.alpha)},
                                 {"eps", shortest(p.eps)},
                                 {"pool", std::to_string(p.pool_time) + "x" + std::to_string(p.pool_freq)},
                                 {"label", std::string(tinyvib::to_string(ds->samples[index].label))}});
  });
}

// --- models ------------------------------------------------------------------

tv_status tv_model_train(const tv_config* cfg, const tv_dataset* train, tv_model** out) {
  return guard([&] {
    require(cfg, "cfg");
    require(train, "train");
    require(out, "out");
    auto [model, history] = tinyvib::train_from_config(cfg->cfg, train->samples);
    *out = new tv_model{std::move(model), std::move(history)};
  });
}

tv_status tv_model_history_csv(const tv_model* model, char** csv) {
  return guard([&] {
    require(model, "model");
    require(csv, "csv");
    if (!model->history) throw tinyvib::Error(tinyvib::ErrorCode::InvalidArgument, "model has no training history");
    std::ostringstream s;
    tinyvib::write_history_csv(s, *model->history);
    *csv = dup_string(s.str());
  });
}

tv_status tv_model_quantize(tv_model* model, const tv_dataset* calib_pool, size_t n_calib, uint64_t seed) {
  return guard([&] {
    require(model, "model");
    require(calib_pool, "calib_pool");
    model->model = tinyvib::quantize_from_samples(model->model, calib_pool->samples, n_calib, seed);
  });
}

tv_status tv_model_load(const char* path, tv_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new tv_model{tinyvib::load_model(path), std::nullopt};
  });
}

tv_status tv_model_save(const tv_model* model, const char* path) {
  return guard([&] {
    require(model, "model");
    require(path, "path");
    tinyvib::save_model(path, model->model);
  });
}

tv_status tv_model_is_quantized(const tv_model* model, int* quantized) {
  return guard([&] {
    require(model, "model");
    require(quantized, "quantized");
    *quantized = model->model.quantized() ? 1 : 0;
  });
}

tv_status tv_model_param_bytes(const tv_model* model, size_t* bytes) {
  return guard([&] {
    require(model, "model");
    require(bytes, "bytes");
    *bytes = tinyvib::param_budget(model->model.layers);
  });
}

tv_status tv_model_activation_bytes(const tv_model* model, size_t* bytes) {
  return guard([&] {
    require(model, "model");
    require(bytes, "bytes");
    *bytes = tinyvib::activation_bytes(model->model);
  });
}

tv_status tv_model_metadata(const tv_model* model, const char* key, char** value) {
  return guard([&] {
    require(model, "model");
    require(key, "key");
    require(value, "value");
    const auto it = model->model.metadata.find(key);
    if (it == model->model.metadata.end()) {
      throw tinyvib::Error(tinyvib::ErrorCode::InvalidArgument, std::string("no metadata key ") + key);
    }
    *value = dup_string(it->second);
  });
}

tv_status tv_model_evaluate(const tv_model* model, const tv_dataset* ds, int int8, double* accuracy) {
  return guard([&] {
    require(model, "model");
    require(ds, "ds");
    require(accuracy, "accuracy");
    *accuracy = tinyvib::evaluate_samples(model->model, ds->samples,
                                          int8 ? tinyvib::Precision::Int8 : tinyvib::Precision::Float32);
  });
}

tv_status tv_model_predict(const tv_model* model, const float* planar, size_t samples_per_axis, double sample_rate,
                           int int8, int* label) {
  return guard([&] {
    require(model, "model");
    require(label, "label");
    const tinyvib::Preprocessor prep(tinyvib::prep_from_metadata(model->model));
    const auto x = tinyvib::to_channels_last(prep(from_planar(planar, samples_per_axis, sample_rate)));
    *label = static_cast<int>(
        tinyvib::predict(model->model, x, int8 ? tinyvib::Precision::Int8 : tinyvib::Precision::Float32));
  });
}

void tv_model_free(tv_model* model) { delete model; }

// --- benchmarking -------------------------------------------------------------

tv_status tv_bench_stages(const tv_model* model, const tv_dataset* ds, size_t index, size_t reps,
                          tv_stage_timings* out) {
  return guard([&] {
    require(model, "model");
    require(ds, "ds");
    require(out, "out");
    if (index >= ds->samples.size()) {
      throw tinyvib::Error(tinyvib::ErrorCode::InvalidArgument, "sample index out of range");
    }
    const tinyvib::Preprocessor prep(tinyvib::prep_from_metadata(model->model));
    const auto t = tinyvib::time_stages(ds->samples[index].series, model->model, prep, reps);
    for (std::size_t s = 0; s < tinyvib::kStageCount; ++s) out->stage_ns[s] = t.ns[s];
    out->end_to_end_ns = t.end_to_end_ns;
    out->repetitions = t.repetitions;
  });
}

tv_status tv_energy_compute(const double* v1, const double* v2, size_t n, double sample_rate, double r_shunt,
                            double t_infer, tv_energy_report* out) {
  return guard([&] {
    require(out, "out");
    if (n > 0) {
      require(v1, "v1");
      require(v2, "v2");
    }
    tinyvib::PowerTrace trace;
    if (n > 0) {
      trace.v1.assign(v1, v1 + n);
      trace.v2.assign(v2, v2 + n);
    }
    trace.sample_rate = sample_rate;
    trace.r_shunt = r_shunt;
    to_c(tinyvib::energy_from_trace(trace, t_infer), out);
  });
}

tv_status tv_energy_from_trace_file(const char* path, double t_infer, tv_energy_report* out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    to_c(tinyvib::energy_from_trace(tinyvib::read_trace_csv(path), t_infer), out);
  });
}

tv_status tv_report_csv(const tv_stage_timings* timings, const tv_energy_report* energy, const tv_model* model,
                        char** csv) {
  return guard([&] {
    require(csv, "csv");
    *csv = dup_string(tinyvib::report_csv(build_report(timings, energy, model)));
  });
}

tv_status tv_report_text(const tv_stage_timings* timings, const tv_energy_report* energy, const tv_model* model,
                         char** text) {
  return guard([&] {
    require(text, "text");
    *text = dup_string(tinyvib::report_text(build_report(timings, energy, model)));
  });
}

// --- pipeline -------------------------------------------------------------------

tv_status tv_run_pipeline(const tv_config* cfg, int verbose, tv_run_summary* out) {
  return guard([&] {
    require(cfg, "cfg");
    const auto s = tinyvib::run_pipeline(cfg->cfg, verbose ? &std::cerr : nullptr);
    if (out) {
      out->n_train = s.n_train;
      out->n_test = s.n_test;
      out->n_train_good = s.n_train_good;
      out->n_test_good = s.n_test_good;
      out->float_accuracy = s.float_accuracy;
      out->int8_accuracy = s.int8_accuracy;
      out->param_bytes = s.param_bytes;
      out->activation_bytes = s.activation_bytes;
      out->stop_epoch = s.history.stop_epoch;
      out->config_hash = s.config_hash;
      out->model_hash = s.model_hash;
    }
  });
}

}  // extern "C"
