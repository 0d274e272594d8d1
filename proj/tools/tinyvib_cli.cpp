// tinyvib command line front end. Talks to the library only through tinyvib.h.
#include <tinyvib/tinyvib.h>

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Failure {
  std::string stage;
  tv_status status;
  std::string message;
};

void check(tv_status s, const std::string& stage) {
  if (s != TV_OK) throw Failure{stage, s, tv_last_error()};
}

void fail(const std::string& stage, const std::string& message) {
  throw Failure{stage, TV_ERR_INVALID_ARGUMENT, message};
}

struct StrDeleter {
  void operator()(char* p) const { tv_string_free(p); }
};
using CStr = std::unique_ptr<char, StrDeleter>;

struct ConfigDeleter {
  void operator()(tv_config* p) const { tv_config_free(p); }
};
struct DatasetDeleter {
  void operator()(tv_dataset* p) const { tv_dataset_free(p); }
};
struct ModelDeleter {
  void operator()(tv_model* p) const { tv_model_free(p); }
};
using Config = std::unique_ptr<tv_config, ConfigDeleter>;
using Dataset = std::unique_ptr<tv_dataset, DatasetDeleter>;
using Model = std::unique_ptr<tv_model, ModelDeleter>;

// Options shared by every subcommand.
struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  bool verbose = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "run configuration file (key = value)");
  cmd->add_option("--set", c.overrides, "override a config key, KEY=VALUE (repeatable)");
}

Config make_config(const Common& c, const std::string& stage) {
  tv_config* raw = nullptr;
  if (c.config_path.empty()) {
    check(tv_config_new(&raw), stage);
  } else {
    check(tv_config_load(c.config_path.c_str(), &raw), stage);
  }
  Config cfg(raw);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(stage, "--set expects KEY=VALUE, got '" + kv + "'");
    check(tv_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), stage);
  }
  return cfg;
}

void set(tv_config* cfg, const char* key, const std::string& value, const std::string& stage) {
  check(tv_config_set(cfg, key, value.c_str()), stage);
}

std::string get(const tv_config* cfg, const char* key, const std::string& stage) {
  char* out = nullptr;
  check(tv_config_get(cfg, key, &out), stage);
  return CStr(out).get();
}

std::uint64_t seed_of(const tv_config* cfg, const std::string& stage) {
  return std::stoull(get(cfg, "seed", stage));
}

Dataset load(const std::string& manifest, const std::string& stage) {
  tv_dataset* raw = nullptr;
  check(tv_dataset_load(manifest.c_str(), &raw), stage);
  return Dataset(raw);
}

Model load_model(const std::string& path, const std::string& stage) {
  tv_model* raw = nullptr;
  check(tv_model_load(path.c_str(), &raw), stage);
  return Model(raw);
}

int parse_label_arg(const std::string& s) {
  if (s == "good" || s == "Good" || s == "0") return TV_LABEL_GOOD;
  if (s == "bad" || s == "Bad" || s == "1") return TV_LABEL_BAD;
  fail("segment", "label must be good or bad, got '" + s + "'");
  return -1;
}

void write_text(const std::string& path, const std::string& text, const std::string& stage) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(stage, "cannot open " + path);
  f << text;
  if (!f) fail(stage, "write failed: " + path);
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tinyvib: vibration process monitoring on a tiny INT8 CNN"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tv_version()));

  // synth
  Common synth_c;
  std::size_t n_good = 0, n_bad = 0;
  std::optional<std::uint64_t> synth_seed;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic dataset");
  add_common(synth, synth_c);
  synth->add_option("--n-good", n_good, "number of good samples")->required();
  synth->add_option("--n-bad", n_bad, "number of bad samples")->required();
  synth->add_option("--seed", synth_seed, "seed (default: config seed)");
  synth->add_option("--out", synth_out, "output directory")->required();

  // segment
  Common seg_c;
  std::string seg_in, seg_out, seg_label = "good";
  std::size_t rms_window = 800;
  double threshold = 0.1;
  auto* segment = app.add_subcommand("segment", "cut a raw recording into labeled one-second windows");
  add_common(segment, seg_c);
  segment->add_option("--input", seg_in, "raw recording (interleaved f32le, with .meta sidecar)")->required();
  segment->add_option("--label", seg_label, "label for every window (good|bad)");
  segment->add_option("--rms-window", rms_window, "sliding RMS window in samples");
  segment->add_option("--threshold", threshold, "RMS threshold");
  segment->add_option("--out", seg_out, "output directory")->required();

  // split
  Common split_c;
  std::string split_manifest, split_out;
  std::optional<double> ratio;
  std::optional<std::uint64_t> split_seed;
  bool stratified = true;
  auto* split = app.add_subcommand("split", "split a manifest into train.txt and test.txt");
  add_common(split, split_c);
  split->add_option("--manifest", split_manifest, "dataset manifest")->required();
  split->add_option("--ratio", ratio, "train fraction (default: split.ratio)");
  split->add_option("--seed", split_seed, "seed (default: config seed)");
  split->add_flag("--stratified,!--no-stratified", stratified, "stratify by label");
  split->add_option("--out", split_out, "output directory")->required();

  // prep
  Common prep_c;
  std::string prep_manifest, prep_out;
  std::size_t prep_index = 0;
  auto* prep = app.add_subcommand("prep", "export the preprocessed features of one sample");
  add_common(prep, prep_c);
  prep->add_option("--manifest", prep_manifest, "dataset manifest")->required();
  prep->add_option("--index", prep_index, "sample index");
  prep->add_option("--out", prep_out, "feature file")->required();

  // train
  Common train_c;
  std::string train_manifest, train_out, train_history;
  auto* train = app.add_subcommand("train", "train the float CNN");
  add_common(train, train_c);
  train->add_option("--manifest", train_manifest, "training manifest")->required();
  train->add_option("--out", train_out, "model container")->required();
  train->add_option("--history", train_history, "history CSV (epoch,loss,acc,val_acc,lr)");

  // quantize
  Common quant_c;
  std::string quant_model, quant_manifest, quant_out;
  std::optional<std::size_t> n_calib;
  auto* quantize = app.add_subcommand("quantize", "post-training INT8 quantization");
  add_common(quantize, quant_c);
  quantize->add_option("--model", quant_model, "float model container")->required();
  quantize->add_option("--manifest", quant_manifest, "calibration pool manifest")->required();
  quantize->add_option("--calib", n_calib, "calibration samples (default: quant.calib_samples)");
  quantize->add_option("--out", quant_out, "quantized model container")->required();

  // eval
  Common eval_c;
  std::string eval_model, eval_manifest;
  bool eval_int8 = false;
  auto* eval = app.add_subcommand("eval", "accuracy on a manifest");
  add_common(eval, eval_c);
  eval->add_option("--model", eval_model, "model container")->required();
  eval->add_option("--manifest", eval_manifest, "test manifest")->required();
  eval->add_flag("--int8", eval_int8, "use the integer pipeline");

  // bench
  Common bench_c;
  std::string bench_model, bench_manifest, bench_out, bench_trace;
  std::size_t bench_index = 0;
  std::optional<std::size_t> bench_reps;
  auto* bench = app.add_subcommand("bench", "per-stage latency breakdown");
  add_common(bench, bench_c);
  bench->add_option("--model", bench_model, "quantized model container")->required();
  bench->add_option("--manifest", bench_manifest, "dataset manifest")->required();
  bench->add_option("--index", bench_index, "sample index");
  bench->add_option("--reps", bench_reps, "repetitions (default: bench.reps)");
  bench->add_option("--trace", bench_trace, "optional power trace CSV");
  bench->add_option("--out", bench_out, "report CSV (text report goes to stdout)");

  // energy
  Common energy_c;
  std::string energy_trace;
  std::optional<double> v2, dv;
  double r_shunt = 10.0;
  std::optional<double> t_ms;
  auto* energy = app.add_subcommand("energy", "power and energy per inference from a shunt trace");
  add_common(energy, energy_c);
  energy->add_option("--trace", energy_trace, "trace CSV");
  energy->add_option("--v2", v2, "constant supply voltage V2 (instead of --trace)");
  energy->add_option("--dv", dv, "constant shunt drop V1 - V2 (instead of --trace)");
  energy->add_option("--r", r_shunt, "shunt resistance in ohm (with --v2/--dv)");
  energy->add_option("--t-infer-ms", t_ms, "inference time in ms (default: energy.t_infer_ms)");

  // run
  Common run_c;
  auto* run = app.add_subcommand("run", "full pipeline: synth, split, train, quantize, evaluate, bench");
  add_common(run, run_c);
  run->add_flag("-v,--verbose", run_c.verbose, "progress on stderr");

  // validate
  Common val_c;
  bool emit = false;
  auto* validate = app.add_subcommand("validate", "check a run configuration");
  add_common(validate, val_c);
  validate->add_flag("--emit", emit, "print the effective configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const std::string st = "synth";
      auto cfg = make_config(synth_c, st);
      if (synth_seed) set(cfg.get(), "seed", std::to_string(*synth_seed), st);
      tv_dataset* raw = nullptr;
      check(tv_dataset_synth(cfg.get(), n_good, n_bad, &raw), st);
      Dataset ds(raw);
      check(tv_dataset_save(ds.get(), synth_out.c_str()), st);
      std::cout << "synth: " << n_good + n_bad << " samples (" << n_good << " good, " << n_bad << " bad) -> "
                << synth_out << "/manifest.txt\n";
    } else if (segment->parsed()) {
      const std::string st = "segment";
      tv_dataset* raw = nullptr;
      std::size_t n_seg = 0;
      check(tv_segment_recording(seg_in.c_str(), rms_window, threshold, parse_label_arg(seg_label), &raw, &n_seg),
            st);
      Dataset ds(raw);
      std::size_t n = 0;
      check(tv_dataset_size(ds.get(), &n), st);
      check(tv_dataset_save(ds.get(), seg_out.c_str()), st);
      std::cout << "segment: " << n_seg << " segments, " << n << " windows -> " << seg_out << "/manifest.txt\n";
    } else if (split->parsed()) {
      const std::string st = "split";
      auto cfg = make_config(split_c, st);
      const double r = ratio ? *ratio : std::stod(get(cfg.get(), "split.ratio", st));
      const std::uint64_t seed = split_seed ? *split_seed : seed_of(cfg.get(), st);
      std::size_t n_train = 0, n_test = 0;
      check(tv_manifest_split(split_manifest.c_str(), r, seed, stratified ? 1 : 0, split_out.c_str(), &n_train,
                              &n_test),
            st);
      std::cout << "split: train=" << n_train << " test=" << n_test << " -> " << split_out << "\n";
    } else if (prep->parsed()) {
      const std::string st = "prep";
      auto cfg = make_config(prep_c, st);
      auto ds = load(prep_manifest, st);
      check(tv_preprocess_export(cfg.get(), ds.get(), prep_index, prep_out.c_str()), st);
      std::cout << "prep: sample " << prep_index << " -> " << prep_out << "\n";
    } else if (train->parsed()) {
      const std::string st = "train";
      auto cfg = make_config(train_c, st);
      auto ds = load(train_manifest, st);
      tv_model* raw = nullptr;
      check(tv_model_train(cfg.get(), ds.get(), &raw), st);
      Model model(raw);
      check(tv_model_save(model.get(), train_out.c_str()), st);
      if (!train_history.empty()) {
        char* csv = nullptr;
        check(tv_model_history_csv(model.get(), &csv), st);
        write_text(train_history, CStr(csv).get(), st);
      }
      char* stop = nullptr;
      check(tv_model_metadata(model.get(), "train.stop_epoch", &stop), st);
      std::cout << "train: stopped at epoch " << CStr(stop).get() << " -> " << train_out << "\n";
    } else if (quantize->parsed()) {
      const std::string st = "quantize";
      auto cfg = make_config(quant_c, st);
      auto model = load_model(quant_model, st);
      auto pool = load(quant_manifest, st);
      const std::size_t n = n_calib ? *n_calib : std::stoull(get(cfg.get(), "quant.calib_samples", st));
      check(tv_model_quantize(model.get(), pool.get(), n, seed_of(cfg.get(), st)), st);
      check(tv_model_save(model.get(), quant_out.c_str()), st);
      std::size_t bytes = 0;
      check(tv_model_param_bytes(model.get(), &bytes), st);
      std::cout << "quantize: " << bytes << " parameter bytes (limit " << tv_param_budget_limit() << ") -> "
                << quant_out << "\n";
    } else if (eval->parsed()) {
      const std::string st = "eval";
      auto model = load_model(eval_model, st);
      auto ds = load(eval_manifest, st);
      double acc = 0.0;
      check(tv_model_evaluate(model.get(), ds.get(), eval_int8 ? 1 : 0, &acc), st);
      std::size_t n = 0;
      check(tv_dataset_size(ds.get(), &n), st);
      std::cout << "eval: precision=" << (eval_int8 ? "int8" : "float32") << " samples=" << n
                << " accuracy=" << acc << "\n";
    } else if (bench->parsed()) {
      const std::string st = "bench";
      auto cfg = make_config(bench_c, st);
      auto model = load_model(bench_model, st);
      auto ds = load(bench_manifest, st);
      const std::size_t reps = bench_reps ? *bench_reps : std::stoull(get(cfg.get(), "bench.reps", st));
      tv_stage_timings t{};
      check(tv_bench_stages(model.get(), ds.get(), bench_index, reps, &t), st);
      tv_energy_report e{};
      const tv_energy_report* ep = nullptr;
      if (!bench_trace.empty()) {
        const double tms = std::stod(get(cfg.get(), "energy.t_infer_ms", st));
        check(tv_energy_from_trace_file(bench_trace.c_str(), tms / 1000.0, &e), st);
        ep = &e;
      }
      char* text = nullptr;
      check(tv_report_text(&t, ep, model.get(), &text), st);
      std::cout << CStr(text).get();
      if (!bench_out.empty()) {
        char* csv = nullptr;
        check(tv_report_csv(&t, ep, model.get(), &csv), st);
        write_text(bench_out, CStr(csv).get(), st);
      }
    } else if (energy->parsed()) {
      const std::string st = "energy";
      auto cfg = make_config(energy_c, st);
      const double tms = t_ms ? *t_ms : std::stod(get(cfg.get(), "energy.t_infer_ms", st));
      tv_energy_report e{};
      if (!energy_trace.empty()) {
        check(tv_energy_from_trace_file(energy_trace.c_str(), tms / 1000.0, &e), st);
      } else if (v2 && dv) {
        const double a[1] = {*v2 + *dv}, b[1] = {*v2};
        check(tv_energy_compute(a, b, 1, 1.0, r_shunt, tms / 1000.0, &e), st);
      } else {
        fail(st, "give --trace or both --v2 and --dv");
      }
      char* text = nullptr;
      check(tv_report_text(nullptr, &e, nullptr, &text), st);
      std::cout << CStr(text).get();
    } else if (run->parsed()) {
      const std::string st = "run";
      auto cfg = make_config(run_c, st);
      tv_run_summary s{};
      check(tv_run_pipeline(cfg.get(), run_c.verbose ? 1 : 0, &s), st);
      std::cout << "run: train=" << s.n_train << " test=" << s.n_test << " float_acc=" << s.float_accuracy
                << " int8_acc=" << s.int8_accuracy << " param_bytes=" << s.param_bytes
                << " stop_epoch=" << s.stop_epoch << " config_hash=" << hex(s.config_hash)
                << " model_hash=" << hex(s.model_hash) << "\n";
    } else if (validate->parsed()) {
      const std::string st = "validate";
      auto cfg = make_config(val_c, st);
      std::size_t count = 0;
      char* report = nullptr;
      check(tv_config_validate(cfg.get(), &count, &report), st);
      CStr r(report);
      if (emit) {
        char* text = nullptr;
        check(tv_config_emit(cfg.get(), &text), st);
        std::cout << CStr(text).get();
      }
      if (count > 0) {
        std::cerr << r.get();
        std::cerr << "error: stage=validate code=invalid_argument violations=" << count << "\n";
        return TV_ERR_INVALID_ARGUMENT;
      }
      std::uint64_t h = 0;
      check(tv_config_hash(cfg.get(), &h), st);
      std::cout << "validate: ok config_hash=" << hex(h) << "\n";
    }
  } catch (const Failure& f) {
    std::cerr << "error: stage=" << f.stage << " code=" << tv_status_name(f.status) << " message=" << f.message
              << "\n";
    return static_cast<int>(f.status);
  } catch (const std::exception& e) {
    std::cerr << "error: stage=cli code=invalid_argument message=" << e.what() << "\n";
    return TV_ERR_INVALID_ARGUMENT;
  }
  return 0;
}
