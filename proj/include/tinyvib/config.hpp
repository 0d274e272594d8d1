#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tinyvib/dsp.hpp"
#include "tinyvib/nn.hpp"
#include "tinyvib/signals.hpp"

namespace tinyvib {

// One canonical record per run. `seed` drives synthesis, splitting,
// weight init, shuffling and calibration sampling.
struct RunConfig {
  std::uint64_t seed = 42;
  std::size_t n_good = 698;
  std::size_t n_bad = 415;
  SynthConfig synth;
  double split_ratio = 0.783;
  bool stratified = true;
  PreprocessConfig prep;
  TrainConfig train;
  std::size_t calib_samples = 128;
  std::size_t bench_reps = 20;
  double energy_t_infer_ms = 84.5;
  std::string dataset_dir;
  std::string model_path = "model.tvml";
  std::string report_dir = "report";
  std::string trace_path;

  // Copies of the sub-configs with the run seed applied.
  SynthConfig synth_config() const;
  TrainConfig train_config() const;
};

struct Violation {
  std::string field;
  std::string message;
};

// "key = value" lines; '#' starts a comment. Unknown keys and malformed
// values are Format errors.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);
std::string emit_config(const RunConfig& cfg);

std::vector<std::string> config_keys();
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& cfg, std::string_view key);

std::vector<Violation> validate_config(const RunConfig& cfg);

// FNV-1a 64 over the canonical emitted text, excluding output paths.
std::uint64_t config_hash(const RunConfig& cfg);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace tinyvib
