#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tinyvib/bench.hpp"
#include "tinyvib/config.hpp"
#include "tinyvib/nn.hpp"

namespace tinyvib {

// Preprocessed [h][w][c] features for the CNN.
std::vector<LabeledFeatures> featurize(std::span<const TimeSeriesSample> samples, const Preprocessor& prep);

// Preprocessing settings travel with the model so inference reproduces them.
void stamp_prep_metadata(ModelArtifact& model, const PreprocessConfig& prep);
PreprocessConfig prep_from_metadata(const ModelArtifact& model);

// Trains the default architecture on `train` using the run's settings.
std::pair<ModelArtifact, TrainHistory> train_from_config(const RunConfig& cfg,
                                                         std::span<const TimeSeriesSample> train);

// Calibrates on up to `n` samples drawn (seeded) from `pool`.
ModelArtifact quantize_from_samples(ModelArtifact model, std::span<const TimeSeriesSample> pool, std::size_t n,
                                    std::uint64_t seed);

double evaluate_samples(const ModelArtifact& model, std::span<const TimeSeriesSample> samples, Precision precision);

struct RunSummary {
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t n_train_good = 0;
  std::size_t n_test_good = 0;
  double float_accuracy = 0.0;
  double int8_accuracy = 0.0;
  std::size_t param_bytes = 0;
  std::size_t activation_bytes = 0;
  TrainHistory history;
  StageTimings timings;
  std::uint64_t config_hash = 0;
  std::uint64_t model_hash = 0;  // FNV-1a of the container bytes
  std::string model_path;
  std::string history_path;
  std::string report_path;
};

// synth -> split -> train -> quantize -> evaluate -> bench, writing the model
// container and history/report CSVs. Errors carry the failing stage name.
RunSummary run_pipeline(const RunConfig& cfg, std::ostream* log = nullptr);

}  // namespace tinyvib
