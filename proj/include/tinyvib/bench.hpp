#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tinyvib/dsp.hpp"
#include "tinyvib/nn.hpp"
#include "tinyvib/signals.hpp"

namespace tinyvib {

enum class Stage : std::size_t {
  Normalize = 0,
  Spectrogram,
  AvgPool,
  LogScale,
  Transpose,
  Int8Quantize,
  CnnInference,
};

inline constexpr std::size_t kStageCount = 7;

// Pipeline order.
std::string_view stage_name(Stage stage) noexcept;
std::string_view stage_description(Stage stage) noexcept;

enum class Statistic { Median, Mean };

struct StageTimings {
  std::array<std::int64_t, kStageCount> ns{};
  std::int64_t end_to_end_ns = 0;
  std::size_t repetitions = 0;
  Statistic statistic = Statistic::Median;

  std::int64_t operator[](Stage s) const noexcept { return ns[static_cast<std::size_t>(s)]; }
  std::int64_t stage_sum() const noexcept;
  bool operator==(const StageTimings&) const = default;
};

// Runs the seven stages in order on the same sample `reps` times, single
// threaded, and reports per-stage medians. End-to-end time is measured in a
// separate untimed-by-stage pass per repetition.
StageTimings time_stages(const TimeSeries& sample, const ModelArtifact& model, const Preprocessor& prep,
                         std::size_t reps);

struct PowerTrace {
  std::vector<double> v1;
  std::vector<double> v2;
  double sample_rate = 10000.0;
  double r_shunt = 10.0;

  void validate() const;
};

struct EnergyReport {
  double vdd_avg = 0.0;  // V
  double idd_avg = 0.0;  // A
  double p_avg = 0.0;    // W
  double epi = 0.0;      // J
  double t_infer = 0.0;  // s
  bool operator==(const EnergyReport&) const = default;
};

// V_DD = V2, I_DD = (V1 - V2) / R, P = mean(V_DD) * mean(I_DD), EPI = P * t.
EnergyReport energy_from_trace(const PowerTrace& trace, double t_infer);

// First line "sample_rate=<Hz>,r_shunt=<ohm>", optional "v1,v2" header, then rows.
PowerTrace read_trace_csv(const std::filesystem::path& path);
void write_trace_csv(const std::filesystem::path& path, const PowerTrace& trace);

struct MemorySummary {
  std::size_t param_bytes = 0;
  std::size_t activation_bytes = 0;
  std::size_t budget_bytes = kParamBudgetBytes;
  bool operator==(const MemorySummary&) const = default;
};

struct BenchReport {
  std::optional<StageTimings> timings;
  std::optional<EnergyReport> energy;
  std::optional<MemorySummary> memory;
  std::vector<std::pair<std::string, std::string>> info;  // free-form run facts, emitted in order
  bool operator==(const BenchReport&) const = default;
};

MemorySummary memory_summary(const ModelArtifact& model);

// CSV with header "section,key,value"; row order is fixed.
std::string report_csv(const BenchReport& report);
BenchReport parse_report_csv(std::string_view csv);
std::string report_text(const BenchReport& report);

}  // namespace tinyvib
