#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tinyvib {

enum class Label : std::uint8_t { Good = 0, Bad = 1 };

std::string_view to_string(Label label) noexcept;
Label parse_label(std::string_view text);

// Three equally long acceleration axes (x, y, z) at a common sample rate.
struct TimeSeries {
  std::array<std::vector<float>, 3> axes;
  double sample_rate = 8000.0;

  std::size_t length() const noexcept { return axes[0].size(); }
  void validate() const;
  bool operator==(const TimeSeries&) const = default;
};

struct Origin {
  std::string source;
  std::uint32_t segment = 0;
  std::uint32_t window = 0;

  std::string key() const;
  bool operator==(const Origin&) const = default;
};

// One-second labeled window.
struct TimeSeriesSample {
  TimeSeries series;
  Label label = Label::Good;
  Origin origin;

  bool operator==(const TimeSeriesSample&) const = default;
};

struct ChatterBand {
  double low_hz = 1200.0;
  double high_hz = 1800.0;
  double amplitude = 0.6;
};

// Synthetic milling vibration. Good samples carry harmonics of the tooth-pass
// frequency (base_freq * n_inserts) plus white noise; Bad samples add
// band-limited chatter energy.
struct SynthConfig {
  double sample_rate = 8000.0;
  double base_freq = 50.0;
  std::uint32_t n_inserts = 2;
  std::vector<double> harmonic_amps{1.0, 0.5, 0.25};
  ChatterBand chatter;
  std::uint32_t chatter_tones = 24;
  double noise_floor = 0.05;
  std::uint64_t seed = 42;

  double tooth_pass_hz() const noexcept { return base_freq * n_inserts; }
  void validate() const;
};

TimeSeriesSample synth_sample(Label label, const SynthConfig& cfg, std::uint64_t index);

// Good samples take indices [0, n_good), Bad samples [0, n_bad); output order
// is all Good then all Bad.
std::vector<TimeSeriesSample> synth_dataset(const SynthConfig& cfg, std::size_t n_good, std::size_t n_bad);

// Maximal runs whose centered sliding RMS (joint over the three axes) is at
// least `threshold`.
std::vector<TimeSeries> segment_movements(const TimeSeries& raw, std::size_t rms_window, double threshold);

// Start-aligned disjoint one-second windows; the remainder is dropped.
std::vector<TimeSeriesSample> window_segment(const TimeSeries& segment, Label label, const Origin& origin = {});

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Train count is ceil(ratio * n). When stratified, per-class train counts are
// allocated by largest remainder so they sum to the same total.
SplitIndices split_indices(std::span<const Label> labels, double train_ratio, std::uint64_t seed, bool stratified);

struct DatasetSplit {
  std::vector<TimeSeriesSample> train;
  std::vector<TimeSeriesSample> test;
  std::uint64_t seed = 0;
};

DatasetSplit split_dataset(std::span<const TimeSeriesSample> samples, double train_ratio, std::uint64_t seed,
                           bool stratified);

std::size_t train_count(std::size_t n, double train_ratio);

// --- on-disk formats -------------------------------------------------------

// Interleaved float32-LE (x, y, z) triplets with a `<path>.meta` sidecar.
void write_raw(const std::filesystem::path& path, const TimeSeries& series);
TimeSeries read_raw(const std::filesystem::path& path);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  Label label = Label::Good;
  Origin origin;
};

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Writes one raw file per sample plus `manifest.txt` into `dir`.
std::vector<ManifestEntry> save_dataset(const std::filesystem::path& dir, std::span<const TimeSeriesSample> samples);
std::vector<TimeSeriesSample> load_dataset(const std::filesystem::path& manifest);

}  // namespace tinyvib
