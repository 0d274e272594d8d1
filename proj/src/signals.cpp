#include "tinyvib/signals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "rng.hpp"
#include "tinyvib/error.hpp"

namespace tinyvib {

std::string_view to_string(Label label) noexcept { return label == Label::Good ? "good" : "bad"; }

Label parse_label(std::string_view text) {
  if (text == "good" || text == "Good" || text == "0") return Label::Good;
  if (text == "bad" || text == "Bad" || text == "1") return Label::Bad;
  throw Error(ErrorCode::Format, "unknown label '" + std::string(text) + "'");
}

void TimeSeries::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
  }
  if (axes[1].size() != axes[0].size() || axes[2].size() != axes[0].size()) {
    throw Error(ErrorCode::ShapeMismatch, "time series axes differ in length");
  }
}

std::string Origin::key() const { return source + "#" + std::to_string(segment) + "#" + std::to_string(window); }

void SynthConfig::validate() const {
  const double nyquist = sample_rate / 2.0;
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "synth: sample_rate must be positive");
  if (!(base_freq > 0.0) || base_freq >= nyquist) {
    throw Error(ErrorCode::InvalidArgument, "synth: base_freq must lie in (0, sample_rate/2)");
  }
  if (n_inserts == 0) throw Error(ErrorCode::InvalidArgument, "synth: n_inserts must be >= 1");
  for (std::size_t h = 0; h < harmonic_amps.size(); ++h) {
    if (!(harmonic_amps[h] >= 0.0)) throw Error(ErrorCode::InvalidArgument, "synth: harmonic amplitudes must be >= 0");
    if (harmonic_amps[h] > 0.0 && tooth_pass_hz() * static_cast<double>(h + 1) >= nyquist) {
      throw Error(ErrorCode::InvalidArgument,
                  "synth: harmonic " + std::to_string(h + 1) + " lies above the Nyquist frequency");
    }
  }
  if (!(chatter.amplitude >= 0.0)) throw Error(ErrorCode::InvalidArgument, "synth: chatter amplitude must be >= 0");
  if (!(chatter.low_hz > 0.0) || !(chatter.high_hz > chatter.low_hz) || chatter.high_hz >= nyquist) {
    throw Error(ErrorCode::InvalidArgument, "synth: chatter band must satisfy 0 < low < high < sample_rate/2");
  }
  if (chatter_tones == 0) throw Error(ErrorCode::InvalidArgument, "synth: chatter_tones must be >= 1");
  if (!(noise_floor >= 0.0)) throw Error(ErrorCode::InvalidArgument, "synth: noise_floor must be >= 0");
}

namespace {

// Sensor axes see the spindle with different coupling.
constexpr std::array<double, 3> kAxisGain{1.0, 0.7, 0.45};

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

TimeSeriesSample synth_sample(Label label, const SynthConfig& cfg, std::uint64_t index) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(std::llround(cfg.sample_rate));
  auto rng = detail::make_stream(cfg.seed, static_cast<std::uint64_t>(label) + 1, index);
  std::normal_distribution<double> noise(0.0, 1.0);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  TimeSeriesSample out;
  out.label = label;
  out.origin = Origin{"synth-" + std::string(to_string(label)) + "-" + std::to_string(index), 0, 0};
  out.series.sample_rate = cfg.sample_rate;

  struct Tone {
    double freq;
    double amp;
    double phase;
  };

  for (std::size_t a = 0; a < 3; ++a) {
    const double gain = kAxisGain[a] * (0.8 + 0.4 * unit_uniform(rng));
    std::vector<Tone> tones;
    for (std::size_t h = 0; h < cfg.harmonic_amps.size(); ++h) {
      tones.push_back({cfg.tooth_pass_hz() * static_cast<double>(h + 1), gain * cfg.harmonic_amps[h],
                       kTwoPi * unit_uniform(rng)});
    }
    if (label == Label::Bad) {
      const double per_tone = gain * cfg.chatter.amplitude / std::sqrt(static_cast<double>(cfg.chatter_tones));
      for (std::uint32_t t = 0; t < cfg.chatter_tones; ++t) {
        const double f = cfg.chatter.low_hz + (cfg.chatter.high_hz - cfg.chatter.low_hz) * unit_uniform(rng);
        tones.push_back({f, per_tone, kTwoPi * unit_uniform(rng)});
      }
    }
    auto& axis = out.series.axes[a];
    axis.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / cfg.sample_rate;
      double v = 0.0;
      for (const Tone& tone : tones) v += tone.amp * std::sin(kTwoPi * tone.freq * t + tone.phase);
      if (cfg.noise_floor > 0.0) v += cfg.noise_floor * noise(rng);
      axis[i] = static_cast<float>(v);
    }
  }
  return out;
}

std::vector<TimeSeriesSample> synth_dataset(const SynthConfig& cfg, std::size_t n_good, std::size_t n_bad) {
  std::vector<TimeSeriesSample> out;
  out.reserve(n_good + n_bad);
  for (std::size_t i = 0; i < n_good; ++i) out.push_back(synth_sample(Label::Good, cfg, i));
  for (std::size_t i = 0; i < n_bad; ++i) out.push_back(synth_sample(Label::Bad, cfg, i));
  return out;
}

std::vector<TimeSeries> segment_movements(const TimeSeries& raw, std::size_t rms_window, double threshold) {
  if (rms_window == 0) throw Error(ErrorCode::InvalidArgument, "segment: rms_window must be >= 1");
  if (!(threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "segment: threshold must be > 0");
  raw.validate();
  const std::size_t n = raw.length();
  std::vector<TimeSeries> out;
  if (n == 0) return out;

  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double e = 0.0;
    for (const auto& axis : raw.axes) e += static_cast<double>(axis[i]) * axis[i];
    prefix[i + 1] = prefix[i] + e / 3.0;
  }
  const double threshold_sq = threshold * threshold;
  const std::size_t half = rms_window / 2;
  auto active = [&](std::size_t i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, lo + rms_window);
    return (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo) >= threshold_sq;
  };

  std::size_t i = 0;
  while (i < n) {
    if (!active(i)) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < n && active(i)) ++i;
    TimeSeries seg;
    seg.sample_rate = raw.sample_rate;
    for (std::size_t a = 0; a < 3; ++a) {
      seg.axes[a].assign(raw.axes[a].begin() + static_cast<std::ptrdiff_t>(start),
                         raw.axes[a].begin() + static_cast<std::ptrdiff_t>(i));
    }
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<TimeSeriesSample> window_segment(const TimeSeries& segment, Label label, const Origin& origin) {
  segment.validate();
  const auto width = static_cast<std::size_t>(std::llround(segment.sample_rate));
  std::vector<TimeSeriesSample> out;
  if (width == 0) return out;
  const std::size_t count = segment.length() / width;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    TimeSeriesSample s;
    s.label = label;
    s.origin = origin;
    s.origin.window = static_cast<std::uint32_t>(w);
    s.series.sample_rate = segment.sample_rate;
    for (std::size_t a = 0; a < 3; ++a) {
      const auto first = segment.axes[a].begin() + static_cast<std::ptrdiff_t>(w * width);
      s.series.axes[a].assign(first, first + static_cast<std::ptrdiff_t>(width));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t train_count(std::size_t n, double train_ratio) {
  // ceil with a small guard so exact products (0.5 * 10) are not bumped up.
  const double target = train_ratio * static_cast<double>(n);
  return std::min(n, static_cast<std::size_t>(std::ceil(target - 1e-9)));
}

SplitIndices split_indices(std::span<const Label> labels, double train_ratio, std::uint64_t seed, bool stratified) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "split: train_ratio must lie in (0, 1)");
  }
  if (labels.empty()) throw Error(ErrorCode::EmptyInput, "split: no samples");

  const std::size_t n = labels.size();
  const std::size_t n_train = train_count(n, train_ratio);
  auto rng = detail::make_stream(seed, 0x5eed5u);
  SplitIndices out;

  if (!stratified) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return out;
  }

  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);

  std::array<std::size_t, 2> quota{};
  std::array<double, 2> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 2; ++c) {
    const double exact = train_ratio * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - static_cast<double>(quota[c]);
    assigned += quota[c];
  }
  while (assigned < n_train) {
    // Largest remainder first; class index breaks ties.
    std::size_t pick = 2;
    for (std::size_t c = 0; c < 2; ++c) {
      if (quota[c] >= by_class[c].size()) continue;
      if (pick == 2 || remainder[c] > remainder[pick]) pick = c;
    }
    if (pick == 2) break;
    ++quota[pick];
    remainder[pick] = -1.0;
    ++assigned;
  }

  for (std::size_t c = 0; c < 2; ++c) {
    auto& members = by_class[c];
    std::shuffle(members.begin(), members.end(), rng);
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]), members.end());
  }
  std::shuffle(out.train.begin(), out.train.end(), rng);
  std::shuffle(out.test.begin(), out.test.end(), rng);
  return out;
}

DatasetSplit split_dataset(std::span<const TimeSeriesSample> samples, double train_ratio, std::uint64_t seed,
                           bool stratified) {
  std::vector<Label> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  const SplitIndices idx = split_indices(labels, train_ratio, seed, stratified);
  DatasetSplit out;
  out.seed = seed;
  for (std::size_t i : idx.train) out.train.push_back(samples[i]);
  for (std::size_t i : idx.test) out.test.push_back(samples[i]);
  return out;
}

}  // namespace tinyvib
