#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include "oracles.hpp"
#include "tinyvib/error.hpp"
#include "tinyvib/signals.hpp"

using namespace tinyvib;

namespace {

std::vector<double> as_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

// Sum of |X_k|^2 over one-sided bins with frequency in [lo, hi] versus outside.
std::pair<double, double> band_energy(const std::vector<float>& x, double fs, double lo, double hi) {
  const auto mag = oracle::dft_magnitude(as_double(x), x.size() / 2 + 1, -1);
  double in = 0.0, out = 0.0;
  for (std::size_t k = 1; k < mag.size(); ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(x.size());
    (f >= lo && f <= hi ? in : out) += mag[k] * mag[k];
  }
  return {in, out};
}

TimeSeries tone_burst_signal(const std::vector<std::pair<double, double>>& pieces, double fs) {
  // pieces: (seconds, amplitude); amplitude 0 is silence.
  TimeSeries ts;
  ts.sample_rate = fs;
  for (const auto& [sec, amp] : pieces) {
    const auto n = static_cast<std::size_t>(std::llround(sec * fs));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / fs;
      ts.axes[0].push_back(static_cast<float>(amp * std::sin(2 * std::numbers::pi * 120 * t)));
      ts.axes[1].push_back(static_cast<float>(amp * std::cos(2 * std::numbers::pi * 75 * t)));
      ts.axes[2].push_back(static_cast<float>(0.5 * amp));
    }
  }
  return ts;
}

std::vector<Label> paper_labels() {
  std::vector<Label> labels(698, Label::Good);
  labels.insert(labels.end(), 415, Label::Bad);
  return labels;
}

}  // namespace

TEST_SUITE("signals") {
  TEST_CASE("synth determinism: same (label, seed, index) gives identical samples") {
    SynthConfig cfg;
    for (Label l : {Label::Good, Label::Bad}) {
      const auto a = synth_sample(l, cfg, 7);
      const auto b = synth_sample(l, cfg, 7);
      CHECK(a == b);
      CHECK(a.series.length() == 8000);
      CHECK(a.label == l);
    }
    CHECK_FALSE(synth_sample(Label::Good, cfg, 7).series == synth_sample(Label::Good, cfg, 8).series);
    SynthConfig other = cfg;
    other.seed = 43;
    CHECK_FALSE(synth_sample(Label::Good, cfg, 7).series == synth_sample(Label::Good, other, 7).series);
  }

  TEST_CASE("good sample with one harmonic and no noise peaks only at the tooth-pass bin") {
    SynthConfig cfg;
    cfg.harmonic_amps = {1.0};
    cfg.noise_floor = 0.0;
    const auto s = synth_sample(Label::Good, cfg, 3);
    // 8000 samples at 8 kHz: bin k is k Hz.
    const auto tooth = static_cast<std::size_t>(cfg.tooth_pass_hz());
    REQUIRE(tooth == 100);
    for (const auto& axis : s.series.axes) {
      const auto mag = oracle::dft_magnitude(as_double(axis), axis.size() / 2 + 1, -1);
      const auto peak = static_cast<std::size_t>(std::max_element(mag.begin(), mag.end()) - mag.begin());
      CHECK(peak == tooth);
      double leak = 0.0;
      for (std::size_t k = 0; k < mag.size(); ++k) {
        if (k != tooth) leak = std::max(leak, mag[k]);
      }
      CHECK(leak < 1e-3 * mag[tooth]);
    }
  }

  TEST_CASE("bad sample carries more in-band chatter energy than the good sample") {
    SynthConfig cfg;
    for (std::uint64_t idx : {0u, 5u, 11u}) {
      const auto good = synth_sample(Label::Good, cfg, idx);
      const auto bad = synth_sample(Label::Bad, cfg, idx);
      for (std::size_t a = 0; a < 3; ++a) {
        const auto [gi, go] = band_energy(good.series.axes[a], cfg.sample_rate, cfg.chatter.low_hz, cfg.chatter.high_hz);
        const auto [bi, bo] = band_energy(bad.series.axes[a], cfg.sample_rate, cfg.chatter.low_hz, cfg.chatter.high_hz);
        CHECK(bi / bo > gi / go);
      }
    }
  }

  TEST_CASE("synth rejects harmonics above Nyquist") {
    SynthConfig cfg;
    cfg.base_freq = 2000;
    CHECK_THROWS_AS(synth_sample(Label::Good, cfg, 0), Error);
  }

  TEST_CASE("segment: all-zero signal has no segments") {
    TimeSeries ts;
    for (auto& a : ts.axes) a.assign(16000, 0.0f);
    CHECK(segment_movements(ts, 400, 0.05).empty());
  }

  TEST_CASE("segment: 2 s burst, 1 s silence, 3 s burst gives two segments at the built boundaries") {
    const std::size_t w = 800;
    const auto ts = tone_burst_signal({{0.5, 0.0}, {2.0, 1.0}, {1.0, 0.0}, {3.0, 1.0}, {0.5, 0.0}}, 8000);
    const auto segs = segment_movements(ts, w, 0.2);
    REQUIRE(segs.size() == 2);
    CHECK(std::abs(static_cast<long>(segs[0].length()) - 16000) <= static_cast<long>(w));
    CHECK(std::abs(static_cast<long>(segs[1].length()) - 24000) <= static_cast<long>(w));
    // The first segment must start within one window of the 0.5 s mark.
    std::size_t first_nonzero = 0;
    while (segs[0].axes[1][first_nonzero] == 0.0f) ++first_nonzero;
    CHECK(first_nonzero <= w);
  }

  TEST_CASE("segment: constant full-length signal is a single segment equal to the input") {
    TimeSeries ts;
    for (auto& a : ts.axes) a.assign(12000, 0.7f);
    const auto segs = segment_movements(ts, 500, 0.1);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0] == ts);
  }

  TEST_CASE("segment idempotence on emitted segments") {
    const auto ts = tone_burst_signal({{0.3, 0.0}, {1.7, 1.0}, {0.6, 0.0}, {2.2, 0.8}}, 8000);
    for (const auto& seg : segment_movements(ts, 400, 0.2)) {
      const auto again = segment_movements(seg, 400, 0.2);
      REQUIRE(again.size() == 1);
      CHECK(again[0] == seg);
    }
  }

  TEST_CASE("segment argument checks") {
    TimeSeries ts;
    for (auto& a : ts.axes) a.assign(100, 1.0f);
    CHECK_THROWS_AS(segment_movements(ts, 0, 0.1), Error);
    CHECK_THROWS_AS(segment_movements(ts, 10, 0.0), Error);
    ts.axes[2].pop_back();
    CHECK_THROWS_AS(segment_movements(ts, 10, 0.1), Error);
  }

  TEST_CASE("window_segment: 5.3 s gives 5 windows, 0.8 s gives none, 8000 samples gives one") {
    auto make = [](std::size_t n) {
      TimeSeries ts;
      for (std::size_t a = 0; a < 3; ++a) {
        ts.axes[a].resize(n);
        for (std::size_t i = 0; i < n; ++i) ts.axes[a][i] = static_cast<float>(i + a);
      }
      return ts;
    };
    const auto five = window_segment(make(42400), Label::Bad, {"rec", 2, 0});
    REQUIRE(five.size() == 5);
    for (std::size_t w = 0; w < 5; ++w) {
      CHECK(five[w].series.length() == 8000);
      CHECK(five[w].series.axes[0][0] == static_cast<float>(w * 8000));
      CHECK(five[w].origin.window == w);
      CHECK(five[w].origin.segment == 2);
      CHECK(five[w].label == Label::Bad);
    }
    CHECK(window_segment(make(6400), Label::Good).empty());
    const auto one = window_segment(make(8000), Label::Good);
    REQUIRE(one.size() == 1);
    CHECK(one[0].series == make(8000));
  }

  TEST_CASE("windowing conserves floor(len / 8000) per segment") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<std::size_t> len(0, 60000);
    std::size_t expected = 0, emitted = 0;
    for (int s = 0; s < 25; ++s) {
      const std::size_t n = len(rng);
      TimeSeries ts;
      for (auto& a : ts.axes) a.assign(n, 0.1f);
      expected += n / 8000;
      emitted += window_segment(ts, Label::Good).size();
    }
    CHECK(emitted == expected);
  }

  TEST_CASE("split: 1113 samples at 0.783 gives 872 / 241") {
    CHECK(train_count(1113, 0.783) == 872);
    const auto labels = paper_labels();
    for (bool strat : {true, false}) {
      const auto s = split_indices(labels, 0.783, 42, strat);
      CHECK(s.train.size() == 872);
      CHECK(s.test.size() == 241);
    }
  }

  TEST_CASE("split: stratified class shares within one sample of the ratio") {
    // Class mix in the style of the reference counts (549+323 train of 872).
    for (auto [g, b] : {std::pair<std::size_t, std::size_t>{698, 415}, {549, 323}, {100, 7}, {13, 990}}) {
      std::vector<Label> labels(g, Label::Good);
      labels.insert(labels.end(), b, Label::Bad);
      const auto s = split_indices(labels, 0.783, 5, true);
      std::size_t tg = 0;
      for (auto i : s.train) tg += labels[i] == Label::Good;
      const std::size_t tb = s.train.size() - tg;
      CHECK(std::abs(static_cast<double>(tg) - 0.783 * static_cast<double>(g)) <= 1.0);
      CHECK(std::abs(static_cast<double>(tb) - 0.783 * static_cast<double>(b)) <= 1.0);
    }
  }

  TEST_CASE("split: same seed gives identical membership, different seed differs") {
    const auto labels = paper_labels();
    const auto a = split_indices(labels, 0.783, 42, true);
    const auto b = split_indices(labels, 0.783, 42, true);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(split_indices(labels, 0.783, 43, true).train != a.train);
  }

  TEST_CASE("split: train and test are disjoint and cover every sample") {
    const auto labels = paper_labels();
    const auto s = split_indices(labels, 0.783, 1, true);
    std::set<std::size_t> seen(s.train.begin(), s.train.end());
    for (auto i : s.test) CHECK(seen.insert(i).second);
    CHECK(seen.size() == labels.size());

    const auto ds = synth_dataset(SynthConfig{}, 20, 13);
    const auto split = split_dataset(ds, 0.7, 3, true);
    std::set<std::string> origins;
    for (const auto& x : split.train) origins.insert(x.origin.key());
    for (const auto& x : split.test) CHECK(origins.count(x.origin.key()) == 0);
    CHECK(split.train.size() + split.test.size() == ds.size());
  }

  TEST_CASE("split argument checks") {
    const auto labels = paper_labels();
    CHECK_THROWS_AS(split_indices(labels, 1.2, 1, true), Error);
    CHECK_THROWS_AS(split_indices(labels, 0.0, 1, true), Error);
    CHECK_THROWS_AS(split_indices(std::vector<Label>{}, 0.5, 1, true), Error);
  }

  TEST_CASE("raw recording, manifest and dataset round-trip through disk") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "tinyvib_signals_io";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const auto ds = synth_dataset(SynthConfig{}, 3, 2);
    write_raw(dir / "one.f32", ds[4].series);
    CHECK(fs::file_size(dir / "one.f32") == 8000 * 3 * 4);
    CHECK(read_raw(dir / "one.f32") == ds[4].series);

    save_dataset(dir / "set", ds);
    const auto back = load_dataset(dir / "set" / "manifest.txt");
    CHECK(back == ds);

    CHECK_THROWS_AS(read_raw(dir / "missing.f32"), Error);
    fs::remove_all(dir);
  }
}
