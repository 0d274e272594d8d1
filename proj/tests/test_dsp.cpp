#include <doctest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "tinyvib/dsp.hpp"
#include "tinyvib/error.hpp"

using namespace tinyvib;

namespace {

TimeSeries random_series(std::mt19937_64& rng, std::size_t n, double lo = -3.0, double hi = 5.0) {
  TimeSeries ts;
  for (auto& a : ts.axes) {
    const auto v = oracle::uniform(rng, n, lo, hi);
    a.assign(v.begin(), v.end());
  }
  return ts;
}

// Reference chain: joint min/max scaling, windowed direct DFT per frame,
// mean pooling with clipped windows, log10 with a floor. Output [axis][time][freq].
std::vector<double> reference_features(const TimeSeries& x, double alpha, std::size_t nfft, std::size_t overlap,
                                       std::size_t pt, std::size_t pf, double eps, std::size_t* nt_out,
                                       std::size_t* nf_out) {
  double lo = 1e300, hi = -1e300;
  for (const auto& a : x.axes)
    for (float v : a) {
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
    }
  const std::size_t n = x.length(), hop = nfft - overlap, frames = (n - nfft) / hop + 1, bins = nfft / 2 + 1;
  const std::size_t nt = (frames + pt - 1) / pt, nf = (bins + pf - 1) / pf;
  std::vector<double> out(3 * nt * nf);
  for (std::size_t a = 0; a < 3; ++a) {
    std::vector<double> spec(frames * bins);
    for (std::size_t f = 0; f < frames; ++f) {
      std::vector<double> frame(nfft);
      for (std::size_t m = 0; m < nfft; ++m) {
        // The library stores normalized samples as float; mirror that rounding.
        const float xn = static_cast<float>(2.0 * (x.axes[a][f * hop + m] - lo) / (hi - lo) - 1.0);
        frame[m] = oracle::tukey(m, nfft, alpha) * xn;
      }
      const auto mag = oracle::dft_magnitude(frame, bins, +1);
      for (std::size_t k = 0; k < bins; ++k) spec[f * bins + k] = mag[k];
    }
    for (std::size_t i = 0; i < nt; ++i)
      for (std::size_t j = 0; j < nf; ++j) {
        double s = 0.0;
        std::size_t c = 0;
        for (std::size_t t = i * pt; t < std::min(frames, (i + 1) * pt); ++t)
          for (std::size_t k = j * pf; k < std::min(bins, (j + 1) * pf); ++k, ++c) s += spec[t * bins + k];
        out[(a * nt + i) * nf + j] = std::log10(std::max(s / static_cast<double>(c), eps));
      }
  }
  *nt_out = nt;
  *nf_out = nf;
  return out;
}

}  // namespace

TEST_SUITE("dsp") {
  TEST_CASE("normalize: endpoints and a hand example") {
    TimeSeries ts;
    ts.axes[0] = {0.0f, 10.0f, 5.0f};
    ts.axes[1] = {2.5f, 7.5f, 1.0f};
    ts.axes[2] = {3.0f, 3.0f, 3.0f};
    const auto n = instance_normalize(ts);
    CHECK(n.axes[0][0] == -1.0f);
    CHECK(n.axes[0][1] == 1.0f);
    CHECK(n.axes[0][2] == doctest::Approx(0.0));
    CHECK(n.axes[1][0] == doctest::Approx(-0.5));

    TimeSeries t2;
    for (auto& a : t2.axes) a = {2.0f, 4.0f, 6.0f};
    const auto m = instance_normalize(t2);
    for (const auto& a : m.axes) {
      CHECK(a[0] == -1.0f);
      CHECK(a[1] == doctest::Approx(0.0).epsilon(1e-7));
      CHECK(a[2] == 1.0f);
    }
  }

  TEST_CASE("normalize: constant and empty samples are rejected") {
    TimeSeries c;
    for (auto& a : c.axes) a.assign(50, 1.25f);
    CHECK_THROWS_AS(instance_normalize(c), Error);
    try {
      instance_normalize(c);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateInput);
    }
    CHECK_THROWS_AS(instance_normalize(TimeSeries{}), Error);
  }

  TEST_CASE("normalize: per-axis mode maps every axis onto [-1, 1]") {
    std::mt19937_64 rng(3);
    auto ts = random_series(rng, 1000);
    for (auto& v : ts.axes[2]) v *= 0.01f;
    const auto n = instance_normalize(ts, NormMode::PerAxis);
    for (const auto& a : n.axes) {
      CHECK(*std::min_element(a.begin(), a.end()) == -1.0f);
      CHECK(*std::max_element(a.begin(), a.end()) == 1.0f);
    }
  }

  TEST_CASE("normalize is idempotent") {
    std::mt19937_64 rng(11);
    for (int t = 0; t < 10; ++t) {
      const auto once = instance_normalize(random_series(rng, 4000));
      const auto twice = instance_normalize(once);
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t i = 0; i < once.length(); ++i) CHECK(std::abs(twice.axes[a][i] - once.axes[a][i]) <= 1e-6f);
    }
  }

  TEST_CASE("tukey: limits, symmetry and the piecewise definition") {
    const auto rect = tukey(256, 0.0);
    for (float v : rect.coeffs) CHECK(v == 1.0f);
    const auto hann = tukey(256, 1.0);
    for (std::size_t n = 0; n < 256; ++n) CHECK(std::abs(hann.coeffs[n] - oracle::hann(n, 256)) < 1e-6);
    for (double alpha : {0.0, 0.1, 0.25, 0.5, 0.77, 1.0}) {
      const auto w = tukey(256, alpha);
      REQUIRE(w.coeffs.size() == 256);
      for (std::size_t n = 0; n < 256; ++n) {
        CHECK(w.coeffs[n] == w.coeffs[255 - n]);
        CHECK(std::abs(w.coeffs[n] - oracle::tukey(n, 256, alpha)) < 1e-6);
      }
    }
    CHECK_THROWS_AS(tukey(256, -0.1), Error);
    CHECK_THROWS_AS(tukey(256, 1.5), Error);
  }

  TEST_CASE("fft rejects sizes that are not powers of two") {
    CHECK_THROWS_AS(Fft(0), Error);
    CHECK_THROWS_AS(Fft(250), Error);
    CHECK_NOTHROW(Fft(256));
  }

  TEST_CASE("stft: shape of a one-second axis is 32 x 129") {
    StftParams p;
    CHECK(p.hop() == 248);
    CHECK(p.bins() == 129);
    CHECK(p.frames(8000) == 32);
    std::mt19937_64 rng(1);
    const auto s = spectrogram(random_series(rng, 8000), tukey(256, 0.5));
    CHECK(s.data.d0 == 3);
    CHECK(s.data.d1 == 32);
    CHECK(s.data.d2 == 129);
  }

  TEST_CASE("stft: every bin of random frames matches the direct summation") {
    std::mt19937_64 rng(2024);
    const StftParams p;
    const auto win = tukey(256, 0.5);
    const Fft fft(256);
    std::size_t frames_checked = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 4; ++trial) {
      const auto v = oracle::uniform(rng, 8000, -1.0, 1.0);
      const std::vector<float> x(v.begin(), v.end());
      std::vector<float> out(32 * 129);
      spectrogram_axis(x, win, p, fft, out);
      for (std::size_t f = 0; f < 32; ++f) {
        std::vector<double> frame(256);
        for (std::size_t m = 0; m < 256; ++m) frame[m] = oracle::tukey(m, 256, 0.5) * x[f * 248 + m];
        const auto ref = oracle::dft_magnitude(frame, 129, +1);
        for (std::size_t k = 0; k < 129; ++k) worst = std::max(worst, oracle::rel_err(out[f * 129 + k], ref[k]));
        ++frames_checked;
      }
    }
    CHECK(frames_checked >= 100);
    CHECK(worst <= 1e-4);
  }

  TEST_CASE("stft: +j and -j exponents give the same magnitudes for real frames") {
    std::mt19937_64 rng(77);
    for (int t = 0; t < 20; ++t) {
      const auto frame = oracle::uniform(rng, 256, -2.0, 2.0);
      const auto pos = oracle::dft_magnitude(frame, 129, +1);
      const auto neg = oracle::dft_magnitude(frame, 129, -1);
      for (std::size_t k = 0; k < 129; ++k) CHECK(oracle::rel_err(pos[k], neg[k]) <= 1e-6);
    }
  }

  TEST_CASE("stft: Parseval per frame with a rectangular window") {
    std::mt19937_64 rng(5);
    const StftParams p;
    const auto v = oracle::uniform(rng, 8000, -1.0, 1.0);
    const std::vector<float> x(v.begin(), v.end());
    std::vector<float> out(32 * 129);
    spectrogram_axis(x, tukey(256, 0.0), p, Fft(256), out);
    for (std::size_t f = 0; f < 32; ++f) {
      double time = 0.0;
      for (std::size_t m = 0; m < 256; ++m) time += static_cast<double>(x[f * 248 + m]) * x[f * 248 + m];
      // One-sided magnitudes: bins 1..127 appear twice in the full spectrum.
      double freq = 0.0;
      for (std::size_t k = 0; k < 129; ++k) {
        const double m2 = static_cast<double>(out[f * 129 + k]) * out[f * 129 + k];
        freq += (k == 0 || k == 128) ? m2 : 2.0 * m2;
      }
      CHECK(oracle::rel_err(freq / 256.0, time) <= 1e-4);
    }
  }

  TEST_CASE("stft: constant input puts all energy in bin 0") {
    const StftParams p;
    for (float c : {1.0f, -0.37f, 2.5f}) {
      const std::vector<float> x(8000, c);
      std::vector<float> out(32 * 129);
      spectrogram_axis(x, tukey(256, 0.0), p, Fft(256), out);
      for (std::size_t f = 0; f < 32; ++f) {
        CHECK(out[f * 129] == doctest::Approx(256.0 * std::abs(c)).epsilon(1e-6));
        for (std::size_t k = 1; k < 129; ++k) CHECK(out[f * 129 + k] <= 1e-6 * std::abs(c) * 256.0);
      }
    }
  }

  TEST_CASE("stft argument checks") {
    const std::vector<float> x(8000, 0.0f);
    std::vector<float> out(32 * 129);
    CHECK_THROWS_AS(spectrogram_axis(x, tukey(128, 0.5), StftParams{}, Fft(256), out), Error);
    std::vector<float> small(10);
    CHECK_THROWS_AS(spectrogram_axis(x, tukey(256, 0.5), StftParams{}, Fft(256), small), Error);
  }

  TEST_CASE("avg_pool: toy block means, constants and paper shape") {
    Tensor3 toy(1, 2, 4);
    toy.data = {1, 2, 3, 4, 5, 6, 7, 8};
    const auto p = avg_pool(toy, 2, 2);
    REQUIRE(p.d0 == 1);
    REQUIRE(p.d1 == 1);
    REQUIRE(p.d2 == 2);
    CHECK(p.data[0] == 3.5f);
    CHECK(p.data[1] == 5.5f);

    const auto c = avg_pool(Tensor3(3, 32, 129, 4.25f), 8, 2);
    CHECK(c.d0 == 3);
    CHECK(c.d1 == 4);
    CHECK(c.d2 == 65);
    for (float v : c.data) CHECK(v == 4.25f);
  }

  TEST_CASE("avg_pool: window-weighted mean is conserved") {
    std::mt19937_64 rng(8);
    for (auto [d1, d2, p1, p2] : {std::array<std::size_t, 4>{32, 129, 8, 2}, {7, 9, 3, 4}, {5, 5, 5, 5}}) {
      Tensor3 t(2, d1, d2);
      const auto v = oracle::uniform(rng, t.size(), 0.0, 10.0);
      t.data.assign(v.begin(), v.end());
      const auto p = avg_pool(t, p1, p2);
      double in_sum = 0.0, out_sum = 0.0;
      for (float x : t.data) in_sum += x;
      for (std::size_t c = 0; c < p.d0; ++c)
        for (std::size_t i = 0; i < p.d1; ++i)
          for (std::size_t j = 0; j < p.d2; ++j) {
            const double rows = static_cast<double>(std::min(d1, (i + 1) * p1) - i * p1);
            const double cols = static_cast<double>(std::min(d2, (j + 1) * p2) - j * p2);
            out_sum += p(c, i, j) * rows * cols;
          }
      CHECK(oracle::rel_err(out_sum / static_cast<double>(t.size()), in_sum / static_cast<double>(t.size())) <= 1e-6);
    }
  }

  TEST_CASE("log_scale: exact values and the floor") {
    Tensor3 t(1, 1, 4);
    t.data = {1.0f, 100.0f, 0.0f, -3.0f};
    const auto l = log_scale(t, 1e-12);
    CHECK(l.data[0] == 0.0f);
    CHECK(l.data[1] == 2.0f);
    CHECK(l.data[2] == doctest::Approx(-12.0));
    CHECK(l.data[3] == doctest::Approx(-12.0));
    CHECK_THROWS_AS(log_scale(t, 0.0), Error);
  }

  TEST_CASE("to_channels_last moves the axis dimension last") {
    Tensor3 t(3, 4, 65);
    for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = static_cast<float>(i);
    const auto c = to_channels_last(t);
    CHECK(c.d0 == 4);
    CHECK(c.d1 == 65);
    CHECK(c.d2 == 3);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 65; ++j) CHECK(c(i, j, a) == t(a, i, j));
  }

  TEST_CASE("preprocess: 3 x 8000 becomes 3 x 4 x 65 well under a second") {
    std::mt19937_64 rng(4);
    const auto x = random_series(rng, 8000);
    const Preprocessor prep{PreprocessConfig{}};
    const auto t0 = std::chrono::steady_clock::now();
    const auto spec = prep.spectrogram(prep.normalize(x));
    const auto pooled = prep.pool(spec);
    const auto feat = prep.log(pooled);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(spec.d0 == 3);
    CHECK(spec.d1 == 32);
    CHECK(spec.d2 == 129);
    CHECK(feat.d0 == 3);
    CHECK(feat.d1 == 4);
    CHECK(feat.d2 == 65);
    CHECK(secs < 1.0);
    CHECK(feat == prep(x));
  }

  TEST_CASE("preprocess: a common positive scale leaves features unchanged") {
    std::mt19937_64 rng(6);
    const auto x = random_series(rng, 8000);
    const auto base = preprocess(x);
    TimeSeries exact = x;  // power-of-two scale is exact in float
    for (auto& a : exact.axes)
      for (auto& v : a) v *= 4.0f;
    CHECK(preprocess(exact) == base);
    TimeSeries scaled = x;
    for (auto& a : scaled.axes)
      for (auto& v : a) v *= 3.7f;
    const auto other = preprocess(scaled);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(other.data[i] - base.data[i]) < 1e-4f);
  }

  TEST_CASE("preprocess equals the composed reference stages") {
    std::mt19937_64 rng(12);
    for (double alpha : {0.5, 0.0, 1.0}) {
      const auto x = random_series(rng, 8000, -0.5, 1.5);
      PreprocessConfig cfg;
      cfg.alpha = alpha;
      const auto got = preprocess(x, cfg);
      std::size_t nt = 0, nf = 0;
      const auto ref = reference_features(x, alpha, 256, 8, 8, 2, 1e-12, &nt, &nf);
      REQUIRE(nt == got.d1);
      REQUIRE(nf == got.d2);
      double worst = 0.0;
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(got.data[i] - ref[i]));
      CHECK(worst < 1e-4);
    }
  }

  TEST_CASE("preprocess config validation") {
    PreprocessConfig c;
    c.alpha = -0.1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.stft.nfft = 200;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.stft.overlap = 256;
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("feature file round trip") {
    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "tinyvib_feat.bin";
    std::mt19937_64 rng(13);
    const auto t = preprocess(random_series(rng, 8000));
    write_feature_file(path, t, {{"stage", "log_pooled"}, {"alpha", "0.5"}});
    std::map<std::string, std::string> header;
    CHECK(read_feature_file(path, &header) == t);
    CHECK(header["alpha"] == "0.5");
    CHECK(header["stage"] == "log_pooled");
    fs::remove(path);
  }
}
