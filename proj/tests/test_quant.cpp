#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "tinyvib/error.hpp"
#include "tinyvib/quant.hpp"

using namespace tinyvib;

TEST_SUITE("quant") {
  TEST_CASE("calibrate: closed-form examples") {
    const std::vector<float> sym{-1.0f, 0.3f, 1.0f, -0.2f};
    const auto a = calibrate(sym, true);
    CHECK(a.scale == doctest::Approx(1.0 / 127.0).epsilon(1e-7));
    CHECK(a.zero_point == 0);

    const std::vector<float> zeros(10, 0.0f);
    const auto z = calibrate(zeros, true);
    CHECK(z.scale == kMinScale);
    CHECK(z.zero_point == 0);
    CHECK(calibrate(zeros, false).scale == kMinScale);

    const std::vector<float> ramp{0.0f, 17.0f, 255.0f};
    const auto b = calibrate(ramp, false);
    CHECK(b.scale == 1.0f);
    CHECK(b.zero_point == -128);

    // A strictly positive range is widened to include zero.
    const std::vector<float> pos{2.0f, 5.1f};
    const auto c = calibrate(pos, false);
    CHECK(c.zero_point == -128);
    CHECK(c.scale == doctest::Approx(5.1 / 255.0).epsilon(1e-6));
    const std::vector<float> neg{-4.0f, -1.0f};
    CHECK(calibrate(neg, false).zero_point == 127);

    CHECK_THROWS_AS(calibrate(std::vector<float>{}, true), Error);
    CHECK_THROWS_AS(calibrate(std::vector<float>{1.0f, std::nanf("")}, true), Error);
  }

  TEST_CASE("quantize: zero, endpoints and the zero-point dequantization example") {
    const QuantParams p{0.05f, 0};
    CHECK(quantize_value(0.0f, p) == 0);
    CHECK(quantize_value(127 * 0.05f, p) == 127);
    const QuantParams asym{0.1f, -17};
    CHECK(quantize_value(0.0f, asym) == -17);
    CHECK(dequantize_value(-17, asym) == 0.0f);
    const QuantParams ex{0.1f, -128};
    CHECK(dequantize_value(-128, ex) == 0.0f);
  }

  TEST_CASE("quantize: ties round away from zero") {
    const QuantParams p{0.5f, 0};
    CHECK(quantize_value(0.25f, p) == 1);
    CHECK(quantize_value(-0.25f, p) == -1);
    CHECK(quantize_value(0.75f, p) == 2);
    CHECK(quantize_value(-1.25f, p) == -3);
  }

  TEST_CASE("roundtrip bound over 1e6 in-range values") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> scale_d(1e-3, 2.0);
    std::uniform_int_distribution<int> zp_d(-128, 127);
    std::size_t violations = 0, float_violations = 0, n = 0;
    for (int block = 0; block < 100; ++block) {
      const QuantParams qp{static_cast<float>(scale_d(rng)), zp_d(rng)};
      const double lo = dequantize_real(-128, qp), hi = dequantize_real(127, qp);
      std::uniform_real_distribution<double> x_d(lo, hi);
      for (int i = 0; i < 10000; ++i, ++n) {
        const auto x = static_cast<float>(x_d(rng));
        if (x < lo || x > hi) continue;
        const std::int8_t q = quantize_value(x, qp);
        if (std::abs(dequantize_real(q, qp) - x) > qp.scale / 2.0) ++violations;
        // Float output adds one rounding of the grid point.
        const double ulp = std::nextafter(std::abs(x), std::numeric_limits<float>::infinity()) - std::abs(x);
        if (std::abs(static_cast<double>(dequantize_value(q, qp)) - x) > qp.scale / 2.0 + ulp) ++float_violations;
      }
    }
    CHECK(n == 1000000);
    CHECK(violations == 0);
    CHECK(float_violations == 0);
  }

  TEST_CASE("quantize is monotone") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> d(-40.0f, 40.0f);
    const QuantParams qp{0.21f, 9};
    for (int i = 0; i < 100000; ++i) {
      float a = d(rng), b = d(rng);
      if (a > b) std::swap(a, b);
      CHECK(quantize_value(a, qp) <= quantize_value(b, qp));
    }
  }

  TEST_CASE("out-of-range values saturate") {
    const QuantParams qp{0.1f, 0};
    CHECK(quantize_value(1e6f, qp) == 127);
    CHECK(quantize_value(-1e6f, qp) == -128);
    CHECK(quantize_value(12.76f, qp) == 127);
    CHECK(quantize_value(-12.9f, qp) == -128);
    CHECK(quantize_value(std::numeric_limits<float>::max(), qp) == 127);
    CHECK_THROWS_AS(quantize_value(std::numeric_limits<float>::infinity(), qp), Error);
  }

  TEST_CASE("grid values and quantized tensors round-trip exactly") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> scale_d(1e-4, 3.0);
    for (int t = 0; t < 50; ++t) {
      const QuantParams qp{static_cast<float>(scale_d(rng)), static_cast<std::int32_t>(rng() % 256) - 128};
      for (int q = -128; q <= 127; ++q) {
        const auto code = static_cast<std::int8_t>(q);
        CHECK(quantize_value(dequantize_value(code, qp), qp) == code);
      }
    }
    const QuantParams qp{0.37f, 4};
    std::vector<float> x{-3.0f, 0.0f, 1.0f, 2.2f, 44.0f, -100.0f};
    const auto qt = quantize(x, {2, 3}, qp);
    const auto again = quantize(dequantize(qt), qt.shape, qp);
    CHECK(again.values == qt.values);
    CHECK_THROWS_AS(quantize(x, {4}, qp), Error);
    CHECK_THROWS_AS(quantize(x, {6}, QuantParams{0.0f, 0}), Error);
  }

  TEST_CASE("bias quantization uses the product scale") {
    CHECK(quantize_bias(0.5f, 0.01 * 0.02) == 2500);
    CHECK(quantize_bias(-0.00015f, 0.0001) == -2);
    CHECK(quantize_bias(1e30f, 1e-8) == std::numeric_limits<std::int32_t>::max());
  }

  TEST_CASE("fixed-point multiplier matches real rescaling") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> m_d(1e-6, 0.99);
    std::uniform_int_distribution<std::int32_t> acc_d(-(1 << 24), 1 << 24);
    for (int t = 0; t < 2000; ++t) {
      const double real = m_d(rng);
      const auto fm = quantize_multiplier(real);
      CHECK(fm.multiplier >= (1 << 30));
      const std::int32_t acc = acc_d(rng);
      const double want = acc * real;
      CHECK(std::abs(apply_multiplier(acc, fm) - want) <= 0.5 + std::abs(want) * 1e-9 + 1e-9);
    }
    // Ties at exact halves go away from zero.
    const auto half = quantize_multiplier(0.5);
    CHECK(apply_multiplier(3, half) == 2);
    CHECK(apply_multiplier(-3, half) == -2);
    CHECK(apply_multiplier(0, half) == 0);
    CHECK_THROWS_AS(quantize_multiplier(0.0), Error);
  }

  TEST_CASE("range tracker accumulates across batches") {
    RangeTracker t;
    CHECK(t.empty());
    CHECK_THROWS_AS(t.params(false), Error);
    t.observe(std::vector<float>{0.5f, 1.5f});
    t.observe(std::vector<float>{-2.0f});
    CHECK(t.min() == -2.0f);
    CHECK(t.max() == 1.5f);
    CHECK(t.params(true).scale == doctest::Approx(2.0 / 127.0));
  }
}
