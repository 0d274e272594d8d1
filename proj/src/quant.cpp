#include "tinyvib/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tinyvib/error.hpp"

namespace tinyvib {

void QuantParams::validate() const {
  if (!(scale > 0.0f) || !std::isfinite(scale)) throw Error(ErrorCode::InvalidArgument, "quant: scale must be > 0");
  if (zero_point < -128 || zero_point > 127) {
    throw Error(ErrorCode::InvalidArgument, "quant: zero_point must lie in [-128, 127]");
  }
}

void RangeTracker::observe(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "calibrate: non-finite value");
    if (count_ == 0) {
      min_ = max_ = v;
    } else {
      min_ = std::min(min_, v);
      max_ = std::max(max_, v);
    }
    ++count_;
  }
}

QuantParams RangeTracker::params(bool symmetric) const {
  if (count_ == 0) throw Error(ErrorCode::EmptyInput, "calibrate: no values observed");
  return params_from_range(min_, max_, symmetric);
}

QuantParams params_from_range(float lo, float hi, bool symmetric) {
  QuantParams qp;
  if (symmetric) {
    const double bound = std::max(std::fabs(static_cast<double>(lo)), std::fabs(static_cast<double>(hi)));
    qp.scale = std::max(static_cast<float>(bound / 127.0), kMinScale);
    qp.zero_point = 0;
    return qp;
  }
  const double mn = std::min(0.0, static_cast<double>(lo));
  const double mx = std::max(0.0, static_cast<double>(hi));
  qp.scale = std::max(static_cast<float>((mx - mn) / 255.0), kMinScale);
  const double zp = -128.0 - std::round(mn / static_cast<double>(qp.scale));
  qp.zero_point = static_cast<std::int32_t>(std::clamp(zp, -128.0, 127.0));
  return qp;
}

QuantParams calibrate(std::span<const float> values, bool symmetric) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "calibrate: empty input");
  RangeTracker t;
  t.observe(values);
  return t.params(symmetric);
}

std::int8_t quantize_value(float x, const QuantParams& qp) {
  if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "quantize: non-finite input");
  const double s = qp.scale;
  const double xd = x;
  double r = std::round(xd / s);
  // x / s is itself rounded; settle near-ties on the exact residual, which
  // is representable because s is a float and |r| is small.
  if (std::fabs(r) < 0x1p28) {
    const double d = xd - s * r;
    if (std::fabs(d) > s / 2.0) {
      r += d > 0.0 ? 1.0 : -1.0;
    } else if (std::fabs(d) == s / 2.0) {
      const double other = r + (d > 0.0 ? 1.0 : -1.0);
      if (std::fabs(other) > std::fabs(r)) r = other;
    }
  }
  const double q = r + qp.zero_point;
  return static_cast<std::int8_t>(std::clamp(q, -128.0, 127.0));
}

QuantTensor quantize(std::span<const float> x, std::vector<std::size_t> shape, const QuantParams& qp) {
  qp.validate();
  std::size_t expected = 1;
  for (std::size_t d : shape) expected *= d;
  if (expected != x.size()) throw Error(ErrorCode::ShapeMismatch, "quantize: shape does not match data size");
  QuantTensor out{std::vector<std::int8_t>(x.size()), std::move(shape), qp};
  for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = quantize_value(x[i], qp);
  return out;
}

std::vector<float> dequantize(const QuantTensor& q) {
  std::vector<float> out(q.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = dequantize_value(q.values[i], q.params);
  return out;
}

std::int32_t quantize_bias(float bias, double scale) {
  const double q = std::round(static_cast<double>(bias) / scale);
  constexpr double lim = static_cast<double>(std::numeric_limits<std::int32_t>::max());
  return static_cast<std::int32_t>(std::clamp(q, -lim, lim));
}

FixedMultiplier quantize_multiplier(double real) {
  if (!(real > 0.0) || !std::isfinite(real)) throw Error(ErrorCode::InvalidArgument, "requant: multiplier must be > 0");
  int exponent = 0;
  const double mantissa = std::frexp(real, &exponent);  // real = mantissa * 2^exponent, mantissa in [0.5, 1)
  auto q = static_cast<std::int64_t>(std::round(mantissa * static_cast<double>(1ll << 31)));
  if (q == (1ll << 31)) {
    q /= 2;
    ++exponent;
  }
  if (exponent > 30) throw Error(ErrorCode::InvalidArgument, "requant: multiplier too large");
  if (exponent < -31) return {0, 0};
  return {static_cast<std::int32_t>(q), exponent};
}

std::int32_t apply_multiplier(std::int32_t acc, const FixedMultiplier& m) {
  const std::int64_t prod = static_cast<std::int64_t>(acc) * m.multiplier;
  const int right = 31 - m.shift;
  std::int64_t result = 0;
  if (right <= 0) {
    result = prod << (-right);
  } else if (right >= 63) {
    result = 0;
  } else {
    const std::int64_t half = std::int64_t{1} << (right - 1);
    result = prod >= 0 ? (prod + half) >> right : -((-prod + half) >> right);
  }
  constexpr std::int64_t lo = std::numeric_limits<std::int32_t>::min();
  constexpr std::int64_t hi = std::numeric_limits<std::int32_t>::max();
  return static_cast<std::int32_t>(std::clamp(result, lo, hi));
}

}  // namespace tinyvib
