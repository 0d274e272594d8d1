#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tinyvib {

inline constexpr float kMinScale = 1e-8f;

// Affine INT8 mapping: real = scale * (q - zero_point).
struct QuantParams {
  float scale = 1.0f;
  std::int32_t zero_point = 0;

  void validate() const;
  bool operator==(const QuantParams&) const = default;
};

struct QuantTensor {
  std::vector<std::int8_t> values;
  std::vector<std::size_t> shape;
  QuantParams params;
};

// Running min/max over any number of batches.
class RangeTracker {
 public:
  void observe(std::span<const float> values);
  bool empty() const noexcept { return count_ == 0; }
  float min() const noexcept { return min_; }
  float max() const noexcept { return max_; }
  QuantParams params(bool symmetric) const;

 private:
  float min_ = 0.0f;
  float max_ = 0.0f;
  std::size_t count_ = 0;
};

// Symmetric: scale = max|x| / 127, zero_point = 0.
// Asymmetric: range widened to include 0, scale = (max - min) / 255, min -> -128.
// Scale never drops below kMinScale.
QuantParams calibrate(std::span<const float> values, bool symmetric);
QuantParams params_from_range(float lo, float hi, bool symmetric);

// clamp(round_half_away(x / scale) + zero_point, -128, 127).
std::int8_t quantize_value(float x, const QuantParams& qp);
// Exact real value of a code; the float form rounds it once more.
inline double dequantize_real(std::int8_t q, const QuantParams& qp) {
  return static_cast<double>(qp.scale) * static_cast<double>(static_cast<std::int32_t>(q) - qp.zero_point);
}
inline float dequantize_value(std::int8_t q, const QuantParams& qp) { return static_cast<float>(dequantize_real(q, qp)); }

QuantTensor quantize(std::span<const float> x, std::vector<std::size_t> shape, const QuantParams& qp);
std::vector<float> dequantize(const QuantTensor& q);

// Bias stored as int32 at scale input_scale * weight_scale.
std::int32_t quantize_bias(float bias, double scale);

// Real multiplier m in (0, 1) represented as multiplier * 2^(shift - 31), with
// multiplier in [2^30, 2^31).
struct FixedMultiplier {
  std::int32_t multiplier = 0;
  int shift = 0;
};

FixedMultiplier quantize_multiplier(double real);

// round_half_away(acc * real) using only integer arithmetic.
std::int32_t apply_multiplier(std::int32_t acc, const FixedMultiplier& m);

}  // namespace tinyvib
