#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tinyvib {

// Dense rank-3 float tensor, row-major. The meaning of the three dimensions
// depends on the producer: spectrogram stages use [axis][time][freq], the
// CNN consumes [height][width][channel].
struct Tensor3 {
  std::size_t d0 = 0;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::vector<float> data;

  Tensor3() = default;
  Tensor3(std::size_t a, std::size_t b, std::size_t c, float fill = 0.0f)
      : d0(a), d1(b), d2(c), data(a * b * c, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  float& operator()(std::size_t i, std::size_t j, std::size_t k) { return data[(i * d1 + j) * d2 + k]; }
  float operator()(std::size_t i, std::size_t j, std::size_t k) const { return data[(i * d1 + j) * d2 + k]; }
  std::span<const float> view() const noexcept { return data; }

  bool operator==(const Tensor3&) const = default;
};

}  // namespace tinyvib
