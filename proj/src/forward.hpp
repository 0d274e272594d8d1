#pragma once

#include <span>
#include <type_traits>
#include <variant>
#include <vector>

#include "tinyvib/error.hpp"
#include "tinyvib/layers.hpp"
#include "tinyvib/nn.hpp"

namespace tinyvib::detail {

template <class>
inline constexpr bool kAlwaysFalse = false;

// Runs every layer and returns each layer's output. `weights(i)` and
// `bias(i)` return spans over layer i's parameters.
template <class T, class WeightFn, class BiasFn>
std::vector<std::vector<T>> run_forward(std::span<const LayerSpec> layers, const std::vector<Shape>& shapes,
                                        const Shape& input, std::span<const T> x, WeightFn weights, BiasFn bias) {
  std::vector<std::vector<T>> acts(layers.size());
  std::span<const T> cur = x;
  Shape cur_shape = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& out = acts[i];
    out.resize(shapes[i].size());
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Conv2D>) {
            layers::conv2d_forward<T>(l, cur_shape, cur, weights(i), bias(i), out);
          } else if constexpr (std::is_same_v<L, Dense>) {
            layers::dense_forward<T>(l, cur, weights(i), bias(i), out);
          } else if constexpr (std::is_same_v<L, AvgPool2D>) {
            layers::avgpool_forward<T>(l, cur_shape, cur, out);
          } else if constexpr (std::is_same_v<L, MaxPool2D>) {
            layers::maxpool_forward<T>(l, cur_shape, cur, out);
          } else if constexpr (std::is_same_v<L, Flatten>) {
            std::copy(cur.begin(), cur.end(), out.begin());
          } else if constexpr (std::is_same_v<L, Softmax>) {
            layers::softmax<T>(cur, out);
          } else {
            static_assert(kAlwaysFalse<L>);
          }
        },
        layers[i]);
    cur = acts[i];
    cur_shape = shapes[i];
  }
  return acts;
}

}  // namespace tinyvib::detail
