#include "tinyvib/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "forward.hpp"
#include "rng.hpp"
#include "tinyvib/error.hpp"
#include "tinyvib/layers.hpp"

namespace tinyvib {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

const char* act_name(Activation a) { return a == Activation::Relu ? "relu" : "none"; }

std::int32_t div_round(std::int32_t num, std::int32_t den) {
  return num >= 0 ? (num + den / 2) / den : -((-num + den / 2) / den);
}

}  // namespace

std::string describe(const LayerSpec& layer) {
  std::ostringstream s;
  std::visit(Overloaded{
                 [&](const Conv2D& l) {
                   s << "conv2d(" << l.kh << "x" << l.kw << "," << l.c_in << "->" << l.c_out << ",stride=" << l.stride
                     << "," << (l.padding == Padding::Same ? "same" : "valid") << "," << act_name(l.act) << ")";
                 },
                 [&](const AvgPool2D& l) { s << "avgpool(" << l.ph << "x" << l.pw << ")"; },
                 [&](const MaxPool2D& l) { s << "maxpool(" << l.ph << "x" << l.pw << ")"; },
                 [&](const Flatten&) { s << "flatten"; },
                 [&](const Dense& l) { s << "dense(" << l.n_in << "->" << l.n_out << "," << act_name(l.act) << ")"; },
                 [&](const Softmax&) { s << "softmax"; },
             },
             layer);
  return s.str();
}

Shape output_shape(const LayerSpec& layer, const Shape& in) {
  auto fail = [&](const std::string& why) -> Shape {
    throw Error(ErrorCode::ShapeMismatch, describe(layer) + ": " + why);
  };
  return std::visit(
      Overloaded{
          [&](const Conv2D& l) -> Shape {
            if (l.kh == 0 || l.kw == 0 || l.c_out == 0 || l.stride == 0) return fail("zero-sized kernel or stride");
            if (in.c != l.c_in) return fail("input has " + std::to_string(in.c) + " channels");
            const Shape out = layers::conv_geometry(l, in).out;
            if (out.size() == 0) return fail("empty output");
            return out;
          },
          [&](const AvgPool2D& l) -> Shape {
            if (l.ph == 0 || l.pw == 0 || in.h < l.ph || in.w < l.pw) return fail("pool larger than input");
            return layers::pool_shape(l.ph, l.pw, in);
          },
          [&](const MaxPool2D& l) -> Shape {
            if (l.ph == 0 || l.pw == 0 || in.h < l.ph || in.w < l.pw) return fail("pool larger than input");
            return layers::pool_shape(l.ph, l.pw, in);
          },
          [&](const Flatten&) -> Shape { return {1, 1, in.size()}; },
          [&](const Dense& l) -> Shape {
            if (in.h != 1 || in.w != 1 || in.c != l.n_in) {
              return fail("expects a flat input of " + std::to_string(l.n_in));
            }
            if (l.n_out == 0) return fail("zero outputs");
            return {1, 1, l.n_out};
          },
          [&](const Softmax&) -> Shape {
            if (in.h != 1 || in.w != 1) return fail("expects a flat input");
            return in;
          },
      },
      layer);
}

std::vector<Shape> infer_shapes(std::span<const LayerSpec> layers, const Shape& input) {
  if (input.size() == 0) throw Error(ErrorCode::ShapeMismatch, "empty input shape");
  std::vector<Shape> out;
  out.reserve(layers.size());
  Shape cur = input;
  for (const auto& l : layers) {
    cur = output_shape(l, cur);
    out.push_back(cur);
  }
  return out;
}

std::size_t weight_count(const LayerSpec& layer) {
  if (const auto* c = std::get_if<Conv2D>(&layer)) return c->kh * c->kw * c->c_in * c->c_out;
  if (const auto* d = std::get_if<Dense>(&layer)) return d->n_in * d->n_out;
  return 0;
}

std::size_t bias_count(const LayerSpec& layer) {
  if (const auto* c = std::get_if<Conv2D>(&layer)) return c->c_out;
  if (const auto* d = std::get_if<Dense>(&layer)) return d->n_out;
  return 0;
}

std::size_t param_budget(std::span<const LayerSpec> layers) {
  std::size_t bytes = 0;
  for (const auto& l : layers) bytes += weight_count(l) + 4 * bias_count(l);
  return bytes;
}

Shape default_input_shape() { return {4, 65, 3}; }

std::vector<LayerSpec> default_architecture() {
  return {
      Conv2D{3, 3, 3, 8, 1, Padding::Same, Activation::Relu},
      Conv2D{3, 3, 8, 16, 1, Padding::Same, Activation::Relu},
      AvgPool2D{4, 4},
      Flatten{},
      Dense{256, 24, Activation::Relu},
      Dense{24, 2, Activation::None},
      Softmax{},
  };
}

void ModelArtifact::validate() const {
  infer_shapes(layers, input_shape);
  if (params.size() != layers.size()) throw Error(ErrorCode::Format, "model: parameter table size mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (params[i].weights.size() != weight_count(layers[i]) || params[i].bias.size() != bias_count(layers[i])) {
      throw Error(ErrorCode::Format, "model: layer " + std::to_string(i) + " has wrongly sized parameters");
    }
  }
  if (quant && quant->layers.size() != layers.size()) {
    throw Error(ErrorCode::Format, "model: quantization table size mismatch");
  }
}

std::size_t activation_bytes(const ModelArtifact& model) {
  const auto shapes = infer_shapes(model.layers, model.input_shape);
  std::size_t peak = 0;
  Shape in = model.input_shape;
  for (const auto& s : shapes) {
    peak = std::max(peak, in.size() + s.size());
    in = s;
  }
  return peak;
}

ModelArtifact init_model(std::vector<LayerSpec> layers, const Shape& input, std::uint64_t seed) {
  ModelArtifact m;
  m.input_shape = input;
  m.layers = std::move(layers);
  infer_shapes(m.layers, input);
  m.params.resize(m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const std::size_t nw = weight_count(m.layers[i]);
    m.params[i].bias.assign(bias_count(m.layers[i]), 0.0f);
    if (nw == 0) continue;
    double fan_in = 0.0, fan_out = 0.0;
    if (const auto* c = std::get_if<Conv2D>(&m.layers[i])) {
      fan_in = static_cast<double>(c->kh * c->kw * c->c_in);
      fan_out = static_cast<double>(c->kh * c->kw * c->c_out);
    } else {
      const auto& d = std::get<Dense>(m.layers[i]);
      fan_in = static_cast<double>(d.n_in);
      fan_out = static_cast<double>(d.n_out);
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    auto rng = detail::make_stream(seed, 0x1417u, i);
    m.params[i].weights.resize(nw);
    for (float& w : m.params[i].weights) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      w = static_cast<float>((2.0 * u - 1.0) * limit);
    }
  }
  std::string arch;
  for (const auto& l : m.layers) arch += (arch.empty() ? "" : ";") + describe(l);
  m.metadata["architecture"] = arch;
  m.metadata["input_shape"] = std::to_string(input.h) + "x" + std::to_string(input.w) + "x" + std::to_string(input.c);
  m.metadata["init_seed"] = std::to_string(seed);
  m.metadata["param_bytes"] = std::to_string(param_budget(m.layers));
  m.metadata["activation_bytes"] = std::to_string(activation_bytes(m));
  return m;
}

namespace {

void check_input(const ModelArtifact& model, const Tensor3& input) {
  if (input.d0 != model.input_shape.h || input.d1 != model.input_shape.w || input.d2 != model.input_shape.c) {
    throw Error(ErrorCode::ShapeMismatch, "input is " + std::to_string(input.d0) + "x" + std::to_string(input.d1) +
                                              "x" + std::to_string(input.d2) + ", model expects " +
                                              model.metadata.at("input_shape"));
  }
}

}  // namespace

std::vector<std::vector<float>> forward_f32_trace(const ModelArtifact& model, const Tensor3& input) {
  check_input(model, input);
  const auto shapes = infer_shapes(model.layers, model.input_shape);
  return detail::run_forward<float>(
      model.layers, shapes, model.input_shape, input.view(),
      [&](std::size_t i) { return std::span<const float>(model.params[i].weights); },
      [&](std::size_t i) { return std::span<const float>(model.params[i].bias); });
}

std::vector<float> forward_f32(const ModelArtifact& model, const Tensor3& input) {
  auto acts = forward_f32_trace(model, input);
  if (acts.empty()) return input.data;
  return std::move(acts.back());
}

ModelArtifact quantize_model(ModelArtifact model, std::span<const Tensor3> calib) {
  if (calib.empty()) throw Error(ErrorCode::EmptyInput, "quantize_model: empty calibration set");
  model.validate();
  const std::size_t budget = param_budget(model.layers);
  if (budget > kParamBudgetBytes) {
    throw Error(ErrorCode::BudgetExceeded, "quantize_model: " + std::to_string(budget) + " parameter bytes exceed " +
                                               std::to_string(kParamBudgetBytes));
  }

  RangeTracker input_range;
  std::vector<RangeTracker> out_range(model.layers.size());
  for (const auto& x : calib) {
    input_range.observe(x.view());
    const auto acts = forward_f32_trace(model, x);
    for (std::size_t i = 0; i < acts.size(); ++i) out_range[i].observe(acts[i]);
  }

  QuantizedView view;
  view.input = input_range.params(false);
  view.layers.resize(model.layers.size());
  QuantParams cur = view.input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    LayerQuant& lq = view.layers[i];
    const auto& layer = model.layers[i];
    if (std::holds_alternative<Conv2D>(layer) || std::holds_alternative<Dense>(layer)) {
      const auto& p = model.params[i];
      lq.weight = calibrate(p.weights, true);
      lq.weights.resize(p.weights.size());
      for (std::size_t k = 0; k < p.weights.size(); ++k) lq.weights[k] = quantize_value(p.weights[k], lq.weight);
      const double bias_scale = static_cast<double>(cur.scale) * lq.weight.scale;
      lq.bias.resize(p.bias.size());
      for (std::size_t k = 0; k < p.bias.size(); ++k) lq.bias[k] = quantize_bias(p.bias[k], bias_scale);
      lq.output = out_range[i].params(false);
      lq.requant = quantize_multiplier(bias_scale / lq.output.scale);
    } else if (std::holds_alternative<Softmax>(layer)) {
      lq.output = QuantParams{1.0f / 256.0f, -128};
    } else {
      lq.output = cur;
    }
    cur = lq.output;
  }
  model.quant = std::move(view);

  const std::int64_t worst = worst_case_accumulator(model);
  if (worst >= (std::int64_t{1} << 31)) {
    throw Error(ErrorCode::Internal, "quantize_model: worst-case accumulator " + std::to_string(worst) +
                                         " does not fit in 32 bits");
  }
  model.metadata["quantized"] = "1";
  model.metadata["param_bytes"] = std::to_string(budget);
  model.metadata["activation_bytes"] = std::to_string(activation_bytes(model));
  model.metadata["calibration_samples"] = std::to_string(calib.size());
  return model;
}

std::int64_t worst_case_accumulator(const ModelArtifact& model) {
  std::int64_t worst = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    std::size_t fan_in = 0;
    if (const auto* c = std::get_if<Conv2D>(&model.layers[i])) fan_in = c->kh * c->kw * c->c_in;
    if (const auto* d = std::get_if<Dense>(&model.layers[i])) fan_in = d->n_in;
    if (fan_in == 0) continue;
    std::int64_t bias = 0;
    if (model.quant) {
      for (std::int32_t b : model.quant->layers[i].bias) bias = std::max<std::int64_t>(bias, std::llabs(b));
    }
    worst = std::max(worst, static_cast<std::int64_t>(fan_in) * 255 * 127 + bias);
  }
  return worst;
}

QuantTensor quantize_input(const ModelArtifact& model, const Tensor3& input) {
  if (!model.quant) throw Error(ErrorCode::MissingQuantization, "model has no quantized view");
  check_input(model, input);
  return quantize(input.view(), {input.d0, input.d1, input.d2}, model.quant->input);
}

I8Result forward_i8(const ModelArtifact& model, const QuantTensor& input) {
  if (!model.quant) throw Error(ErrorCode::MissingQuantization, "forward_i8: model has no quantized view");
  const QuantizedView& qv = *model.quant;
  const Shape& is = model.input_shape;
  if (input.shape != std::vector<std::size_t>{is.h, is.w, is.c}) {
    throw Error(ErrorCode::ShapeMismatch, "forward_i8: input shape does not match model");
  }
  if (!(input.params == qv.input)) {
    throw Error(ErrorCode::InvalidArgument, "forward_i8: input quantization differs from the model's input params");
  }
  const auto shapes = infer_shapes(model.layers, model.input_shape);

  I8Result result;
  std::vector<std::int8_t> cur = input.values;
  std::vector<std::int8_t> next;
  QuantParams cur_p = qv.input;
  Shape cur_s = model.input_shape;

  auto requantize = [&](std::int64_t acc, const LayerQuant& lq, Activation act) -> std::int8_t {
    if (acc > std::numeric_limits<std::int32_t>::max() || acc < std::numeric_limits<std::int32_t>::min()) {
      result.overflow = true;
      acc = std::clamp<std::int64_t>(acc, std::numeric_limits<std::int32_t>::min(),
                                     std::numeric_limits<std::int32_t>::max());
    }
    const std::int32_t lo = act == Activation::Relu ? std::max(-128, lq.output.zero_point) : -128;
    const std::int32_t v = lq.output.zero_point + apply_multiplier(static_cast<std::int32_t>(acc), lq.requant);
    return static_cast<std::int8_t>(std::clamp(v, lo, 127));
  };

  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const auto& layer = model.layers[i];
    if (std::holds_alternative<Softmax>(layer)) break;
    const LayerQuant& lq = qv.layers[i];
    const Shape& out_s = shapes[i];
    next.assign(out_s.size(), 0);
    const std::int32_t zp = cur_p.zero_point;

    if (const auto* l = std::get_if<Conv2D>(&layer)) {
      const auto g = layers::conv_geometry(*l, cur_s);
      for (std::size_t oy = 0; oy < g.out.h; ++oy) {
        for (std::size_t ox = 0; ox < g.out.w; ++ox) {
          for (std::size_t oc = 0; oc < l->c_out; ++oc) {
            std::int64_t acc = lq.bias[oc];
            for (std::size_t ky = 0; ky < l->kh; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * l->stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(cur_s.h)) continue;
              for (std::size_t kx = 0; kx < l->kw; ++kx) {
                const auto ix =
                    static_cast<std::ptrdiff_t>(ox * l->stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(cur_s.w)) continue;
                const std::int8_t* xp =
                    &cur[(static_cast<std::size_t>(iy) * cur_s.w + static_cast<std::size_t>(ix)) * cur_s.c];
                const std::int8_t* wp = &lq.weights[((oc * l->kh + ky) * l->kw + kx) * l->c_in];
                std::int32_t part = 0;
                for (std::size_t ic = 0; ic < l->c_in; ++ic) part += (xp[ic] - zp) * wp[ic];
                acc += part;
              }
            }
            next[(oy * g.out.w + ox) * l->c_out + oc] = requantize(acc, lq, l->act);
          }
        }
      }
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      for (std::size_t o = 0; o < d->n_out; ++o) {
        std::int64_t acc = lq.bias[o];
        const std::int8_t* wp = &lq.weights[o * d->n_in];
        for (std::size_t k = 0; k < d->n_in; ++k) acc += (cur[k] - zp) * wp[k];
        next[o] = requantize(acc, lq, d->act);
      }
    } else if (const auto* p = std::get_if<AvgPool2D>(&layer)) {
      const auto n = static_cast<std::int32_t>(p->ph * p->pw);
      for (std::size_t oy = 0; oy < out_s.h; ++oy) {
        for (std::size_t ox = 0; ox < out_s.w; ++ox) {
          for (std::size_t c = 0; c < cur_s.c; ++c) {
            std::int32_t sum = 0;
            for (std::size_t ky = 0; ky < p->ph; ++ky) {
              for (std::size_t kx = 0; kx < p->pw; ++kx) {
                sum += cur[((oy * p->ph + ky) * cur_s.w + ox * p->pw + kx) * cur_s.c + c];
              }
            }
            next[(oy * out_s.w + ox) * cur_s.c + c] = static_cast<std::int8_t>(std::clamp(div_round(sum, n), -128, 127));
          }
        }
      }
    } else if (const auto* p = std::get_if<MaxPool2D>(&layer)) {
      for (std::size_t oy = 0; oy < out_s.h; ++oy) {
        for (std::size_t ox = 0; ox < out_s.w; ++ox) {
          for (std::size_t c = 0; c < cur_s.c; ++c) {
            std::int8_t best = -128;
            for (std::size_t ky = 0; ky < p->ph; ++ky) {
              for (std::size_t kx = 0; kx < p->pw; ++kx) {
                best = std::max(best, cur[((oy * p->ph + ky) * cur_s.w + ox * p->pw + kx) * cur_s.c + c]);
              }
            }
            next[(oy * out_s.w + ox) * cur_s.c + c] = best;
          }
        }
      }
    } else {
      next = cur;  // flatten
    }
    cur.swap(next);
    cur_p = lq.output;
    cur_s = out_s;
  }

  result.scores = cur;
  result.score_params = cur_p;
  result.label = static_cast<std::size_t>(std::max_element(cur.begin(), cur.end()) - cur.begin());
  return result;
}

std::size_t predict(const ModelArtifact& model, const Tensor3& input, Precision precision) {
  if (precision == Precision::Int8) return forward_i8(model, quantize_input(model, input)).label;
  const auto out = forward_f32(model, input);
  return static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
}

double evaluate(const ModelArtifact& model, std::span<const LabeledFeatures> samples, Precision precision) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "evaluate: empty sample set");
  std::size_t correct = 0;
  for (const auto& s : samples) {
    if (predict(model, s.x, precision) == static_cast<std::size_t>(s.y)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace tinyvib
