#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "tinyvib/error.hpp"
#include "tinyvib/nn.hpp"

// Container layout (all integers little-endian):
//   "TVML" u32 version
//   u32 metadata length, metadata text ("key=value\n", sorted)
//   u32 h, w, c input shape
//   u32 layer count, then per layer: u8 kind, u8 activation, u8 padding, u8 0, u32 x 5
//   per layer: u32 n, f32[n] weights, u32 n, f32[n] biases
//   u8 has_quant; if set: f32 scale, i32 zero point for the input, then per layer
//     f32/i32 weight params, f32/i32 output params, u32 n, i8[n], u32 n, i32[n]

namespace tinyvib {

namespace {

constexpr std::uint32_t kVersion = 1;

enum class Kind : std::uint8_t { Conv = 1, AvgPool = 2, MaxPool = 3, Flatten = 4, Dense = 5, Softmax = 6 };

void put_params(std::string& out, const QuantParams& qp) {
  detail::put_f32(out, qp.scale);
  detail::put_i32(out, qp.zero_point);
}

QuantParams get_params(detail::ByteReader& in) {
  QuantParams qp;
  qp.scale = in.f32();
  qp.zero_point = in.i32();
  qp.validate();
  return qp;
}

void put_layer(std::string& out, const LayerSpec& layer) {
  std::array<std::uint32_t, 5> f{};
  Kind kind{};
  std::uint8_t act = 0, pad = 0;
  if (const auto* c = std::get_if<Conv2D>(&layer)) {
    kind = Kind::Conv;
    act = static_cast<std::uint8_t>(c->act);
    pad = static_cast<std::uint8_t>(c->padding);
    f = {static_cast<std::uint32_t>(c->kh), static_cast<std::uint32_t>(c->kw), static_cast<std::uint32_t>(c->c_in),
         static_cast<std::uint32_t>(c->c_out), static_cast<std::uint32_t>(c->stride)};
  } else if (const auto* p = std::get_if<AvgPool2D>(&layer)) {
    kind = Kind::AvgPool;
    f[0] = static_cast<std::uint32_t>(p->ph);
    f[1] = static_cast<std::uint32_t>(p->pw);
  } else if (const auto* m = std::get_if<MaxPool2D>(&layer)) {
    kind = Kind::MaxPool;
    f[0] = static_cast<std::uint32_t>(m->ph);
    f[1] = static_cast<std::uint32_t>(m->pw);
  } else if (std::holds_alternative<Flatten>(layer)) {
    kind = Kind::Flatten;
  } else if (const auto* d = std::get_if<Dense>(&layer)) {
    kind = Kind::Dense;
    act = static_cast<std::uint8_t>(d->act);
    f[0] = static_cast<std::uint32_t>(d->n_in);
    f[1] = static_cast<std::uint32_t>(d->n_out);
  } else {
    kind = Kind::Softmax;
  }
  detail::put_u8(out, static_cast<std::uint8_t>(kind));
  detail::put_u8(out, act);
  detail::put_u8(out, pad);
  detail::put_u8(out, 0);
  for (auto v : f) detail::put_u32(out, v);
}

LayerSpec get_layer(detail::ByteReader& in) {
  const auto kind = static_cast<Kind>(in.u8());
  const std::uint8_t act_raw = in.u8();
  const std::uint8_t pad_raw = in.u8();
  in.u8();
  std::array<std::size_t, 5> f{};
  for (auto& v : f) v = in.u32();
  if (act_raw > 1 || pad_raw > 1) throw Error(ErrorCode::Format, "model: bad activation/padding code");
  const auto act = static_cast<Activation>(act_raw);
  switch (kind) {
    case Kind::Conv: return Conv2D{f[0], f[1], f[2], f[3], f[4], static_cast<Padding>(pad_raw), act};
    case Kind::AvgPool: return AvgPool2D{f[0], f[1]};
    case Kind::MaxPool: return MaxPool2D{f[0], f[1]};
    case Kind::Flatten: return Flatten{};
    case Kind::Dense: return Dense{f[0], f[1], act};
    case Kind::Softmax: return Softmax{};
  }
  throw Error(ErrorCode::Format, "model: unknown layer kind " + std::to_string(static_cast<int>(kind)));
}

std::vector<float> get_floats(detail::ByteReader& in) {
  const std::uint32_t n = in.u32();
  std::vector<float> v(n);
  for (float& x : v) x = in.f32();
  return v;
}

}  // namespace

std::string serialize_model(const ModelArtifact& model) {
  model.validate();
  std::string out = "TVML";
  detail::put_u32(out, kVersion);

  std::string meta;
  for (const auto& [k, v] : model.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "model: metadata entries may not contain '=' keys or newlines");
    }
    meta += k + "=" + v + "\n";
  }
  detail::put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;

  detail::put_u32(out, static_cast<std::uint32_t>(model.input_shape.h));
  detail::put_u32(out, static_cast<std::uint32_t>(model.input_shape.w));
  detail::put_u32(out, static_cast<std::uint32_t>(model.input_shape.c));
  detail::put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) put_layer(out, l);
  for (const auto& p : model.params) {
    detail::put_u32(out, static_cast<std::uint32_t>(p.weights.size()));
    out += detail::encode_f32(p.weights);
    detail::put_u32(out, static_cast<std::uint32_t>(p.bias.size()));
    out += detail::encode_f32(p.bias);
  }

  detail::put_u8(out, model.quant ? 1 : 0);
  if (model.quant) {
    put_params(out, model.quant->input);
    for (const auto& lq : model.quant->layers) {
      put_params(out, lq.weight);
      put_params(out, lq.output);
      detail::put_u32(out, static_cast<std::uint32_t>(lq.weights.size()));
      for (std::int8_t w : lq.weights) detail::put_u8(out, static_cast<std::uint8_t>(w));
      detail::put_u32(out, static_cast<std::uint32_t>(lq.bias.size()));
      for (std::int32_t b : lq.bias) detail::put_i32(out, b);
    }
  }
  return out;
}

ModelArtifact deserialize_model(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (in.take(4) != "TVML") throw Error(ErrorCode::Format, "model: bad magic");
  if (const auto v = in.u32(); v != kVersion) {
    throw Error(ErrorCode::Format, "model: unsupported container version " + std::to_string(v));
  }
  ModelArtifact m;
  std::istringstream meta(std::string(in.take(in.u32())));
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Format, "model: bad metadata line");
    m.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  m.input_shape.h = in.u32();
  m.input_shape.w = in.u32();
  m.input_shape.c = in.u32();
  const std::uint32_t n_layers = in.u32();
  for (std::uint32_t i = 0; i < n_layers; ++i) m.layers.push_back(get_layer(in));
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerParams p;
    p.weights = get_floats(in);
    p.bias = get_floats(in);
    m.params.push_back(std::move(p));
  }
  m.validate();

  if (in.u8() != 0) {
    QuantizedView qv;
    qv.input = get_params(in);
    QuantParams cur = qv.input;
    for (std::uint32_t i = 0; i < n_layers; ++i) {
      LayerQuant lq;
      lq.weight = get_params(in);
      lq.output = get_params(in);
      lq.weights.resize(in.u32());
      for (auto& w : lq.weights) w = static_cast<std::int8_t>(in.u8());
      lq.bias.resize(in.u32());
      for (auto& b : lq.bias) b = in.i32();
      if (lq.weights.size() != weight_count(m.layers[i]) || lq.bias.size() != bias_count(m.layers[i])) {
        throw Error(ErrorCode::Format, "model: quantized layer " + std::to_string(i) + " has wrongly sized tensors");
      }
      if (!lq.weights.empty()) {
        lq.requant = quantize_multiplier(static_cast<double>(cur.scale) * lq.weight.scale / lq.output.scale);
      }
      cur = lq.output;
      qv.layers.push_back(std::move(lq));
    }
    m.quant = std::move(qv);
  }
  if (!in.done()) throw Error(ErrorCode::Format, "model: trailing bytes");
  return m;
}

void save_model(const std::filesystem::path& path, const ModelArtifact& model) {
  const std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

ModelArtifact load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

}  // namespace tinyvib
