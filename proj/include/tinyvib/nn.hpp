#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tinyvib/quant.hpp"
#include "tinyvib/signals.hpp"
#include "tinyvib/tensor.hpp"

namespace tinyvib {

// 12.59 KiB, the INT8 parameter storage ceiling for deployable models.
inline constexpr std::size_t kParamBudgetBytes = 12892;

enum class Activation : std::uint8_t { None = 0, Relu = 1 };
enum class Padding : std::uint8_t { Valid = 0, Same = 1 };

struct Shape {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  std::size_t size() const noexcept { return h * w * c; }
  bool operator==(const Shape&) const = default;
};

struct Conv2D {
  std::size_t kh = 3, kw = 3, c_in = 1, c_out = 1, stride = 1;
  Padding padding = Padding::Same;
  Activation act = Activation::Relu;
  bool operator==(const Conv2D&) const = default;
};
struct AvgPool2D {
  std::size_t ph = 2, pw = 2;
  bool operator==(const AvgPool2D&) const = default;
};
struct MaxPool2D {
  std::size_t ph = 2, pw = 2;
  bool operator==(const MaxPool2D&) const = default;
};
struct Flatten {
  bool operator==(const Flatten&) const = default;
};
struct Dense {
  std::size_t n_in = 1, n_out = 1;
  Activation act = Activation::None;
  bool operator==(const Dense&) const = default;
};
struct Softmax {
  bool operator==(const Softmax&) const = default;
};

using LayerSpec = std::variant<Conv2D, AvgPool2D, MaxPool2D, Flatten, Dense, Softmax>;

std::string describe(const LayerSpec& layer);

Shape output_shape(const LayerSpec& layer, const Shape& in);
// Output shape of every layer; throws ShapeMismatch on incompatible neighbours.
std::vector<Shape> infer_shapes(std::span<const LayerSpec> layers, const Shape& input);

std::size_t weight_count(const LayerSpec& layer);
std::size_t bias_count(const LayerSpec& layer);
// INT8 weights at 1 byte plus int32 biases at 4 bytes.
std::size_t param_budget(std::span<const LayerSpec> layers);

Shape default_input_shape();
// 4x65x3 -> Conv 3x3 8 ReLU -> Conv 3x3 16 ReLU -> AvgPool 4x4 -> Flatten
// -> Dense 24 ReLU -> Dense 2 -> Softmax.
std::vector<LayerSpec> default_architecture();

struct LayerParams {
  std::vector<float> weights;  // conv: [c_out][kh][kw][c_in]; dense: [n_out][n_in]
  std::vector<float> bias;
  bool operator==(const LayerParams&) const = default;
};

struct LayerQuant {
  QuantParams weight;
  QuantParams output;
  std::vector<std::int8_t> weights;
  std::vector<std::int32_t> bias;
  FixedMultiplier requant;  // derived: input_scale * weight_scale / output_scale
};

struct QuantizedView {
  QuantParams input;
  std::vector<LayerQuant> layers;
};

struct ModelArtifact {
  Shape input_shape;
  std::vector<LayerSpec> layers;
  std::vector<LayerParams> params;
  std::optional<QuantizedView> quant;
  std::map<std::string, std::string> metadata;

  bool quantized() const noexcept { return quant.has_value(); }
  void validate() const;
};

// Peak INT8 scratch: max over layers of input + output bytes.
std::size_t activation_bytes(const ModelArtifact& model);

// Glorot-uniform weights, zero biases, keyed to seed.
ModelArtifact init_model(std::vector<LayerSpec> layers, const Shape& input, std::uint64_t seed);

// Float inference on a [h][w][c] tensor. Returns the final layer output
// (class probabilities when the network ends in Softmax).
std::vector<float> forward_f32(const ModelArtifact& model, const Tensor3& input);
// Outputs of every layer, in order.
std::vector<std::vector<float>> forward_f32_trace(const ModelArtifact& model, const Tensor3& input);

// Fills the quantized view from float activations observed on `calib`.
ModelArtifact quantize_model(ModelArtifact model, std::span<const Tensor3> calib);

QuantTensor quantize_input(const ModelArtifact& model, const Tensor3& input);

struct I8Result {
  std::size_t label = 0;
  std::vector<std::int8_t> scores;  // last non-softmax layer output
  QuantParams score_params;
  bool overflow = false;  // an accumulator left int32 range
};

I8Result forward_i8(const ModelArtifact& model, const QuantTensor& input);

// Largest accumulator magnitude any conv/dense layer can reach with INT8 operands.
std::int64_t worst_case_accumulator(const ModelArtifact& model);

struct LabeledFeatures {
  Tensor3 x;  // [h][w][c]
  Label y = Label::Good;
};

enum class Precision { Float32, Int8 };

std::size_t predict(const ModelArtifact& model, const Tensor3& input, Precision precision);
double evaluate(const ModelArtifact& model, std::span<const LabeledFeatures> samples, Precision precision);

// --- training ---------------------------------------------------------------

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t max_epochs = 200;
  std::size_t patience = 5;
  double learning_rate = 5e-4;
  double decay_rate = 0.95;
  std::size_t decay_steps = 50;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  double validation_fraction = 0.15;
  std::uint64_t seed = 42;

  void validate() const;
  // Staircase decay keyed to optimizer steps.
  double lr_at(std::size_t step) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double lr = 0.0;  // rate used by the epoch's last step
  std::size_t steps = 0;  // optimizer steps completed after this epoch
  bool operator==(const EpochRecord&) const = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t stop_epoch = 0;
  std::size_t best_epoch = 0;
  std::string stop_reason;
  bool operator==(const TrainHistory&) const = default;
};

std::pair<ModelArtifact, TrainHistory> train(std::vector<LayerSpec> arch, const Shape& input,
                                             std::span<const LabeledFeatures> data, const TrainConfig& cfg);

void write_history_csv(std::ostream& out, const TrainHistory& history);

// Double-precision parameters mirrored from a model, used by training and by
// gradient checks.
struct ParamsD {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;
};
ParamsD to_double(const ModelArtifact& model);

// Cross-entropy of a softmax-terminated network on one sample. When `grads`
// is non-null it receives dL/dparams (overwritten) and `input_grad`, if
// non-null, receives dL/dinput.
double loss_and_gradients(std::span<const LayerSpec> layers, const Shape& input, const ParamsD& params,
                          std::span<const double> x, std::size_t target, ParamsD* grads,
                          std::vector<double>* input_grad = nullptr);

// --- container ---------------------------------------------------------------

std::string serialize_model(const ModelArtifact& model);
ModelArtifact deserialize_model(std::string_view bytes);
void save_model(const std::filesystem::path& path, const ModelArtifact& model);
ModelArtifact load_model(const std::filesystem::path& path);

}  // namespace tinyvib
