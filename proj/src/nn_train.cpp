#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "forward.hpp"
#include "rng.hpp"
#include "tinyvib/error.hpp"
#include "tinyvib/layers.hpp"
#include "tinyvib/nn.hpp"

namespace tinyvib {

void TrainConfig::validate() const {
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "train: batch_size must be > 0");
  if (max_epochs == 0) throw Error(ErrorCode::InvalidArgument, "train: max_epochs must be > 0");
  if (patience == 0 || patience >= max_epochs) {
    throw Error(ErrorCode::InvalidArgument, "train: patience must satisfy 0 < patience < max_epochs");
  }
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "train: learning_rate must be > 0");
  if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw Error(ErrorCode::InvalidArgument, "train: decay_rate must lie in (0, 1]");
  if (decay_steps == 0) throw Error(ErrorCode::InvalidArgument, "train: decay_steps must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "train: Adam betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "train: epsilon must be > 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "train: validation_fraction must lie in (0, 1)");
  }
}

double TrainConfig::lr_at(std::size_t step) const {
  return learning_rate * std::pow(decay_rate, static_cast<double>(step / decay_steps));
}

ParamsD to_double(const ModelArtifact& model) {
  ParamsD p;
  for (const auto& lp : model.params) {
    p.weights.emplace_back(lp.weights.begin(), lp.weights.end());
    p.bias.emplace_back(lp.bias.begin(), lp.bias.end());
  }
  return p;
}

namespace {

void zero_like(const ParamsD& ref, ParamsD& out) {
  out.weights.resize(ref.weights.size());
  out.bias.resize(ref.bias.size());
  for (std::size_t i = 0; i < ref.weights.size(); ++i) {
    out.weights[i].assign(ref.weights[i].size(), 0.0);
    out.bias[i].assign(ref.bias[i].size(), 0.0);
  }
}

std::vector<std::vector<double>> forward_d(std::span<const LayerSpec> layers, const std::vector<Shape>& shapes,
                                           const Shape& input, const ParamsD& p, std::span<const double> x) {
  return detail::run_forward<double>(
      layers, shapes, input, x, [&](std::size_t i) { return std::span<const double>(p.weights[i]); },
      [&](std::size_t i) { return std::span<const double>(p.bias[i]); });
}

void require_softmax_head(std::span<const LayerSpec> layers) {
  if (layers.empty() || !std::holds_alternative<Softmax>(layers.back())) {
    throw Error(ErrorCode::InvalidArgument, "network must end with a Softmax layer");
  }
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (std::holds_alternative<Softmax>(layers[i])) {
      throw Error(ErrorCode::InvalidArgument, "Softmax is only supported as the final layer");
    }
  }
}

// Adds dL/dparams into `grads`; returns the loss.
double accumulate(std::span<const LayerSpec> layers, const std::vector<Shape>& shapes, const Shape& input,
                  const ParamsD& p, std::span<const double> x, std::size_t target, ParamsD* grads,
                  std::vector<double>* input_grad, std::size_t* predicted) {
  const auto acts = forward_d(layers, shapes, input, p, x);
  const std::size_t last = layers.size() - 1;
  const std::span<const double> logits = last == 0 ? x : std::span<const double>(acts[last - 1]);
  const std::vector<double>& probs = acts[last];
  if (target >= probs.size()) throw Error(ErrorCode::InvalidArgument, "target class out of range");
  if (predicted) *predicted = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());

  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double loss = mx + std::log(sum) - logits[target];
  if (!grads && !input_grad) return loss;

  std::vector<double> dcur(probs.begin(), probs.end());
  dcur[target] -= 1.0;
  std::vector<double> dx, scratch_w, scratch_b;
  auto param_grads = [&](std::size_t i) -> std::pair<std::span<double>, std::span<double>> {
    if (grads) return {grads->weights[i], grads->bias[i]};
    scratch_w.assign(p.weights[i].size(), 0.0);
    scratch_b.assign(p.bias[i].size(), 0.0);
    return {scratch_w, scratch_b};
  };
  for (std::size_t i = last; i-- > 0;) {
    const std::span<const double> in = i == 0 ? x : std::span<const double>(acts[i - 1]);
    const Shape& in_shape = i == 0 ? input : shapes[i - 1];
    dx.assign(in_shape.size(), 0.0);
    const auto& layer = layers[i];
    if (const auto* l = std::get_if<Conv2D>(&layer)) {
      if (l->act == Activation::Relu) layers::relu_backward<double>(acts[i], dcur);
      const auto [dw, db] = param_grads(i);
      layers::conv2d_backward<double>(*l, in_shape, in, p.weights[i], dcur, dx, dw, db);
    } else if (const auto* l = std::get_if<Dense>(&layer)) {
      if (l->act == Activation::Relu) layers::relu_backward<double>(acts[i], dcur);
      const auto [dw, db] = param_grads(i);
      layers::dense_backward<double>(*l, in, p.weights[i], dcur, dx, dw, db);
    } else if (const auto* l = std::get_if<AvgPool2D>(&layer)) {
      layers::avgpool_backward<double>(*l, in_shape, dcur, dx);
    } else if (const auto* l = std::get_if<MaxPool2D>(&layer)) {
      layers::maxpool_backward<double>(*l, in_shape, in, dcur, dx);
    } else {
      std::copy(dcur.begin(), dcur.end(), dx.begin());  // flatten
    }
    dcur.swap(dx);
  }
  if (input_grad) *input_grad = std::move(dcur);
  return loss;
}

double accuracy(std::span<const LayerSpec> layers, const std::vector<Shape>& shapes, const Shape& input,
                const ParamsD& p, const std::vector<std::vector<double>>& xs, std::span<const LabeledFeatures> data,
                std::span<const std::size_t> idx) {
  if (idx.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i : idx) {
    const auto acts = forward_d(layers, shapes, input, p, xs[i]);
    const auto& probs = acts.back();
    const auto pred = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (pred == static_cast<std::size_t>(data[i].y)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

double loss_and_gradients(std::span<const LayerSpec> layers, const Shape& input, const ParamsD& params,
                          std::span<const double> x, std::size_t target, ParamsD* grads,
                          std::vector<double>* input_grad) {
  require_softmax_head(layers);
  const auto shapes = infer_shapes(layers, input);
  if (x.size() != input.size()) throw Error(ErrorCode::ShapeMismatch, "input size does not match shape");
  if (grads) zero_like(params, *grads);
  return accumulate(layers, shapes, input, params, x, target, grads, input_grad, nullptr);
}

std::pair<ModelArtifact, TrainHistory> train(std::vector<LayerSpec> arch, const Shape& input,
                                             std::span<const LabeledFeatures> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw Error(ErrorCode::EmptyInput, "train: empty training set");
  require_softmax_head(arch);
  const auto shapes = infer_shapes(arch, input);
  if (shapes.back().size() != 2) throw Error(ErrorCode::ShapeMismatch, "train: network must output 2 classes");
  const std::size_t budget = param_budget(arch);
  if (budget > kParamBudgetBytes) {
    throw Error(ErrorCode::BudgetExceeded,
                "train: " + std::to_string(budget) + " parameter bytes exceed " + std::to_string(kParamBudgetBytes));
  }

  std::vector<std::vector<double>> xs;
  std::vector<Label> labels;
  xs.reserve(data.size());
  for (const auto& s : data) {
    if (s.x.d0 != input.h || s.x.d1 != input.w || s.x.d2 != input.c) {
      throw Error(ErrorCode::ShapeMismatch, "train: feature tensor does not match input shape");
    }
    xs.emplace_back(s.x.data.begin(), s.x.data.end());
    labels.push_back(s.y);
  }

  std::vector<std::size_t> fit_idx, val_idx;
  if (data.size() >= 2) {
    const auto parts = split_indices(labels, 1.0 - cfg.validation_fraction, detail::mix64(cfg.seed ^ 0x7a11u), true);
    fit_idx = parts.train;
    val_idx = parts.test;
  }
  if (val_idx.empty()) {
    fit_idx.resize(data.size());
    std::iota(fit_idx.begin(), fit_idx.end(), std::size_t{0});
    val_idx = fit_idx;
  }

  ModelArtifact model = init_model(std::move(arch), input, cfg.seed);
  ParamsD p = to_double(model);
  ParamsD g, m, v;
  zero_like(p, g);
  zero_like(p, m);
  zero_like(p, v);
  ParamsD best = p;

  TrainHistory hist;
  double best_val = -1.0;
  std::size_t wait = 0;
  std::size_t step = 0;
  double b1_pow = 1.0, b2_pow = 1.0;

  auto adam = [&](std::vector<double>& param, std::vector<double>& grad, std::vector<double>& m1,
                  std::vector<double>& m2, double lr_t) {
    for (std::size_t k = 0; k < param.size(); ++k) {
      m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * grad[k];
      m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
      param[k] -= lr_t * m1[k] / (std::sqrt(m2[k]) + cfg.epsilon);
    }
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order = fit_idx;
    auto rng = detail::make_stream(cfg.seed, 0xE90Cu, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    double lr = cfg.lr_at(step);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      zero_like(p, g);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        std::size_t pred = 0;
        loss_sum += accumulate(model.layers, shapes, input, p, xs[i], static_cast<std::size_t>(data[i].y), &g,
                               nullptr, &pred);
        if (pred == static_cast<std::size_t>(data[i].y)) ++correct;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      lr = cfg.lr_at(step);
      ++step;
      b1_pow *= cfg.beta1;
      b2_pow *= cfg.beta2;
      const double lr_t = lr * std::sqrt(1.0 - b2_pow) / (1.0 - b1_pow);
      for (std::size_t l = 0; l < p.weights.size(); ++l) {
        for (double& x : g.weights[l]) x *= inv;
        for (double& x : g.bias[l]) x *= inv;
        adam(p.weights[l], g.weights[l], m.weights[l], v.weights[l], lr_t);
        adam(p.bias[l], g.bias[l], m.bias[l], v.bias[l], lr_t);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    rec.val_accuracy = accuracy(model.layers, shapes, input, p, xs, data, val_idx);
    rec.lr = lr;
    rec.steps = step;
    hist.epochs.push_back(rec);

    if (rec.val_accuracy > best_val) {
      best_val = rec.val_accuracy;
      best = p;
      hist.best_epoch = epoch;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      hist.stop_epoch = epoch;
      hist.stop_reason = "early_stopping";
      break;
    }
  }
  if (hist.stop_epoch == 0) {
    hist.stop_epoch = hist.epochs.size();
    hist.stop_reason = "max_epochs";
  }

  for (std::size_t l = 0; l < model.params.size(); ++l) {
    std::transform(best.weights[l].begin(), best.weights[l].end(), model.params[l].weights.begin(),
                   [](double x) { return static_cast<float>(x); });
    std::transform(best.bias[l].begin(), best.bias[l].end(), model.params[l].bias.begin(),
                   [](double x) { return static_cast<float>(x); });
  }

  auto& md = model.metadata;
  md["train.seed"] = std::to_string(cfg.seed);
  md["train.batch_size"] = std::to_string(cfg.batch_size);
  md["train.max_epochs"] = std::to_string(cfg.max_epochs);
  md["train.patience"] = std::to_string(cfg.patience);
  md["train.learning_rate"] = fmt(cfg.learning_rate);
  md["train.decay_rate"] = fmt(cfg.decay_rate);
  md["train.decay_steps"] = std::to_string(cfg.decay_steps);
  md["train.adam"] = fmt(cfg.beta1) + "," + fmt(cfg.beta2) + "," + fmt(cfg.epsilon);
  md["train.validation_fraction"] = fmt(cfg.validation_fraction);
  md["train.samples"] = std::to_string(fit_idx.size());
  md["train.validation_samples"] = std::to_string(val_idx.size());
  md["train.stop_epoch"] = std::to_string(hist.stop_epoch);
  md["train.best_epoch"] = std::to_string(hist.best_epoch);
  md["train.stop_reason"] = hist.stop_reason;
  md["train.best_val_accuracy"] = fmt(best_val);
  return {std::move(model), std::move(hist)};
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  out << "epoch,loss,acc,val_acc,lr\n";
  out << std::setprecision(10);
  for (const auto& e : history.epochs) {
    out << e.epoch << "," << e.loss << "," << e.train_accuracy << "," << e.val_accuracy << "," << e.lr << "\n";
  }
}

}  // namespace tinyvib
