#include "tinyvib/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "tinyvib/error.hpp"

namespace tinyvib {

namespace {

constexpr std::array<std::string_view, kStageCount> kStageNames{
    "normalize", "spectrogram", "avg_pool", "log_scale", "transpose", "int8_quantize", "cnn_inference"};
constexpr std::array<std::string_view, kStageCount> kStageDescriptions{
    "input normalization to [-1, +1]", "spectrogram calculation (3 axes)", "input compression (AVG pooling)",
    "LOG-scaling spectrogram",         "transposition for CNN",            "INT8 quantization to [-128, +127]",
    "CNN inference"};

using Clock = std::chrono::steady_clock;

std::int64_t since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

std::int64_t median(std::vector<std::int64_t> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(what);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Format, "bad " + what + " '" + s + "'");
  }
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(what);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::Format, "bad " + what + " '" + s + "'");
  }
}

// Keeps the optimizer from discarding a stage's result.
template <class T>
void keep(const T& value) {
  asm volatile("" : : "g"(&value) : "memory");
}

}  // namespace

std::string_view stage_name(Stage stage) noexcept { return kStageNames[static_cast<std::size_t>(stage)]; }
std::string_view stage_description(Stage stage) noexcept {
  return kStageDescriptions[static_cast<std::size_t>(stage)];
}

std::int64_t StageTimings::stage_sum() const noexcept { return std::accumulate(ns.begin(), ns.end(), std::int64_t{0}); }

StageTimings time_stages(const TimeSeries& sample, const ModelArtifact& model, const Preprocessor& prep,
                         std::size_t reps) {
  if (reps < 3) throw Error(ErrorCode::InvalidArgument, "bench: reps must be >= 3");
  if (!model.quantized()) throw Error(ErrorCode::MissingQuantization, "bench: model is not quantized");

  std::array<std::vector<std::int64_t>, kStageCount> per_stage;
  std::vector<std::int64_t> totals;
  for (std::size_t r = 0; r < reps; ++r) {
    std::array<std::int64_t, kStageCount> t{};
    auto t0 = Clock::now();
    const TimeSeries norm = prep.normalize(sample);
    t[0] = since(t0);
    t0 = Clock::now();
    const Tensor3 spec = prep.spectrogram(norm);
    t[1] = since(t0);
    t0 = Clock::now();
    const Tensor3 pooled = prep.pool(spec);
    t[2] = since(t0);
    t0 = Clock::now();
    const Tensor3 logged = prep.log(pooled);
    t[3] = since(t0);
    t0 = Clock::now();
    const Tensor3 hwc = to_channels_last(logged);
    t[4] = since(t0);
    t0 = Clock::now();
    const QuantTensor q = quantize_input(model, hwc);
    t[5] = since(t0);
    t0 = Clock::now();
    const I8Result out = forward_i8(model, q);
    t[6] = since(t0);
    keep(out);
    for (std::size_t s = 0; s < kStageCount; ++s) per_stage[s].push_back(t[s]);

    t0 = Clock::now();
    const I8Result e2e = forward_i8(model, quantize_input(model, to_channels_last(prep(sample))));
    totals.push_back(since(t0));
    keep(e2e);
  }

  StageTimings out;
  out.repetitions = reps;
  out.statistic = Statistic::Median;
  for (std::size_t s = 0; s < kStageCount; ++s) out.ns[s] = median(per_stage[s]);
  out.end_to_end_ns = median(totals);
  return out;
}

void PowerTrace::validate() const {
  if (v1.size() != v2.size()) throw Error(ErrorCode::ShapeMismatch, "trace: v1 and v2 differ in length");
  if (v1.empty()) throw Error(ErrorCode::EmptyInput, "trace: no samples");
  if (!(r_shunt > 0.0)) throw Error(ErrorCode::InvalidArgument, "trace: r_shunt must be > 0");
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "trace: sample_rate must be > 0");
}

EnergyReport energy_from_trace(const PowerTrace& trace, double t_infer) {
  trace.validate();
  if (!(t_infer > 0.0)) throw Error(ErrorCode::InvalidArgument, "energy: t_infer must be > 0");
  const auto n = static_cast<double>(trace.v1.size());
  double vdd = 0.0, idd = 0.0;
  for (std::size_t i = 0; i < trace.v1.size(); ++i) {
    vdd += trace.v2[i];
    idd += (trace.v1[i] - trace.v2[i]) / trace.r_shunt;
  }
  EnergyReport r;
  r.vdd_avg = vdd / n;
  r.idd_avg = idd / n;
  r.p_avg = r.vdd_avg * r.idd_avg;
  r.t_infer = t_infer;
  r.epi = r.p_avg * t_infer;
  return r;
}

PowerTrace read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  PowerTrace t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Format, "trace: empty file");
  std::istringstream header(line);
  std::string field;
  bool have_rate = false, have_r = false;
  while (std::getline(header, field, ',')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Format, "trace: header must carry sample_rate and r_shunt");
    const std::string key = field.substr(0, eq);
    const std::string value = field.substr(eq + 1);
    if (key == "sample_rate") {
      t.sample_rate = parse_double(value, "sample_rate");
      have_rate = true;
    } else if (key == "r_shunt") {
      t.r_shunt = parse_double(value, "r_shunt");
      have_r = true;
    }
  }
  if (!have_rate || !have_r) throw Error(ErrorCode::Format, "trace: header must carry sample_rate and r_shunt");
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == "v1,v2") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorCode::Format, "trace: expected two columns: " + line);
    t.v1.push_back(parse_double(line.substr(0, comma), "v1"));
    t.v2.push_back(parse_double(line.substr(comma + 1), "v2"));
  }
  t.validate();
  return t;
}

void write_trace_csv(const std::filesystem::path& path, const PowerTrace& trace) {
  trace.validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << std::setprecision(17) << "sample_rate=" << trace.sample_rate << ",r_shunt=" << trace.r_shunt << "\n";
  out << "v1,v2\n";
  for (std::size_t i = 0; i < trace.v1.size(); ++i) out << trace.v1[i] << "," << trace.v2[i] << "\n";
}

MemorySummary memory_summary(const ModelArtifact& model) {
  return {param_budget(model.layers), activation_bytes(model), kParamBudgetBytes};
}

std::string report_csv(const BenchReport& report) {
  std::ostringstream out;
  out << "section,key,value\n";
  if (report.timings) {
    const auto& t = *report.timings;
    out << "runtime,repetitions," << t.repetitions << "\n";
    out << "runtime,statistic," << (t.statistic == Statistic::Median ? "median" : "mean") << "\n";
    for (std::size_t s = 0; s < kStageCount; ++s) {
      out << "stage," << kStageNames[s] << "," << t.ns[s] << "\n";
    }
    out << "runtime,end_to_end_ns," << t.end_to_end_ns << "\n";
  }
  if (report.memory) {
    out << "memory,param_bytes," << report.memory->param_bytes << "\n";
    out << "memory,activation_bytes," << report.memory->activation_bytes << "\n";
    out << "memory,budget_bytes," << report.memory->budget_bytes << "\n";
  }
  if (report.energy) {
    const auto& e = *report.energy;
    out << "energy,vdd_avg_v," << num(e.vdd_avg) << "\n";
    out << "energy,idd_avg_a," << num(e.idd_avg) << "\n";
    out << "energy,p_avg_w," << num(e.p_avg) << "\n";
    out << "energy,t_infer_s," << num(e.t_infer) << "\n";
    out << "energy,epi_j," << num(e.epi) << "\n";
  }
  for (const auto& [k, v] : report.info) {
    if (k.find_first_of(",\n") != std::string::npos || v.find_first_of(",\n") != std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "report: info entries may not contain commas or newlines");
    }
    out << "info," << k << "," << v << "\n";
  }
  return out.str();
}

BenchReport parse_report_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != "section,key,value") throw Error(ErrorCode::Format, "report: bad header");
  BenchReport r;
  std::size_t stage_index = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw Error(ErrorCode::Format, "report: expected 3 columns: " + line);
    const std::string section = line.substr(0, c1);
    const std::string key = line.substr(c1 + 1, c2 - c1 - 1);
    const std::string value = line.substr(c2 + 1);
    if (section == "runtime" || section == "stage") {
      if (!r.timings) r.timings.emplace();
      auto& t = *r.timings;
      if (section == "stage") {
        if (stage_index >= kStageCount || key != kStageNames[stage_index]) {
          throw Error(ErrorCode::Format, "report: stage '" + key + "' out of order");
        }
        t.ns[stage_index++] = parse_int(value, key);
      } else if (key == "repetitions") {
        t.repetitions = static_cast<std::size_t>(parse_int(value, key));
      } else if (key == "statistic") {
        t.statistic = value == "mean" ? Statistic::Mean : Statistic::Median;
      } else if (key == "end_to_end_ns") {
        t.end_to_end_ns = parse_int(value, key);
      } else {
        throw Error(ErrorCode::Format, "report: unknown runtime key " + key);
      }
    } else if (section == "memory") {
      if (!r.memory) r.memory.emplace();
      const auto v = static_cast<std::size_t>(parse_int(value, key));
      if (key == "param_bytes") r.memory->param_bytes = v;
      else if (key == "activation_bytes") r.memory->activation_bytes = v;
      else if (key == "budget_bytes") r.memory->budget_bytes = v;
      else throw Error(ErrorCode::Format, "report: unknown memory key " + key);
    } else if (section == "energy") {
      if (!r.energy) r.energy.emplace();
      const double v = parse_double(value, key);
      if (key == "vdd_avg_v") r.energy->vdd_avg = v;
      else if (key == "idd_avg_a") r.energy->idd_avg = v;
      else if (key == "p_avg_w") r.energy->p_avg = v;
      else if (key == "t_infer_s") r.energy->t_infer = v;
      else if (key == "epi_j") r.energy->epi = v;
      else throw Error(ErrorCode::Format, "report: unknown energy key " + key);
    } else if (section == "info") {
      r.info.emplace_back(key, value);
    } else {
      throw Error(ErrorCode::Format, "report: unknown section " + section);
    }
  }
  if (r.timings && stage_index != kStageCount) throw Error(ErrorCode::Format, "report: incomplete stage table");
  return r;
}

std::string report_text(const BenchReport& report) {
  std::ostringstream out;
  out << std::fixed;
  if (report.timings) {
    const auto& t = *report.timings;
    out << "Preprocessing and inference runtime (host, " << (t.statistic == Statistic::Median ? "median" : "mean")
        << " of " << t.repetitions << " reps)\n";
    for (std::size_t s = 0; s < kStageCount; ++s) {
      out << "  " << std::left << std::setw(36) << kStageDescriptions[s] << std::right << std::setw(12)
          << std::setprecision(3) << static_cast<double>(t.ns[s]) / 1e6 << " ms\n";
    }
    out << "  " << std::left << std::setw(36) << "sum of stages" << std::right << std::setw(12) << std::setprecision(3)
        << static_cast<double>(t.stage_sum()) / 1e6 << " ms\n";
    out << "  " << std::left << std::setw(36) << "end-to-end" << std::right << std::setw(12) << std::setprecision(3)
        << static_cast<double>(t.end_to_end_ns) / 1e6 << " ms\n";
  }
  if (report.memory) {
    const auto& m = *report.memory;
    out << "Memory\n";
    out << "  parameters (INT8 weights + int32 biases): " << m.param_bytes << " B of " << m.budget_bytes << " B ("
        << std::setprecision(2) << static_cast<double>(m.param_bytes) / 1024.0 << " KiB)\n";
    out << "  peak INT8 activations: " << m.activation_bytes << " B (" << std::setprecision(2)
        << static_cast<double>(m.activation_bytes) / 1024.0 << " KiB)\n";
  }
  if (report.energy) {
    const auto& e = *report.energy;
    out << "Energy\n" << std::setprecision(4);
    out << "  V_DD,avg = " << e.vdd_avg << " V\n";
    out << "  I_DD,avg = " << e.idd_avg * 1e3 << " mA\n";
    out << "  P_avg    = " << e.p_avg * 1e3 << " mW\n";
    out << "  t        = " << e.t_infer * 1e3 << " ms\n";
    out << "  EPI      = " << e.epi * 1e3 << " mJ\n";
  }
  for (const auto& [k, v] : report.info) out << k << ": " << v << "\n";
  return out.str();
}

}  // namespace tinyvib
