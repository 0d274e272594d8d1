#include "tinyvib/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "tinyvib/error.hpp"

namespace tinyvib {

SynthConfig RunConfig::synth_config() const {
  SynthConfig s = synth;
  s.seed = seed;
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double to_double(std::string_view key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::Format, std::string(key) + ": expected a number, got '" + v + "'");
}

std::uint64_t to_u64(std::string_view key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw Error(ErrorCode::Format, std::string(key) + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(std::string_view key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::Format, std::string(key) + ": expected true/false, got '" + v + "'");
}

struct Field {
  std::string_view key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view, const std::string&)> set;
};

#define TV_REAL(KEY, EXPR)                                                                       \
  Field {                                                                                        \
    KEY, [](const RunConfig& c) { return fmt_double(c.EXPR); },                                  \
        [](RunConfig& c, std::string_view k, const std::string& v) { c.EXPR = to_double(k, v); } \
  }
#define TV_UINT(KEY, EXPR, TYPE)                                                                               \
  Field {                                                                                                      \
    KEY, [](const RunConfig& c) { return std::to_string(c.EXPR); },                                            \
        [](RunConfig& c, std::string_view k, const std::string& v) { c.EXPR = static_cast<TYPE>(to_u64(k, v)); } \
  }
#define TV_TEXT(KEY, EXPR)                                                                               \
  Field {                                                                                                \
    KEY, [](const RunConfig& c) { return c.EXPR; }, [](RunConfig& c, std::string_view, const std::string& v) { \
      c.EXPR = v;                                                                                        \
    }                                                                                                    \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      TV_UINT("seed", seed, std::uint64_t),
      TV_UINT("synth.n_good", n_good, std::size_t),
      TV_UINT("synth.n_bad", n_bad, std::size_t),
      TV_REAL("synth.sample_rate", synth.sample_rate),
      TV_REAL("synth.base_freq", synth.base_freq),
      TV_UINT("synth.n_inserts", synth.n_inserts, std::uint32_t),
      Field{"synth.harmonic_amps",
            [](const RunConfig& c) {
              std::string out;
              for (double a : c.synth.harmonic_amps) out += (out.empty() ? "" : ",") + fmt_double(a);
              return out;
            },
            [](RunConfig& c, std::string_view k, const std::string& v) {
              std::vector<double> amps;
              std::istringstream in(v);
              std::string item;
              while (std::getline(in, item, ',')) amps.push_back(to_double(k, trim(item)));
              c.synth.harmonic_amps = std::move(amps);
            }},
      TV_REAL("synth.chatter_low_hz", synth.chatter.low_hz),
      TV_REAL("synth.chatter_high_hz", synth.chatter.high_hz),
      TV_REAL("synth.chatter_amp", synth.chatter.amplitude),
      TV_UINT("synth.chatter_tones", synth.chatter_tones, std::uint32_t),
      TV_REAL("synth.noise_floor", synth.noise_floor),
      TV_REAL("split.ratio", split_ratio),
      Field{"split.stratified", [](const RunConfig& c) { return std::string(c.stratified ? "true" : "false"); },
            [](RunConfig& c, std::string_view k, const std::string& v) { c.stratified = to_bool(k, v); }},
      TV_REAL("prep.alpha", prep.alpha),
      TV_REAL("prep.eps", prep.eps),
      TV_UINT("prep.nfft", prep.stft.nfft, std::size_t),
      TV_UINT("prep.overlap", prep.stft.overlap, std::size_t),
      TV_UINT("prep.pool_time", prep.pool_time, std::size_t),
      TV_UINT("prep.pool_freq", prep.pool_freq, std::size_t),
      Field{"prep.norm", [](const RunConfig& c) { return std::string(c.prep.norm == NormMode::Joint ? "joint" : "per_axis"); },
            [](RunConfig& c, std::string_view k, const std::string& v) {
              if (v == "joint") c.prep.norm = NormMode::Joint;
              else if (v == "per_axis") c.prep.norm = NormMode::PerAxis;
              else throw Error(ErrorCode::Format, std::string(k) + ": expected joint or per_axis, got '" + v + "'");
            }},
      TV_UINT("train.batch_size", train.batch_size, std::size_t),
      TV_UINT("train.max_epochs", train.max_epochs, std::size_t),
      TV_UINT("train.patience", train.patience, std::size_t),
      TV_REAL("train.learning_rate", train.learning_rate),
      TV_REAL("train.decay_rate", train.decay_rate),
      TV_UINT("train.decay_steps", train.decay_steps, std::size_t),
      TV_REAL("train.beta1", train.beta1),
      TV_REAL("train.beta2", train.beta2),
      TV_REAL("train.epsilon", train.epsilon),
      TV_REAL("train.validation_fraction", train.validation_fraction),
      TV_UINT("quant.calib_samples", calib_samples, std::size_t),
      TV_UINT("bench.reps", bench_reps, std::size_t),
      TV_REAL("energy.t_infer_ms", energy_t_infer_ms),
      TV_TEXT("paths.dataset_dir", dataset_dir),
      TV_TEXT("paths.model", model_path),
      TV_TEXT("paths.report_dir", report_dir),
      TV_TEXT("paths.trace", trace_path),
  };
  return table;
}

#undef TV_REAL
#undef TV_UINT
#undef TV_TEXT

const Field& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw Error(ErrorCode::Format, "unknown config key '" + std::string(key) + "'");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  find_field(key).set(cfg, key, trim(value));
}

std::string get_config_value(const RunConfig& cfg, std::string_view key) { return find_field(key).get(cfg); }

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::Format, "config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_config_value(cfg, trim(body.substr(0, eq)), body.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(e.code(), "config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::vector<Violation> validate_config(const RunConfig& cfg) {
  std::vector<Violation> v;
  auto check = [&](bool ok, const char* field, const char* msg) {
    if (!ok) v.push_back({field, msg});
  };
  const auto& s = cfg.synth;
  const double nyquist = s.sample_rate / 2.0;
  check(cfg.n_good + cfg.n_bad > 0, "synth.n_good", "dataset must contain at least one sample");
  check(s.sample_rate > 0.0, "synth.sample_rate", "must be > 0");
  check(s.base_freq > 0.0 && s.base_freq < nyquist, "synth.base_freq", "must lie in (0, sample_rate/2)");
  check(s.n_inserts >= 1, "synth.n_inserts", "must be >= 1");
  bool amps_ok = true, harmonics_ok = true;
  for (std::size_t h = 0; h < s.harmonic_amps.size(); ++h) {
    amps_ok = amps_ok && s.harmonic_amps[h] >= 0.0;
    harmonics_ok = harmonics_ok && !(s.harmonic_amps[h] > 0.0 && s.tooth_pass_hz() * static_cast<double>(h + 1) >= nyquist);
  }
  check(amps_ok, "synth.harmonic_amps", "amplitudes must be >= 0");
  check(harmonics_ok, "synth.harmonic_amps", "a harmonic lies above the Nyquist frequency");
  check(s.chatter.low_hz > 0.0 && s.chatter.low_hz < s.chatter.high_hz, "synth.chatter_low_hz",
        "must satisfy 0 < low < high");
  check(s.chatter.high_hz < nyquist, "synth.chatter_high_hz", "must be below sample_rate/2");
  check(s.chatter.amplitude >= 0.0, "synth.chatter_amp", "must be >= 0");
  check(s.chatter_tones >= 1, "synth.chatter_tones", "must be >= 1");
  check(s.noise_floor >= 0.0, "synth.noise_floor", "must be >= 0");
  check(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0, "split.ratio", "must lie in (0, 1)");
  check(cfg.prep.alpha >= 0.0 && cfg.prep.alpha <= 1.0, "prep.alpha", "must lie in [0, 1]");
  check(cfg.prep.eps > 0.0, "prep.eps", "must be > 0");
  check(cfg.prep.stft.nfft >= 2 && (cfg.prep.stft.nfft & (cfg.prep.stft.nfft - 1)) == 0, "prep.nfft",
        "must be a power of two");
  check(cfg.prep.stft.overlap < cfg.prep.stft.nfft, "prep.overlap", "must be < nfft");
  check(cfg.prep.pool_time >= 1, "prep.pool_time", "must be >= 1");
  check(cfg.prep.pool_freq >= 1, "prep.pool_freq", "must be >= 1");
  const auto& t = cfg.train;
  check(t.batch_size >= 1, "train.batch_size", "must be >= 1");
  check(t.max_epochs >= 1, "train.max_epochs", "must be >= 1");
  check(t.patience >= 1 && t.patience < t.max_epochs, "train.patience", "must satisfy 0 < patience < max_epochs");
  check(t.learning_rate > 0.0, "train.learning_rate", "must be > 0");
  check(t.decay_rate > 0.0 && t.decay_rate <= 1.0, "train.decay_rate", "must lie in (0, 1]");
  check(t.decay_steps >= 1, "train.decay_steps", "must be >= 1");
  check(t.beta1 > 0.0 && t.beta1 < 1.0, "train.beta1", "must lie in (0, 1)");
  check(t.beta2 > 0.0 && t.beta2 < 1.0, "train.beta2", "must lie in (0, 1)");
  check(t.epsilon > 0.0, "train.epsilon", "must be > 0");
  check(t.validation_fraction > 0.0 && t.validation_fraction < 1.0, "train.validation_fraction", "must lie in (0, 1)");
  check(cfg.calib_samples >= 1, "quant.calib_samples", "must be >= 1");
  check(cfg.bench_reps >= 3, "bench.reps", "must be >= 3");
  check(cfg.energy_t_infer_ms > 0.0, "energy.t_infer_ms", "must be > 0");
  check(!cfg.model_path.empty(), "paths.model", "must be set");
  check(!cfg.report_dir.empty(), "paths.report_dir", "must be set");

  namespace fs = std::filesystem;
  std::error_code ec;
  if (!cfg.model_path.empty()) {
    const fs::path parent = fs::path(cfg.model_path).parent_path();
    check(parent.empty() || !fs::exists(parent, ec) || fs::is_directory(parent, ec), "paths.model",
          "parent exists and is not a directory");
    check(!fs::is_directory(cfg.model_path, ec), "paths.model", "is a directory");
  }
  if (!cfg.report_dir.empty()) {
    check(!fs::exists(cfg.report_dir, ec) || fs::is_directory(cfg.report_dir, ec), "paths.report_dir",
          "exists and is not a directory");
  }
  if (!cfg.dataset_dir.empty()) {
    check(!fs::exists(cfg.dataset_dir, ec) || fs::is_directory(cfg.dataset_dir, ec), "paths.dataset_dir",
          "exists and is not a directory");
  }
  if (!cfg.trace_path.empty()) check(fs::is_regular_file(cfg.trace_path, ec), "paths.trace", "file not found");
  return v;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t config_hash(const RunConfig& cfg) {
  // Output locations do not change any produced number.
  std::string text;
  for (const auto& f : fields()) {
    if (f.key.starts_with("paths.")) continue;
    text += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return fnv1a64(text);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

}  // namespace tinyvib
