#include "tinyvib/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "binary_io.hpp"
#include "tinyvib/error.hpp"

namespace tinyvib {

namespace {

void normalize_range(std::span<const float> in, std::span<float> out, double lo, double hi) {
  const double span = hi - lo;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = static_cast<float>(2.0 * (static_cast<double>(in[i]) - lo) / span - 1.0);
  }
}

}  // namespace

TimeSeries instance_normalize(const TimeSeries& x, NormMode mode) {
  x.validate();
  if (x.length() == 0) throw Error(ErrorCode::EmptyInput, "normalize: empty sample");
  TimeSeries out = x;
  if (mode == NormMode::Joint) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& axis : x.axes) {
      const auto [mn, mx] = std::minmax_element(axis.begin(), axis.end());
      lo = std::min(lo, static_cast<double>(*mn));
      hi = std::max(hi, static_cast<double>(*mx));
    }
    if (!(hi > lo)) throw Error(ErrorCode::DegenerateInput, "normalize: constant sample (max == min)");
    for (std::size_t a = 0; a < 3; ++a) normalize_range(x.axes[a], out.axes[a], lo, hi);
  } else {
    for (std::size_t a = 0; a < 3; ++a) {
      const auto [mn, mx] = std::minmax_element(x.axes[a].begin(), x.axes[a].end());
      if (!(*mx > *mn)) {
        throw Error(ErrorCode::DegenerateInput, "normalize: constant axis " + std::to_string(a));
      }
      normalize_range(x.axes[a], out.axes[a], *mn, *mx);
    }
  }
  return out;
}

TimeSeriesSample instance_normalize(const TimeSeriesSample& x, NormMode mode) {
  return {instance_normalize(x.series, mode), x.label, x.origin};
}

WindowFn tukey(std::size_t length, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "tukey: alpha must lie in [0, 1]");
  WindowFn w{alpha, std::vector<float>(length, 1.0f)};
  if (length < 2 || alpha == 0.0) return w;
  const double denom = static_cast<double>(length - 1);
  // Evaluate the rising half and mirror it so symmetry is exact.
  for (std::size_t n = 0; n < (length + 1) / 2; ++n) {
    const double x = static_cast<double>(n) / denom;
    double v = 1.0;
    if (x < alpha / 2.0) v = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * x / alpha));
    w.coeffs[n] = static_cast<float>(v);
    w.coeffs[length - 1 - n] = static_cast<float>(v);
  }
  return w;
}

Fft::Fft(std::size_t n) : n_(n), bitrev_(n), twiddle_(n / 2) {
  if (n == 0 || !std::has_single_bit(n)) throw Error(ErrorCode::InvalidArgument, "fft: size must be a power of two");
  const int bits = std::countr_zero(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
    bitrev_[i] = r;
  }
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle_[k] = {std::cos(angle), std::sin(angle)};
  }
}

void Fft::transform(std::span<std::complex<double>> data) const {
  if (data.size() != n_) throw Error(ErrorCode::ShapeMismatch, "fft: buffer size does not match plan");
  for (std::size_t i = 0; i < n_; ++i) {
    if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const auto t = twiddle_[k * step] * data[start + k + half];
        data[start + k + half] = data[start + k] - t;
        data[start + k] += t;
      }
    }
  }
}

void spectrogram_axis(std::span<const float> x, const WindowFn& win, const StftParams& params, const Fft& fft,
                      std::span<float> out) {
  if (params.overlap >= params.nfft) throw Error(ErrorCode::InvalidArgument, "stft: overlap must be < nfft");
  if (win.coeffs.size() != params.nfft || fft.size() != params.nfft) {
    throw Error(ErrorCode::ShapeMismatch, "stft: window/fft length must equal nfft");
  }
  const std::size_t frames = params.frames(x.size());
  const std::size_t bins = params.bins();
  if (out.size() != frames * bins) throw Error(ErrorCode::ShapeMismatch, "stft: output buffer has wrong size");
  std::vector<std::complex<double>> buf(params.nfft);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * params.hop();
    for (std::size_t m = 0; m < params.nfft; ++m) {
      buf[m] = static_cast<double>(win.coeffs[m]) * static_cast<double>(x[start + m]);
    }
    fft.transform(buf);
    for (std::size_t k = 0; k < bins; ++k) out[f * bins + k] = static_cast<float>(std::abs(buf[k]));
  }
}

Spectrogram spectrogram(const TimeSeries& x, const WindowFn& win, const StftParams& params) {
  x.validate();
  const Fft fft(params.nfft);
  Spectrogram out{Tensor3(3, params.frames(x.length()), params.bins()), params};
  const std::size_t plane = out.data.d1 * out.data.d2;
  for (std::size_t a = 0; a < 3; ++a) {
    spectrogram_axis(x.axes[a], win, params, fft, std::span<float>(out.data.data).subspan(a * plane, plane));
  }
  return out;
}

Tensor3 avg_pool(const Tensor3& in, std::size_t pool_d1, std::size_t pool_d2) {
  if (pool_d1 == 0 || pool_d2 == 0) throw Error(ErrorCode::InvalidArgument, "avg_pool: pool size must be >= 1");
  Tensor3 out(in.d0, (in.d1 + pool_d1 - 1) / pool_d1, (in.d2 + pool_d2 - 1) / pool_d2);
  for (std::size_t c = 0; c < in.d0; ++c) {
    for (std::size_t i = 0; i < out.d1; ++i) {
      const std::size_t i_end = std::min(in.d1, (i + 1) * pool_d1);
      for (std::size_t j = 0; j < out.d2; ++j) {
        const std::size_t j_end = std::min(in.d2, (j + 1) * pool_d2);
        double sum = 0.0;
        for (std::size_t ii = i * pool_d1; ii < i_end; ++ii) {
          for (std::size_t jj = j * pool_d2; jj < j_end; ++jj) sum += in(c, ii, jj);
        }
        const auto count = static_cast<double>((i_end - i * pool_d1) * (j_end - j * pool_d2));
        out(c, i, j) = static_cast<float>(sum / count);
      }
    }
  }
  return out;
}

Tensor3 log_scale(const Tensor3& in, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "log_scale: eps must be > 0");
  Tensor3 out = in;
  for (float& v : out.data) v = static_cast<float>(std::log10(std::max(static_cast<double>(v), eps)));
  return out;
}

Tensor3 to_channels_last(const Tensor3& chw) {
  Tensor3 out(chw.d1, chw.d2, chw.d0);
  for (std::size_t c = 0; c < chw.d0; ++c) {
    for (std::size_t i = 0; i < chw.d1; ++i) {
      for (std::size_t j = 0; j < chw.d2; ++j) out(i, j, c) = chw(c, i, j);
    }
  }
  return out;
}

void PreprocessConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::InvalidArgument, "prep: alpha must lie in [0, 1]");
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "prep: eps must be > 0");
  if (pool_time == 0 || pool_freq == 0) throw Error(ErrorCode::InvalidArgument, "prep: pool sizes must be >= 1");
  if (stft.nfft == 0 || !std::has_single_bit(stft.nfft)) {
    throw Error(ErrorCode::InvalidArgument, "prep: nfft must be a power of two");
  }
  if (stft.overlap >= stft.nfft) throw Error(ErrorCode::InvalidArgument, "prep: overlap must be < nfft");
}

Preprocessor::Preprocessor(PreprocessConfig cfg)
    : cfg_((cfg.validate(), cfg)), window_(tukey(cfg_.stft.nfft, cfg_.alpha)), fft_(cfg_.stft.nfft) {}

Tensor3 Preprocessor::spectrogram(const TimeSeries& normalized) const {
  const std::size_t frames = cfg_.stft.frames(normalized.length());
  Tensor3 out(3, frames, cfg_.stft.bins());
  const std::size_t plane = out.d1 * out.d2;
  for (std::size_t a = 0; a < 3; ++a) {
    spectrogram_axis(normalized.axes[a], window_, cfg_.stft, fft_, std::span<float>(out.data).subspan(a * plane, plane));
  }
  return out;
}

Tensor3 Preprocessor::operator()(const TimeSeries& x) const { return log(pool(spectrogram(normalize(x)))); }

Tensor3 preprocess(const TimeSeries& x, const PreprocessConfig& cfg) { return Preprocessor(cfg)(x); }

void write_feature_file(const std::filesystem::path& path, const Tensor3& t,
                        const std::map<std::string, std::string>& header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "tinyvib-features 1\n";
  out << "shape=" << t.d0 << "x" << t.d1 << "x" << t.d2 << "\n";
  out << "dtype=f32le\n";
  for (const auto& [k, v] : header) {
    if (k == "shape" || k == "dtype") continue;
    out << k << "=" << v << "\n";
  }
  out << "end_header\n";
  const std::string bytes = detail::encode_f32(t.data);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

Tensor3 read_feature_file(const std::filesystem::path& path, std::map<std::string, std::string>* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "tinyvib-features 1") {
    throw Error(ErrorCode::Format, "not a feature file: " + path.string());
  }
  std::map<std::string, std::string> fields;
  while (std::getline(in, line) && line != "end_header") {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Format, "feature header: bad line '" + line + "'");
    fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (line != "end_header") throw Error(ErrorCode::Format, "feature header not terminated");
  std::size_t d0 = 0, d1 = 0, d2 = 0;
  char x1 = 0, x2 = 0;
  std::istringstream shape(fields["shape"]);
  if (!(shape >> d0 >> x1 >> d1 >> x2 >> d2) || x1 != 'x' || x2 != 'x') {
    throw Error(ErrorCode::Format, "feature header: bad shape");
  }
  std::ostringstream rest;
  rest << in.rdbuf();
  const std::string bytes = rest.str();
  Tensor3 t(d0, d1, d2);
  if (bytes.size() != t.size() * 4) throw Error(ErrorCode::Format, "feature payload size does not match shape");
  detail::ByteReader reader(bytes);
  for (float& v : t.data) v = reader.f32();
  if (header) *header = std::move(fields);
  return t;
}

}  // namespace tinyvib
