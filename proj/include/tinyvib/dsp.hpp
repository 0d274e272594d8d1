#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tinyvib/signals.hpp"
#include "tinyvib/tensor.hpp"

namespace tinyvib {

// Joint uses one min/max over all three axes; PerAxis rescales each axis alone.
enum class NormMode { Joint, PerAxis };

// x -> 2 (x - min) / (max - min) - 1. Throws DegenerateInput when max == min.
TimeSeries instance_normalize(const TimeSeries& x, NormMode mode = NormMode::Joint);
TimeSeriesSample instance_normalize(const TimeSeriesSample& x, NormMode mode = NormMode::Joint);

struct WindowFn {
  double alpha = 0.5;
  std::vector<float> coeffs;
};

// Symmetric tapered-cosine window: alpha = 0 is rectangular, alpha = 1 is Hann.
WindowFn tukey(std::size_t length, double alpha);

// Iterative radix-2 decimation-in-time FFT (forward, e^{-j...} kernel).
class Fft {
 public:
  explicit Fft(std::size_t n);
  std::size_t size() const noexcept { return n_; }
  void transform(std::span<std::complex<double>> data) const;

 private:
  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddle_;
};

struct StftParams {
  std::size_t nfft = 256;
  std::size_t overlap = 8;

  std::size_t hop() const noexcept { return nfft - overlap; }
  std::size_t bins() const noexcept { return nfft / 2 + 1; }
  std::size_t frames(std::size_t length) const noexcept {
    return length < nfft ? 0 : (length - nfft) / hop() + 1;
  }
};

// [axis][time][freq] magnitudes.
struct Spectrogram {
  Tensor3 data;
  StftParams params;
};

// Magnitude STFT of one axis, written row-major [frame][bin] into `out`.
void spectrogram_axis(std::span<const float> x, const WindowFn& win, const StftParams& params, const Fft& fft,
                      std::span<float> out);
Spectrogram spectrogram(const TimeSeries& x, const WindowFn& win, const StftParams& params = {});

// Mean pooling over dims 1 and 2 with stride equal to the pool size. A trailing
// partial window is averaged over the cells it actually covers.
Tensor3 avg_pool(const Tensor3& in, std::size_t pool_d1, std::size_t pool_d2);

// Elementwise log10(max(v, eps)).
Tensor3 log_scale(const Tensor3& in, double eps);

// [axis][time][freq] -> [time][freq][axis] for the CNN.
Tensor3 to_channels_last(const Tensor3& chw);

struct PreprocessConfig {
  double alpha = 0.5;
  double eps = 1e-12;
  std::size_t pool_time = 8;
  std::size_t pool_freq = 2;
  NormMode norm = NormMode::Joint;
  StftParams stft;

  void validate() const;
};

// Holds the window and FFT plan; every stage is exposed for benchmarking.
class Preprocessor {
 public:
  explicit Preprocessor(PreprocessConfig cfg);

  const PreprocessConfig& config() const noexcept { return cfg_; }
  const WindowFn& window() const noexcept { return window_; }

  TimeSeries normalize(const TimeSeries& x) const { return instance_normalize(x, cfg_.norm); }
  Tensor3 spectrogram(const TimeSeries& normalized) const;
  Tensor3 pool(const Tensor3& spec) const { return avg_pool(spec, cfg_.pool_time, cfg_.pool_freq); }
  Tensor3 log(const Tensor3& pooled) const { return log_scale(pooled, cfg_.eps); }

  // normalize -> spectrogram -> pool -> log, output [axis][time][freq].
  Tensor3 operator()(const TimeSeries& x) const;

 private:
  PreprocessConfig cfg_;
  WindowFn window_;
  Fft fft_;
};

Tensor3 preprocess(const TimeSeries& x, const PreprocessConfig& cfg = {});

// Flat float32-LE tensor preceded by a text header terminated by "end_header".
void write_feature_file(const std::filesystem::path& path, const Tensor3& t,
                        const std::map<std::string, std::string>& header);
Tensor3 read_feature_file(const std::filesystem::path& path, std::map<std::string, std::string>* header = nullptr);

}  // namespace tinyvib
