#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "tinyvib/bench.hpp"
#include "tinyvib/error.hpp"
#include "tinyvib/pipeline.hpp"

using namespace tinyvib;

namespace {

PowerTrace constant_trace(double v2, double dv, double r, std::size_t n = 1000) {
  PowerTrace t;
  t.v1.assign(n, v2 + dv);
  t.v2.assign(n, v2);
  t.r_shunt = r;
  return t;
}

// Untrained default network with a quantized view; enough for timing.
const ModelArtifact& bench_model() {
  static const ModelArtifact m = [] {
    const auto samples = synth_dataset(SynthConfig{}, 4, 4);
    const auto feats = featurize(samples, Preprocessor(PreprocessConfig{}));
    std::vector<Tensor3> calib;
    for (const auto& f : feats) calib.push_back(f.x);
    return quantize_model(init_model(default_architecture(), default_input_shape(), 1), calib);
  }();
  return m;
}

bool within(double got, double want, double rel) { return std::abs(got - want) <= rel * std::abs(want); }

}  // namespace

TEST_SUITE("bench") {
  TEST_CASE("energy: constant trace reproduces the reference operating point") {
    const auto t = constant_trace(2.987, 0.31807, 10.0);
    const auto a = energy_from_trace(t, 84.5e-3);
    CHECK(within(a.idd_avg, 31.807e-3, 1e-12));
    CHECK(within(a.vdd_avg, 2.987, 1e-12));
    CHECK(within(a.p_avg, 94.9e-3, 0.005));
    CHECK(within(a.epi, 8.022e-3, 0.005));
    const auto b = energy_from_trace(t, 15.4e-3);
    CHECK(within(b.epi, 1.462e-3, 0.005));
  }

  TEST_CASE("energy: algebraic identities on random traces") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> v(2.5, 3.3), d(0.0, 0.5);
    for (int trial = 0; trial < 50; ++trial) {
      PowerTrace t;
      for (int i = 0; i < 500; ++i) {
        const double v2 = v(rng);
        t.v2.push_back(v2);
        t.v1.push_back(v2 + d(rng));
      }
      const auto r = energy_from_trace(t, 0.0123);
      CHECK(std::abs(r.epi / r.t_infer - r.p_avg) <= 1e-12 * r.p_avg);
      CHECK(std::abs(r.vdd_avg * r.idd_avg - r.p_avg) <= 1e-12 * r.p_avg);

      // Scaling the shunt drop by k scales current and energy by k.
      const double k = 1.7;
      PowerTrace s = t;
      for (std::size_t i = 0; i < s.v1.size(); ++i) s.v1[i] = s.v2[i] + k * (t.v1[i] - t.v2[i]);
      const auto rs = energy_from_trace(s, 0.0123);
      CHECK(within(rs.idd_avg, k * r.idd_avg, 1e-9));
      CHECK(within(rs.epi, k * r.epi, 1e-9));
      CHECK(within(rs.vdd_avg, r.vdd_avg, 1e-15));
    }
  }

  TEST_CASE("energy: zero current and argument checks") {
    const auto r = energy_from_trace(constant_trace(3.0, 0.0, 10.0), 0.05);
    CHECK(r.idd_avg == 0.0);
    CHECK(r.p_avg == 0.0);
    CHECK(r.epi == 0.0);
    CHECK(r.vdd_avg == 3.0);
    CHECK_THROWS_AS(energy_from_trace(PowerTrace{}, 0.05), Error);
    CHECK_THROWS_AS(energy_from_trace(constant_trace(3.0, 0.1, 0.0), 0.05), Error);
    CHECK_THROWS_AS(energy_from_trace(constant_trace(3.0, 0.1, 10.0), 0.0), Error);
    PowerTrace uneven = constant_trace(3.0, 0.1, 10.0);
    uneven.v1.pop_back();
    CHECK_THROWS_AS(energy_from_trace(uneven, 0.05), Error);
  }

  TEST_CASE("trace CSV round trip") {
    namespace fs = std::filesystem;
    const auto path = fs::temp_directory_path() / "tinyvib_trace.csv";
    PowerTrace t = constant_trace(2.987, 0.31807, 10.0, 20);
    t.v1[3] = 3.5;
    t.sample_rate = 12345.5;
    write_trace_csv(path, t);
    const auto back = read_trace_csv(path);
    CHECK(back.v1 == t.v1);
    CHECK(back.v2 == t.v2);
    CHECK(back.sample_rate == t.sample_rate);
    CHECK(back.r_shunt == t.r_shunt);
    fs::remove(path);
    CHECK_THROWS_AS(read_trace_csv(path), Error);
  }

  TEST_CASE("stage timings: seven stages in order, non-vacuous") {
    CHECK(kStageCount == 7);
    const std::array<const char*, 7> names{"normalize", "spectrogram", "avg_pool", "log_scale",
                                           "transpose", "int8_quantize", "cnn_inference"};
    for (std::size_t s = 0; s < kStageCount; ++s) CHECK(stage_name(static_cast<Stage>(s)) == names[s]);

    const auto sample = synth_sample(Label::Bad, SynthConfig{}, 0).series;
    const Preprocessor prep{PreprocessConfig{}};
    const auto t = time_stages(sample, bench_model(), prep, 7);
    CHECK(t.repetitions == 7);
    for (auto ns : t.ns) CHECK(ns >= 0);
    CHECK(t.end_to_end_ns > 0);
    CHECK(static_cast<double>(t.stage_sum()) >= 0.5 * static_cast<double>(t.end_to_end_ns));

    CHECK_THROWS_AS(time_stages(sample, bench_model(), prep, 2), Error);
    auto plain = bench_model();
    plain.quant.reset();
    CHECK_THROWS_AS(time_stages(sample, plain, prep, 5), Error);
  }

  TEST_CASE("stage medians are stable when repetitions double") {
    const auto sample = synth_sample(Label::Good, SynthConfig{}, 1).series;
    const Preprocessor prep{PreprocessConfig{}};
    time_stages(sample, bench_model(), prep, 5);  // warm caches
    // Sub-50 us stages sit at timer-noise level and are not compared.
    bool stable = false;
    for (int attempt = 0; attempt < 3 && !stable; ++attempt) {
      const auto a = time_stages(sample, bench_model(), prep, 15);
      const auto b = time_stages(sample, bench_model(), prep, 30);
      stable = within(static_cast<double>(b.end_to_end_ns), static_cast<double>(a.end_to_end_ns), 0.25);
      for (std::size_t s = 0; s < kStageCount; ++s) {
        if (a.ns[s] < 50000) continue;
        stable = stable && within(static_cast<double>(b.ns[s]), static_cast<double>(a.ns[s]), 0.25);
      }
    }
    CHECK(stable);
  }

  TEST_CASE("report CSV round trip and content") {
    const auto sample = synth_sample(Label::Good, SynthConfig{}, 2).series;
    BenchReport r;
    r.timings = time_stages(sample, bench_model(), Preprocessor{PreprocessConfig{}}, 3);
    r.energy = energy_from_trace(constant_trace(2.987, 0.31807, 10.0), 84.5e-3);
    r.memory = memory_summary(bench_model());
    r.info = {{"n_train", "872"}, {"note", "host timings"}};
    const auto csv = report_csv(r);
    CHECK(parse_report_csv(csv) == r);
    CHECK(csv.rfind("section,key,value\n", 0) == 0);

    std::size_t stage_rows = 0;
    std::istringstream lines(csv);
    for (std::string line; std::getline(lines, line);) stage_rows += line.rfind("stage,", 0) == 0;
    CHECK(stage_rows == 7);
    CHECK(r.memory->param_bytes <= kParamBudgetBytes);

    const auto text = report_text(r);
    CHECK(text.find("CNN inference") != std::string::npos);
    CHECK(text.find("EPI") != std::string::npos);

    BenchReport empty;
    CHECK(parse_report_csv(report_csv(empty)) == empty);
    CHECK_THROWS_AS(parse_report_csv("nonsense"), Error);
  }
}
