#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "lutkan/lutkan.hpp"
#include "oracles.hpp"

using namespace lutkan;

namespace {

// Busy-waits for `us` microseconds: more predictable than sleep_for.
ForwardFn spin_stub(double us) {
  return [us](const Matrix& batch) {
    const auto end = std::chrono::steady_clock::now() + std::chrono::duration<double, std::micro>(us);
    while (std::chrono::steady_clock::now() < end) {
    }
    return static_cast<double>(batch.rows());
  };
}

BenchConfig small_config(std::size_t batch) {
  BenchConfig c;
  c.batch_size = batch;
  c.warmup_iters = 2;
  c.timed_iters = 20;
  c.seeds = 3;
  return c;
}

// Student t density integrated with Simpson's rule, inverted by bisection.
double t_cdf(double x, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  const int n = 20000;
  const double h = x / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = i * h;
    const double f = c * std::pow(1 + t * t / df, -(df + 1) / 2);
    s += (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2)) * f;
  }
  return 0.5 + s * h / 3;
}

double t_oracle(double df) {
  double lo = 0.0, hi = 20.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (t_cdf(mid, df) < 0.975 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

BenchReport report_with_mean(double mean, std::size_t batch = 256, int threads = 1) {
  BenchReport r;
  r.config.batch_size = batch;
  r.config.threads = threads;
  r.ms_per_sample_mean = mean;
  return r;
}

}  // namespace

TEST_CASE("t quantile table matches the distribution") {
  for (std::size_t df = 1; df <= 29; ++df) {
    CHECK_MESSAGE(oracle::near(t_quantile_975(df), t_oracle(static_cast<double>(df)), 6e-4), "df=" << df);
  }
  CHECK(t_quantile_975(4) == 2.776);
  CHECK(t_quantile_975(30) == 1.960);
  CHECK(t_quantile_975(1000) == 1.960);
  CHECK_THROWS_AS(t_quantile_975(0), Error);
}

TEST_CASE("summarize_seeds") {
  const std::vector<double> flat(5, 1.0);
  const auto f = summarize_seeds(flat);
  CHECK(f.mean == 1.0);
  CHECK(f.std == 0.0);
  CHECK(f.ci95_halfwidth == 0.0);

  // Sample std 0.097 over five seeds.
  const double a = 0.097 * std::sqrt(2.0);
  const std::vector<double> spread{1.0 - a, 1.0 + a, 1.0, 1.0, 1.0};
  const auto s = summarize_seeds(spread);
  CHECK(oracle::near(s.std, 0.097, 1e-12));
  CHECK(oracle::near(s.ci95_halfwidth, 0.1204, 5e-5));

  const std::vector<double> v{0.9, 1.0, 1.1, 1.0, 1.0};
  const auto t = summarize_seeds(v);
  CHECK(oracle::near(t.mean, 1.0, 1e-15));
  CHECK(oracle::near(t.std, std::sqrt(0.005), 1e-12));
  CHECK(oracle::near(t.ci95_halfwidth, 2.776 * std::sqrt(0.005) / std::sqrt(5.0), 1e-12));

  const std::vector<double> one{3.0};
  CHECK(summarize_seeds(one).mean == 3.0);
  CHECK(summarize_seeds(one).ci95_halfwidth == 0.0);
}

TEST_CASE("stub forward timing") {
  const Matrix data(16, 2, 0.0);
  const auto r = run_bench(spin_stub(1000.0), data, small_config(4));
  // 1 ms per forward over 4 samples.
  CHECK(std::fabs(r.ms_per_sample_mean - 0.25) <= 0.025);
  CHECK(std::fabs(r.ms_per_sample_median - 0.25) <= 0.025);
  CHECK(r.per_seed_ms_per_sample.size() == 3u);
  CHECK(r.max_concurrent_forwards == 1);
  CHECK_FALSE(r.measurement_unreliable);
  CHECK(r.timer_resolution_ns > 0.0);
}

TEST_CASE("harness draws the configured batch and runs the configured count") {
  const Matrix data(10, 3, 0.0);
  std::size_t calls = 0;
  std::size_t rows_seen = 0;
  auto cfg = small_config(7);
  run_bench(
      [&](const Matrix& b) {
        ++calls;
        rows_seen = b.rows();
        CHECK(b.cols() == 3u);
        return 0.0;
      },
      data, cfg);
  CHECK(calls == cfg.seeds * (cfg.warmup_iters + cfg.timed_iters));
  CHECK(rows_seen == 7u);
}

TEST_CASE("speedup") {
  CHECK(oracle::near(speedup(report_with_mean(0.878), report_with_mean(0.0132)), 66.5, 0.05));
  CHECK(speedup(report_with_mean(0.4), report_with_mean(0.4)) == 1.0);
  CHECK_THROWS_AS(speedup(report_with_mean(1.0, 256), report_with_mean(1.0, 1)), Error);
  CHECK_THROWS_AS(speedup(report_with_mean(1.0, 1, 1), report_with_mean(1.0, 1, 2)), Error);
  CHECK_THROWS_AS(speedup(report_with_mean(1.0), report_with_mean(0.0)), Error);

  const Matrix data(8, 1, 0.0);
  const auto slow = run_bench(spin_stub(2000.0), data, small_config(2));
  const auto fast = run_bench(spin_stub(200.0), data, small_config(2));
  CHECK(std::fabs(speedup(slow, fast) - 10.0) <= 1.0);
  // Running the candidate first changes the ratio by well under 20%.
  const auto fast2 = run_bench(spin_stub(200.0), data, small_config(2));
  const auto slow2 = run_bench(spin_stub(2000.0), data, small_config(2));
  CHECK(std::fabs(speedup(slow2, fast2) / speedup(slow, fast) - 1.0) <= 0.2);
}

TEST_CASE("run_bench on real models") {
  const auto m = synth_model(std::vector<std::size_t>{6, 4, 1}, 1);
  const auto data = synth_dataset(m, 200, 2);
  auto cfg = small_config(32);
  const auto ref = run_bench(m, data.features, cfg);
  const auto lut = run_bench(compile(m, CompileConfig{}), data.features, cfg);
  CHECK(ref.config.backend == Backend::reference_bspline);
  CHECK(lut.config.backend == Backend::lut);
  CHECK(ref.ms_per_sample_mean > 0.0);
  CHECK(lut.ms_per_sample_mean > 0.0);
  CHECK(speedup(ref, lut) > 1.0);
  CHECK_THROWS_AS(run_bench(m, Matrix(0, 6), cfg), Error);
  cfg.timed_iters = 0;
  CHECK_THROWS_AS(run_bench(m, data.features, cfg), Error);
}

TEST_CASE("bench report JSON") {
  const Matrix data(4, 1, 0.0);
  auto r = run_bench(spin_stub(50.0), data, small_config(1));
  r.speedup_vs_baseline = 3.5;
  const auto j = nlohmann::json::parse(bench_report_to_json(r));
  for (const char* key : {"config", "ms_per_sample_mean", "ms_per_sample_std", "ci95_halfwidth",
                          "ms_per_sample_median", "speedup_vs_baseline", "per_seed_ms_per_sample",
                          "timer_resolution_ns", "measurement_unreliable", "warnings"}) {
    CHECK_MESSAGE(j.contains(key), key);
  }
  CHECK(j["config"]["batch_size"] == 1);
  CHECK(j["config"]["timed_iters"] == 20);
  CHECK(j["speedup_vs_baseline"] == 3.5);
  CHECK(j["per_seed_ms_per_sample"].size() == 3u);
}

TEST_CASE("backend names") {
  CHECK(parse_backend("lut") == Backend::lut);
  CHECK(parse_backend("bspline") == Backend::reference_bspline);
  CHECK(parse_backend("reference_bspline") == Backend::reference_bspline);
  CHECK_THROWS_AS(parse_backend("gpu"), Error);
  CHECK(to_string(Backend::lut) == "lut");
}

TEST_CASE("sweep") {
  const auto m = synth_model(std::vector<std::size_t>{5, 3, 1}, 7);
  const auto data = synth_dataset(m, 2000, 8);
  SweepGrid grid;
  grid.lut_sizes = {2, 4, 8};
  std::ostringstream csv;
  const auto rows = sweep(m, data, grid, BenchConfig{}, &csv, SweepOptions{false});
  REQUIRE(rows.size() == 3u);
  CHECK(rows[1].lut_bytes == 2 * rows[0].lut_bytes);
  CHECK(rows[2].lut_bytes == 2 * rows[1].lut_bytes);
  CHECK(rows[2].f1 >= rows[0].f1);
  CHECK(std::isnan(rows[0].ms_bs1_mean));
  CHECK(oracle::near(rows[2].delta_f1, rows[2].f1 - 1.0, 1e-12));

  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == kSweepCsvHeader);
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    ++n;
    CHECK(std::count(line.begin(), line.end(), ',') == 15);
  }
  CHECK(n == 3u);
  CHECK(csv.str().find(",nan,") != std::string::npos);

  SUBCASE("grid nesting order") {
    SweepGrid g;
    g.lut_sizes = {2, 4};
    g.quants = {QuantScheme::sym_int8, QuantScheme::asym_uint8};
    g.oobs = {OobPolicy::clip_x, OobPolicy::zero_spline};
    const auto r = sweep(m, data, g, BenchConfig{}, nullptr, SweepOptions{false});
    REQUIRE(r.size() == 8u);
    CHECK(r[0].lut_size == 2);
    CHECK(r[0].quant == QuantScheme::sym_int8);
    CHECK(r[0].oob == OobPolicy::clip_x);
    CHECK(r[1].oob == OobPolicy::zero_spline);
    CHECK(r[2].quant == QuantScheme::asym_uint8);
    CHECK(r[4].lut_size == 4);
  }
  SUBCASE("with latency") {
    SweepGrid g;
    g.lut_sizes = {4};
    BenchConfig b = small_config(1);
    const auto r = sweep(m, data, g, b, nullptr);
    REQUIRE(r.size() == 1u);
    CHECK(r[0].ms_bs1_mean > 0.0);
    CHECK(r[0].ms_bs256_mean > 0.0);
    CHECK(r[0].speedup_bs256 > 1.0);
  }
  SUBCASE("bad grids") {
    SweepGrid g;
    g.lut_sizes = {};
    CHECK_THROWS_AS(sweep(m, data, g, BenchConfig{}, nullptr), Error);
    g.lut_sizes = {1};
    CHECK_THROWS_AS(sweep(m, data, g, BenchConfig{}, nullptr), Error);
  }
}
