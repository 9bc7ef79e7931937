#include "lutkan/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "lutkan/error.hpp"
#include "lutkan/metrics.hpp"
#include "lutkan/parallel.hpp"
#include "lutkan/rng.hpp"
#include "lutkan/runtime.hpp"

namespace lutkan {

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kT975[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                            2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
                            2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045};

// Per-sample timings below this many timer ticks are flagged unreliable.
constexpr double kMinTicksPerIteration = 20.0;

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string_view to_string(Backend b) {
  return b == Backend::lut ? "lut" : "reference_bspline";
}

Backend parse_backend(std::string_view s) {
  if (s == "lut") return Backend::lut;
  if (s == "bspline" || s == "reference_bspline") return Backend::reference_bspline;
  throw Error(ErrorKind::config, "unknown backend '" + std::string(s) + "' (expected bspline or lut)");
}

void BenchConfig::validate() const {
  if (batch_size == 0 || warmup_iters == 0 || timed_iters == 0 || seeds == 0 || threads < 1) {
    throw Error(ErrorKind::config, "bench counts (batch, warmup, iters, seeds, threads) must be >= 1");
  }
}

double t_quantile_975(std::size_t df) {
  if (df == 0) throw Error(ErrorKind::range, "t quantile needs at least one degree of freedom");
  if (df <= std::size(kT975)) return kT975[df - 1];
  return 1.960;
}

SeedSummary summarize_seeds(std::span<const double> per_seed) {
  SeedSummary s;
  const std::size_t n = per_seed.size();
  if (n == 0) return s;
  s.mean = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / static_cast<double>(n);
  if (n < 2) return s;
  double ss = 0.0;
  for (double v : per_seed) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(n - 1));
  s.ci95_halfwidth = t_quantile_975(n - 1) * s.std / std::sqrt(static_cast<double>(n));
  return s;
}

double measure_timer_resolution_ns() {
  double best = std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 200; ++trial) {
    const auto t0 = Clock::now();
    auto t1 = Clock::now();
    while (t1 == t0) t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  return best;
}

BenchReport run_bench(const ForwardFn& forward, const Matrix& data, const BenchConfig& config) {
  config.validate();
  if (data.rows() == 0) throw Error(ErrorKind::input_shape, "bench data has no rows");
  BenchReport report;
  report.config = config;
  report.timer_resolution_ns = measure_timer_resolution_ns();
  if (report.timer_resolution_ns > 1000.0) {
    report.measurement_unreliable = true;
    report.warnings.push_back("timer resolution coarser than 1 us");
  }

  std::atomic<int> active{0};
  int max_active = 0;
  volatile double sink = 0.0;
  const double batch = static_cast<double>(config.batch_size);
  std::vector<double> seed_medians;
  double min_iteration_ns = std::numeric_limits<double>::infinity();

  for (std::size_t s = 0; s < config.seeds; ++s) {
    Rng rng(0x5eedULL + s);
    std::vector<std::size_t> rows(config.batch_size);
    for (auto& r : rows) r = rng.index(data.rows());
    const Matrix input = data.select_rows(rows);

    auto call = [&] {
      const int now = ++active;
      max_active = std::max(max_active, now);
      assert(config.threads > 1 || now == 1);
      const double v = forward(input);
      --active;
      return v;
    };

    for (std::size_t w = 0; w < config.warmup_iters; ++w) sink = sink + call();
    std::vector<double> per_sample_ms(config.timed_iters);
    for (std::size_t it = 0; it < config.timed_iters; ++it) {
      const auto t0 = Clock::now();
      const double v = call();
      const auto t1 = Clock::now();
      sink = sink + v;
      const double ns = std::chrono::duration<double, std::nano>(t1 - t0).count();
      min_iteration_ns = std::min(min_iteration_ns, ns);
      per_sample_ms[it] = ns * 1e-6 / batch;
    }
    report.per_seed_ms_per_sample.push_back(
        std::accumulate(per_sample_ms.begin(), per_sample_ms.end(), 0.0) /
        static_cast<double>(per_sample_ms.size()));
    seed_medians.push_back(median_of(per_sample_ms));
  }
  report.max_concurrent_forwards = max_active;

  const auto summary = summarize_seeds(report.per_seed_ms_per_sample);
  report.ms_per_sample_mean = summary.mean;
  report.ms_per_sample_std = summary.std;
  report.ci95_halfwidth = summary.ci95_halfwidth;
  report.ms_per_sample_median =
      std::accumulate(seed_medians.begin(), seed_medians.end(), 0.0) /
      static_cast<double>(seed_medians.size());
  if (min_iteration_ns < kMinTicksPerIteration * report.timer_resolution_ns) {
    report.measurement_unreliable = true;
    report.warnings.push_back("iteration time within " + fmt(kMinTicksPerIteration) +
                              " timer ticks; measurement unreliable");
  }
  return report;
}

BenchReport run_bench(const ModelSpec& model, const Matrix& data, const BenchConfig& config) {
  const int threads = resolve_threads(config.threads);
  auto report = run_bench(
      [&](const Matrix& batch) {
        const auto p = forward_reference(model, batch, threads);
        return p.empty() ? 0.0 : p.front();
      },
      data, config);
  report.config.backend = Backend::reference_bspline;
  return report;
}

BenchReport run_bench(const CompiledModel& model, const Matrix& data, const BenchConfig& config) {
  const int threads = resolve_threads(config.threads);
  auto report = run_bench(
      [&](const Matrix& batch) {
        const auto r = forward_lut(model, batch, threads);
        return r.probabilities.empty() ? 0.0 : r.probabilities.front();
      },
      data, config);
  report.config.backend = Backend::lut;
  return report;
}

double speedup(const BenchReport& baseline, const BenchReport& candidate) {
  if (baseline.config.batch_size != candidate.config.batch_size ||
      baseline.config.threads != candidate.config.threads) {
    throw Error(ErrorKind::comparison, "speedup requires equal batch size and thread count");
  }
  if (!(candidate.ms_per_sample_mean > 0.0)) {
    throw Error(ErrorKind::comparison, "candidate latency must be positive");
  }
  return baseline.ms_per_sample_mean / candidate.ms_per_sample_mean;
}

std::string bench_report_to_json(const BenchReport& r, int indent) {
  nlohmann::json j;
  j["config"] = {{"batch_size", r.config.batch_size},
                 {"warmup_iters", r.config.warmup_iters},
                 {"timed_iters", r.config.timed_iters},
                 {"seeds", r.config.seeds},
                 {"threads", r.config.threads},
                 {"backend", to_string(r.config.backend)}};
  j["ms_per_sample_mean"] = r.ms_per_sample_mean;
  j["ms_per_sample_std"] = r.ms_per_sample_std;
  j["ci95_halfwidth"] = r.ci95_halfwidth;
  j["ms_per_sample_median"] = r.ms_per_sample_median;
  j["speedup_vs_baseline"] =
      r.speedup_vs_baseline ? nlohmann::json(*r.speedup_vs_baseline) : nlohmann::json(nullptr);
  j["per_seed_ms_per_sample"] = r.per_seed_ms_per_sample;
  j["timer_resolution_ns"] = r.timer_resolution_ns;
  j["measurement_unreliable"] = r.measurement_unreliable;
  j["warnings"] = r.warnings;
  return j.dump(indent);
}

std::string sweep_row_to_csv(const SweepRow& r) {
  std::string s = std::to_string(r.lut_size);
  for (std::string_view v : {to_string(r.quant), to_string(r.boundary), to_string(r.oob)}) {
    s += ',';
    s += v;
  }
  for (double v : {r.accuracy, r.f1, r.delta_f1, r.roc_auc, r.pr_auc, r.ms_bs1_mean, r.ms_bs1_std,
                   r.ms_bs256_mean, r.ms_bs256_std, r.speedup_bs1, r.speedup_bs256}) {
    s += ',';
    s += fmt(v);
  }
  s += ',' + std::to_string(r.lut_bytes);
  return s;
}

std::vector<SweepRow> sweep(const ModelSpec& model, const Dataset& data, const SweepGrid& grid,
                            const BenchConfig& bench, std::ostream* csv,
                            const SweepOptions& options) {
  if (grid.lut_sizes.empty() || grid.quants.empty() || grid.boundaries.empty() || grid.oobs.empty()) {
    throw Error(ErrorKind::config, "sweep grid has an empty option list");
  }
  for (int L : grid.lut_sizes) CompileConfig{L}.validate();
  if (options.measure_latency) bench.validate();

  const double tau = model.threshold;
  const EvalReport baseline = evaluate(model, data.features, data.labels, tau);

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  BenchConfig bs1 = bench, bs256 = bench;
  bs1.batch_size = 1;
  bs256.batch_size = 256;
  std::optional<BenchReport> ref1, ref256;
  if (options.measure_latency) {
    ref1 = run_bench(model, data.features, bs1);
    ref256 = run_bench(model, data.features, bs256);
  }

  if (csv) *csv << kSweepCsvHeader << '\n' << std::flush;
  std::vector<SweepRow> rows;
  for (int L : grid.lut_sizes) {
    for (auto quant : grid.quants) {
      for (auto boundary : grid.boundaries) {
        for (auto oob : grid.oobs) {
          CompileConfig cfg{L, quant, boundary, oob, grid.value_repr};
          const auto compiled = compile(model, cfg);
          const auto report = evaluate(compiled, data.features, data.labels, tau, &baseline);
          SweepRow row;
          row.lut_size = L;
          row.quant = quant;
          row.boundary = boundary;
          row.oob = oob;
          row.accuracy = report.accuracy;
          row.f1 = report.f1;
          row.delta_f1 = report.delta_f1_vs_baseline.value_or(0.0);
          row.roc_auc = report.roc_auc;
          row.pr_auc = report.pr_auc;
          row.lut_bytes = measure_memory(compiled).tables;
          row.ms_bs1_mean = row.ms_bs1_std = row.ms_bs256_mean = row.ms_bs256_std = nan;
          row.speedup_bs1 = row.speedup_bs256 = nan;
          if (options.measure_latency) {
            const auto lut1 = run_bench(compiled, data.features, bs1);
            const auto lut256 = run_bench(compiled, data.features, bs256);
            row.ms_bs1_mean = lut1.ms_per_sample_mean;
            row.ms_bs1_std = lut1.ms_per_sample_std;
            row.ms_bs256_mean = lut256.ms_per_sample_mean;
            row.ms_bs256_std = lut256.ms_per_sample_std;
            row.speedup_bs1 = speedup(*ref1, lut1);
            row.speedup_bs256 = speedup(*ref256, lut256);
          }
          if (csv) *csv << sweep_row_to_csv(row) << '\n' << std::flush;
          rows.push_back(row);
        }
      }
    }
  }
  return rows;
}

}  // namespace lutkan
