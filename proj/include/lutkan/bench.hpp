#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lutkan/compiler.hpp"
#include "lutkan/data.hpp"
#include "lutkan/matrix.hpp"
#include "lutkan/model.hpp"

namespace lutkan {

enum class Backend { reference_bspline, lut };

std::string_view to_string(Backend b);
/// Accepts "bspline", "reference_bspline" and "lut".
Backend parse_backend(std::string_view s);

struct BenchConfig {
  std::size_t batch_size = 256;
  std::size_t warmup_iters = 10;
  std::size_t timed_iters = 100;
  std::size_t seeds = 5;
  int threads = 1;
  Backend backend = Backend::lut;

  void validate() const;
};

struct SeedSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  double ci95_halfwidth = 0.0;
};

/// Two-sided 97.5% Student t quantile for `df` degrees of freedom. Table
/// values (three decimals) for df in [1, 29]; 1.960 beyond.
double t_quantile_975(std::size_t df);

/// Mean, std and t-based 95% CI half-width of per-seed statistics.
SeedSummary summarize_seeds(std::span<const double> per_seed);

struct BenchReport {
  BenchConfig config;
  double ms_per_sample_mean = 0.0;
  double ms_per_sample_std = 0.0;
  double ci95_halfwidth = 0.0;
  double ms_per_sample_median = 0.0;  // mean of per-seed medians, informational
  std::optional<double> speedup_vs_baseline;
  std::vector<double> per_seed_ms_per_sample;
  double timer_resolution_ns = 0.0;
  bool measurement_unreliable = false;
  int max_concurrent_forwards = 0;  // harness-level forwards in flight
  std::vector<std::string> warnings;
};

/// One forward over a batch; the returned value is folded into a sink so
/// the call cannot be elided.
using ForwardFn = std::function<double(const Matrix&)>;

/// Smallest observable steady_clock increment, in nanoseconds.
double measure_timer_resolution_ns();

/// Per seed: draw a batch of batch_size rows (seeded, with replacement),
/// run warmup_iters untimed forwards, then time timed_iters forwards
/// individually. The per-seed statistic is the mean ms per sample.
BenchReport run_bench(const ForwardFn& forward, const Matrix& data, const BenchConfig& config);
BenchReport run_bench(const ModelSpec& model, const Matrix& data, const BenchConfig& config);
BenchReport run_bench(const CompiledModel& model, const Matrix& data, const BenchConfig& config);

/// Ratio of cross-seed means, baseline / candidate.
double speedup(const BenchReport& baseline, const BenchReport& candidate);

std::string bench_report_to_json(const BenchReport& report, int indent = 2);

struct SweepGrid {
  std::vector<int> lut_sizes{2, 4, 8, 16, 32, 64, 128, 256};
  std::vector<QuantScheme> quants{QuantScheme::sym_int8};
  std::vector<BoundaryMode> boundaries{BoundaryMode::half_open};
  std::vector<OobPolicy> oobs{OobPolicy::zero_spline};
  ValueRepr value_repr = ValueRepr::spline_component;
};

struct SweepRow {
  int lut_size = 0;
  QuantScheme quant = QuantScheme::sym_int8;
  BoundaryMode boundary = BoundaryMode::half_open;
  OobPolicy oob = OobPolicy::zero_spline;
  double accuracy = 0.0;
  double f1 = 0.0;
  double delta_f1 = 0.0;
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  double ms_bs1_mean = 0.0;
  double ms_bs1_std = 0.0;
  double ms_bs256_mean = 0.0;
  double ms_bs256_std = 0.0;
  double speedup_bs1 = 0.0;
  double speedup_bs256 = 0.0;
  std::size_t lut_bytes = 0;
};

inline constexpr std::string_view kSweepCsvHeader =
    "L,quant,boundary,oob,acc,f1,delta_f1,roc_auc,pr_auc,ms_bs1_mean,ms_bs1_std,"
    "ms_bs256_mean,ms_bs256_std,speedup_bs1,speedup_bs256,lut_bytes";

std::string sweep_row_to_csv(const SweepRow& row);

struct SweepOptions {
  bool measure_latency = true;  // false leaves latency columns NaN
};

/// One row per (L, quant, boundary, oob) in that nesting order. Rows are
/// written and flushed to `csv` as they complete when it is non-null.
std::vector<SweepRow> sweep(const ModelSpec& model, const Dataset& data, const SweepGrid& grid,
                            const BenchConfig& bench, std::ostream* csv,
                            const SweepOptions& options = {});

}  // namespace lutkan
