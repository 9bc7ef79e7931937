#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lutkan {

struct ModelSpec;
struct CompiledModel;
class Matrix;

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct ThresholdedMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::string backend;
  std::size_t n_samples = 0;
  double threshold = 0.5;
  ConfusionCounts counts;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  std::optional<double> delta_f1_vs_baseline;
  double in_range_f1 = 0.0;
  std::size_t n_oob_samples = 0;
};

ConfusionCounts confusion(std::span<const int> labels, std::span<const int> predictions);
ThresholdedMetrics thresholded_metrics(const ConfusionCounts& counts);

/// Mann-Whitney formulation; tied scores contribute 1/2.
double roc_auc(std::span<const int> labels, std::span<const double> scores);
/// Average precision, with tied scores grouped into one threshold step.
double pr_auc(std::span<const int> labels, std::span<const double> scores);

/// Core report from scores; rows flagged in `oob_mask` are excluded from
/// in_range_f1 and counted in n_oob_samples.
EvalReport evaluate_scores(std::span<const int> labels, std::span<const double> scores,
                           double threshold, const std::vector<bool>& oob_mask,
                           const EvalReport* baseline = nullptr);

EvalReport evaluate(const ModelSpec& model, const Matrix& features, std::span<const int> labels,
                    double threshold, const EvalReport* baseline = nullptr);
EvalReport evaluate(const CompiledModel& model, const Matrix& features,
                    std::span<const int> labels, double threshold,
                    const EvalReport* baseline = nullptr);

std::string report_to_json(const EvalReport& report, int indent = 2);
EvalReport report_from_json(const std::string& text);
/// Fixed-width two-column table.
std::string report_to_table(const EvalReport& report);

}  // namespace lutkan
