#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lutkan/matrix.hpp"
#include "lutkan/model.hpp"

namespace lutkan {

/// Labeled tabular data. Missing cells are NaN until imputed.
struct Dataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  std::optional<std::vector<std::pair<double, double>>> standardization;  // (mean, std)

  std::size_t size() const noexcept { return features.rows(); }
  std::size_t width() const noexcept { return features.cols(); }
  std::size_t missing_count() const;
  Dataset select_rows(std::span<const std::size_t> rows) const;
};

/// Maps raw label strings to {0, 1}. "*" in `positive` accepts any value not
/// listed as negative, which collapses multi-attack labels to 1.
struct LabelMap {
  std::set<std::string> positive{"1"};
  std::set<std::string> negative{"0"};

  int map(const std::string& raw) const;
};

/// Reads a CSV with a header row. Empty, "nan" and non-finite cells are
/// marked missing. With an empty label_column the labels stay empty.
Dataset ingest_csv(const std::filesystem::path& path, const std::string& label_column,
                   const LabelMap& labels = {});
void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::string& label_column = "label");

/// Raw binary32 batch: "KBAT", u32 N, u32 d, u32 reserved (0), then N*d
/// little-endian floats row-major.
Matrix read_kbat(const std::filesystem::path& path);
void write_kbat(const Matrix& batch, const std::filesystem::path& path);
/// KBAT when the file starts with the magic, CSV otherwise. A CSV column
/// named `skip_column` (if present) is ignored.
Matrix read_batch(const std::filesystem::path& path, const std::string& skip_column = "label");

// ---------------------------------------------------------------------------
// Preprocessing

enum class StepKind {
  drop_constant_duplicate,
  outlier_3sigma,       // drop rows with any feature outside mean +- 3 sigma
  clip_3sigma,          // alternative: clip values into mean +- 3 sigma
  impute_median,
  standardize,
  stratified_balance,
  stratified_split,
};

struct PipelineStep {
  StepKind kind = StepKind::standardize;
  double train_fraction = 0.8;  // stratified_split only
};

struct PipelineConfig {
  std::vector<PipelineStep> steps;
  std::uint64_t seed = 0;

  /// Steps must follow the order drop, outlier, impute, standardize,
  /// balance, split, each at most once.
  void validate() const;
};

PipelineConfig pipeline_from_json(const std::string& text);
std::string pipeline_to_json(const PipelineConfig& config);

/// Statistics fitted on the training portion, replayable on any split.
struct FittedTransform {
  std::vector<std::size_t> kept_columns;  // indices into the raw columns
  std::vector<std::string> kept_names;
  std::optional<std::vector<std::pair<double, double>>> outlier_bounds;  // per kept column
  bool outlier_clip = false;
  std::optional<std::vector<double>> medians;
  std::optional<std::vector<std::pair<double, double>>> standardization;
  std::vector<std::string> warnings;

  bool operator==(const FittedTransform& o) const {
    return kept_columns == o.kept_columns && outlier_bounds == o.outlier_bounds &&
           outlier_clip == o.outlier_clip && medians == o.medians &&
           standardization == o.standardization;
  }
};

/// Fits the statistical steps (drop, outlier, impute, standardize) on `train`.
FittedTransform fit_transform(const Dataset& train, const PipelineConfig& config);
/// Replays a fitted transform; outlier rows are dropped or clipped.
Dataset apply_transform(const FittedTransform& transform, const Dataset& data);

struct PreprocessResult {
  Dataset train;
  std::optional<Dataset> test;
  FittedTransform transform;
  std::vector<std::string> warnings;
};

/// Runs the configured pipeline. When stratified_split is present the split
/// happens first so every statistic comes from the training rows only;
/// stratified_balance is applied to each partition independently.
PreprocessResult preprocess(const Dataset& data, const PipelineConfig& config);

std::vector<std::size_t> stratified_balance_rows(std::span<const int> labels, std::uint64_t seed);
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split_rows(
    std::span<const int> labels, double train_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Spline fitting and synthetic generators

inline constexpr double kFitRidge = 1e-10;

/// Least-squares coefficients minimizing sum (s(x_i) - y_i)^2, solved from
/// the normal equations with ridge term kFitRidge.
std::vector<double> fit_spline_lsq(std::span<const double> xs, std::span<const double> ys,
                                   const KnotGrid& grid);

struct SynthOptions {
  int intervals = 5;
  int degree = 3;
  double domain_min = -1.0;
  double domain_max = 1.0;
  std::size_t calibration_samples = 2048;
  double domain_margin = 0.1;  // hidden-domain padding, fraction of observed range
};

/// Random model: alpha, beta ~ U[-1, 1], coefficients ~ U[-2, 2]. Hidden
/// layer domains are set from the observed activation range on uniform
/// calibration inputs, and the last layer is shifted so the median logit is
/// zero (balanced oracle labels).
ModelSpec synth_model(std::span<const std::size_t> topology, std::uint64_t seed,
                      const SynthOptions& options = {});

/// Uniform inputs over the first-layer domain, labels from the float model.
/// round(oob_fraction * N) rows get one feature displaced outside the domain
/// by up to half the domain width.
Dataset synth_dataset(const ModelSpec& model, std::size_t rows, std::uint64_t seed,
                      double oob_fraction = 0.0);

std::vector<std::size_t> default_topology();

}  // namespace lutkan
