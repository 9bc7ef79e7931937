#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

#include <json.hpp>

#include "lutkan/data.hpp"
#include "lutkan/error.hpp"
#include "lutkan/rng.hpp"

namespace lutkan {

namespace {

struct StepName {
  StepKind kind;
  const char* name;
  int rank;
};

constexpr StepName kSteps[] = {
    {StepKind::drop_constant_duplicate, "drop_constant_duplicate", 0},
    {StepKind::outlier_3sigma, "outlier_3sigma", 1},
    {StepKind::clip_3sigma, "clip_3sigma", 1},
    {StepKind::impute_median, "impute_median", 2},
    {StepKind::standardize, "standardize", 3},
    {StepKind::stratified_balance, "stratified_balance", 4},
    {StepKind::stratified_split, "stratified_split", 5},
};

const StepName& step_info(StepKind kind) {
  for (const auto& s : kSteps) {
    if (s.kind == kind) return s;
  }
  throw Error(ErrorKind::config, "unknown pipeline step");
}

bool has_step(const PipelineConfig& c, StepKind kind) {
  return std::any_of(c.steps.begin(), c.steps.end(),
                     [kind](const PipelineStep& s) { return s.kind == kind; });
}

// Population mean and standard deviation over non-missing values.
std::pair<double, double> column_moments(const Matrix& m, std::size_t c) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double v = m(r, c);
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) return {0.0, 0.0};
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double v = m(r, c);
    if (!std::isnan(v)) ss += (v - mean) * (v - mean);
  }
  return {mean, std::sqrt(ss / static_cast<double>(n))};
}

double column_median(const Matrix& m, std::size_t c) {
  std::vector<double> v;
  v.reserve(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (!std::isnan(m(r, c))) v.push_back(m(r, c));
  }
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

Dataset keep_columns(const Dataset& d, const std::vector<std::size_t>& cols) {
  Dataset out;
  out.labels = d.labels;
  out.features = Matrix(d.size(), cols.size());
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) out.features(r, c) = d.features(r, cols[c]);
  }
  for (std::size_t c : cols) out.feature_names.push_back(d.feature_names[c]);
  return out;
}

bool columns_identical(const Matrix& m, std::size_t a, std::size_t b) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (std::bit_cast<std::uint64_t>(m(r, a)) != std::bit_cast<std::uint64_t>(m(r, b))) return false;
  }
  return true;
}

bool column_constant(const Matrix& m, std::size_t c) {
  std::optional<double> first;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double v = m(r, c);
    if (std::isnan(v)) continue;
    if (!first) {
      first = v;
    } else if (v != *first) {
      return false;
    }
  }
  return true;
}

std::vector<std::size_t> outlier_keep_rows(const Matrix& m,
                                           const std::vector<std::pair<double, double>>& bounds) {
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    bool ok = true;
    for (std::size_t c = 0; c < m.cols() && ok; ++c) {
      const double v = m(r, c);
      if (!std::isnan(v) && (v < bounds[c].first || v > bounds[c].second)) ok = false;
    }
    if (ok) keep.push_back(r);
  }
  return keep;
}

}  // namespace

void PipelineConfig::validate() const {
  int last = -1;
  for (const auto& step : steps) {
    const auto& info = step_info(step.kind);
    if (info.rank <= last) {
      throw Error(ErrorKind::config,
                  std::string("pipeline step '") + info.name +
                      "' is out of order or repeated (order: drop_constant_duplicate, "
                      "outlier_3sigma|clip_3sigma, impute_median, standardize, "
                      "stratified_balance, stratified_split)");
    }
    last = info.rank;
    if (step.kind == StepKind::stratified_split &&
        !(step.train_fraction > 0.0 && step.train_fraction < 1.0)) {
      throw Error(ErrorKind::config, "stratified_split train_fraction must lie in (0, 1)");
    }
  }
}

PipelineConfig pipeline_from_json(const std::string& text) {
  PipelineConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.seed = j.value("seed", std::uint64_t{0});
    for (const auto& s : j.at("steps")) {
      const std::string name = s.is_string() ? s.get<std::string>() : s.at("op").get<std::string>();
      PipelineStep step;
      bool found = false;
      for (const auto& info : kSteps) {
        if (name == info.name) {
          step.kind = info.kind;
          found = true;
        }
      }
      if (!found) throw Error(ErrorKind::config, "unknown pipeline step '" + name + "'");
      if (s.is_object()) step.train_fraction = s.value("train_fraction", 0.8);
      c.steps.push_back(step);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config, std::string("pipeline document: ") + e.what());
  }
  c.validate();
  return c;
}

std::string pipeline_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["steps"] = nlohmann::json::array();
  for (const auto& s : c.steps) {
    nlohmann::json step{{"op", step_info(s.kind).name}};
    if (s.kind == StepKind::stratified_split) step["train_fraction"] = s.train_fraction;
    j["steps"].push_back(step);
  }
  return j.dump(2);
}

FittedTransform fit_transform(const Dataset& train, const PipelineConfig& config) {
  config.validate();
  FittedTransform t;
  const Matrix& raw = train.features;
  for (std::size_t c = 0; c < raw.cols(); ++c) t.kept_columns.push_back(c);

  if (has_step(config, StepKind::drop_constant_duplicate)) {
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < raw.cols(); ++c) {
      if (column_constant(raw, c)) continue;
      const bool dup = std::any_of(kept.begin(), kept.end(),
                                   [&](std::size_t k) { return columns_identical(raw, k, c); });
      if (!dup) kept.push_back(c);
    }
    t.kept_columns = kept;
  }
  for (std::size_t c : t.kept_columns) t.kept_names.push_back(train.feature_names[c]);
  Dataset work = keep_columns(train, t.kept_columns);

  const bool drop_outliers = has_step(config, StepKind::outlier_3sigma);
  const bool clip_outliers = has_step(config, StepKind::clip_3sigma);
  if (drop_outliers || clip_outliers) {
    std::vector<std::pair<double, double>> bounds;
    for (std::size_t c = 0; c < work.width(); ++c) {
      const auto [mean, sd] = column_moments(work.features, c);
      bounds.emplace_back(mean - 3.0 * sd, mean + 3.0 * sd);
    }
    t.outlier_bounds = bounds;
    t.outlier_clip = clip_outliers;
    FittedTransform partial;
    partial.kept_columns.resize(work.width());
    for (std::size_t c = 0; c < work.width(); ++c) partial.kept_columns[c] = c;
    partial.kept_names = work.feature_names;
    partial.outlier_bounds = bounds;
    partial.outlier_clip = clip_outliers;
    work = apply_transform(partial, work);
  }

  if (has_step(config, StepKind::impute_median)) {
    std::vector<double> medians;
    for (std::size_t c = 0; c < work.width(); ++c) {
      medians.push_back(column_median(work.features, c));
      for (std::size_t r = 0; r < work.size(); ++r) {
        if (std::isnan(work.features(r, c))) work.features(r, c) = medians.back();
      }
    }
    t.medians = medians;
  }

  if (has_step(config, StepKind::standardize)) {
    std::vector<std::size_t> keep_after;
    std::vector<std::pair<double, double>> moments;
    for (std::size_t c = 0; c < work.width(); ++c) {
      const auto m = column_moments(work.features, c);
      if (m.second == 0.0) {
        t.warnings.push_back("feature '" + work.feature_names[c] +
                             "' has zero variance; dropped at standardize");
        continue;
      }
      keep_after.push_back(c);
      moments.push_back(m);
    }
    if (keep_after.size() != work.width()) {
      std::vector<std::size_t> cols;
      std::vector<std::string> names;
      std::optional<std::vector<std::pair<double, double>>> bounds;
      std::optional<std::vector<double>> medians;
      if (t.outlier_bounds) bounds.emplace();
      if (t.medians) medians.emplace();
      for (std::size_t c : keep_after) {
        cols.push_back(t.kept_columns[c]);
        names.push_back(t.kept_names[c]);
        if (bounds) bounds->push_back((*t.outlier_bounds)[c]);
        if (medians) medians->push_back((*t.medians)[c]);
      }
      t.kept_columns = cols;
      t.kept_names = names;
      t.outlier_bounds = bounds;
      t.medians = medians;
    }
    t.standardization = moments;
  }
  return t;
}

Dataset apply_transform(const FittedTransform& t, const Dataset& data) {
  Dataset out = keep_columns(data, t.kept_columns);
  if (t.outlier_bounds) {
    const auto& b = *t.outlier_bounds;
    if (t.outlier_clip) {
      for (std::size_t r = 0; r < out.size(); ++r) {
        for (std::size_t c = 0; c < out.width(); ++c) {
          double& v = out.features(r, c);
          if (!std::isnan(v)) v = std::clamp(v, b[c].first, b[c].second);
        }
      }
    } else {
      const auto keep = outlier_keep_rows(out.features, b);
      if (keep.size() != out.size()) out = out.select_rows(keep);
    }
  }
  if (t.medians) {
    for (std::size_t r = 0; r < out.size(); ++r) {
      for (std::size_t c = 0; c < out.width(); ++c) {
        if (std::isnan(out.features(r, c))) out.features(r, c) = (*t.medians)[c];
      }
    }
  }
  if (t.standardization) {
    const auto& s = *t.standardization;
    for (std::size_t r = 0; r < out.size(); ++r) {
      for (std::size_t c = 0; c < out.width(); ++c) {
        out.features(r, c) = (out.features(r, c) - s[c].first) / s[c].second;
      }
    }
    out.standardization = s;
  }
  return out;
}

std::vector<std::size_t> stratified_balance_rows(std::span<const int> labels, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] == 1 ? 1 : 0].push_back(i);
  const std::size_t target = std::min(by_class[0].size(), by_class[1].size());
  Rng rng(seed);
  std::vector<std::size_t> rows;
  for (auto& cls : by_class) {
    if (cls.size() > target) {
      rng.shuffle(cls);
      cls.resize(target);
    }
    rows.insert(rows.end(), cls.begin(), cls.end());
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split_rows(
    std::span<const int> labels, double train_fraction, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] == 1 ? 1 : 0].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> train, test;
  for (auto& cls : by_class) {
    rng.shuffle(cls);
    const auto n_train =
        static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(cls.size())));
    train.insert(train.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), cls.begin() + static_cast<std::ptrdiff_t>(n_train), cls.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

PreprocessResult preprocess(const Dataset& data, const PipelineConfig& config) {
  config.validate();
  const bool needs_labels = has_step(config, StepKind::stratified_balance) ||
                            has_step(config, StepKind::stratified_split);
  if (needs_labels && data.labels.size() != data.size()) {
    throw Error(ErrorKind::input_shape, "stratified steps require a label for every row");
  }
  PreprocessResult result;
  Dataset train = data;
  std::optional<Dataset> test;
  for (const auto& step : config.steps) {
    if (step.kind == StepKind::stratified_split) {
      const auto [tr, te] = stratified_split_rows(data.labels, step.train_fraction, config.seed);
      train = data.select_rows(tr);
      test = data.select_rows(te);
    }
  }
  result.transform = fit_transform(train, config);
  result.warnings = result.transform.warnings;
  result.train = apply_transform(result.transform, train);
  if (test) result.test = apply_transform(result.transform, *test);

  if (has_step(config, StepKind::stratified_balance)) {
    result.train = result.train.select_rows(stratified_balance_rows(result.train.labels, config.seed));
    if (result.test) {
      result.test = result.test->select_rows(stratified_balance_rows(result.test->labels, config.seed + 1));
    }
  }
  return result;
}

}  // namespace lutkan
