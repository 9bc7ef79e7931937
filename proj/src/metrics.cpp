#include "lutkan/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lutkan/compiler.hpp"
#include "lutkan/error.hpp"
#include "lutkan/model.hpp"
#include "lutkan/runtime.hpp"

namespace lutkan {

namespace {

void check_binary(std::span<const int> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0 && v[i] != 1) {
      throw Error(ErrorKind::input_domain, std::string(what) + "[" + std::to_string(i) +
                                               "] is not 0 or 1");
    }
  }
}

void check_scored(std::span<const int> labels, std::span<const double> scores,
                  std::size_t& positives, std::size_t& negatives) {
  if (labels.size() != scores.size()) {
    throw Error(ErrorKind::input_shape, "labels and scores differ in length");
  }
  check_binary(labels, "labels");
  positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorKind::degenerate_metric,
                "threshold-free metrics need both classes present");
  }
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

}  // namespace

ConfusionCounts confusion(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw Error(ErrorKind::input_shape, "labels and predictions differ in length");
  }
  check_binary(labels, "labels");
  check_binary(predictions, "predictions");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      predictions[i] == 1 ? ++c.tp : ++c.fn;
    } else {
      predictions[i] == 1 ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

ThresholdedMetrics thresholded_metrics(const ConfusionCounts& c) {
  ThresholdedMetrics m;
  const std::size_t n = c.total();
  if (n == 0) return m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
  m.precision = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.recall = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  m.f1 = m.precision + m.recall == 0.0
             ? 0.0
             : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

double roc_auc(std::span<const int> labels, std::span<const double> scores) {
  std::size_t pos = 0, neg = 0;
  check_scored(labels, scores, pos, neg);
  const auto idx = order_by_score(scores, false);
  // Sum of 1-based average ranks of the positives.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[idx[t]] == 1) rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double pr_auc(std::span<const int> labels, std::span<const double> scores) {
  std::size_t pos = 0, neg = 0;
  check_scored(labels, scores, pos, neg);
  const auto idx = order_by_score(scores, true);
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    for (std::size_t t = i; t <= j; ++t) labels[idx[t]] == 1 ? ++tp : ++fp;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return ap;
}

EvalReport evaluate_scores(std::span<const int> labels, std::span<const double> scores,
                           double threshold, const std::vector<bool>& oob_mask,
                           const EvalReport* baseline) {
  if (oob_mask.size() != labels.size()) {
    throw Error(ErrorKind::input_shape, "OOB mask length differs from label count");
  }
  const auto predictions = predict(scores, threshold);
  EvalReport r;
  r.n_samples = labels.size();
  r.threshold = threshold;
  r.counts = confusion(labels, predictions);
  const auto m = thresholded_metrics(r.counts);
  r.accuracy = m.accuracy;
  r.precision = m.precision;
  r.recall = m.recall;
  r.f1 = m.f1;
  r.roc_auc = roc_auc(labels, scores);
  r.pr_auc = pr_auc(labels, scores);

  std::vector<int> in_labels, in_predictions;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (oob_mask[n]) {
      ++r.n_oob_samples;
    } else {
      in_labels.push_back(labels[n]);
      in_predictions.push_back(predictions[n]);
    }
  }
  r.in_range_f1 = thresholded_metrics(confusion(in_labels, in_predictions)).f1;
  if (baseline != nullptr) r.delta_f1_vs_baseline = r.f1 - baseline->f1;
  return r;
}

EvalReport evaluate(const ModelSpec& model, const Matrix& features, std::span<const int> labels,
                    double threshold, const EvalReport* baseline) {
  if (features.rows() != labels.size()) {
    throw Error(ErrorKind::input_shape, "feature rows and labels differ in length");
  }
  const auto scores = forward_reference(model, features);
  const auto& grid = model.layers.front().grid;
  auto report = evaluate_scores(
      labels, scores, threshold,
      oob_rows(features, grid.domain_min(), grid.domain_max(), BoundaryMode::closed), baseline);
  report.backend = "reference_bspline";
  return report;
}

EvalReport evaluate(const CompiledModel& model, const Matrix& features,
                    std::span<const int> labels, double threshold, const EvalReport* baseline) {
  if (features.rows() != labels.size()) {
    throw Error(ErrorKind::input_shape, "feature rows and labels differ in length");
  }
  const auto result = forward_lut(model, features);
  const auto& first = model.layers.front();
  auto report = evaluate_scores(
      labels, result.probabilities, threshold,
      oob_rows(features, first.domain_min, first.domain_max, model.config.boundary), baseline);
  report.backend = "lut";
  return report;
}

std::string report_to_json(const EvalReport& r, int indent) {
  nlohmann::json j;
  j["backend"] = r.backend;
  j["n_samples"] = r.n_samples;
  j["threshold"] = r.threshold;
  j["confusion"] = {{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"tn", r.counts.tn}, {"fn", r.counts.fn}};
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["roc_auc"] = r.roc_auc;
  j["pr_auc"] = r.pr_auc;
  j["delta_f1_vs_baseline"] = r.delta_f1_vs_baseline ? nlohmann::json(*r.delta_f1_vs_baseline)
                                                     : nlohmann::json(nullptr);
  j["in_range_f1"] = r.in_range_f1;
  j["n_oob_samples"] = r.n_oob_samples;
  return j.dump(indent);
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.backend = j.value("backend", "");
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.threshold = j.at("threshold").get<double>();
    const auto& c = j.at("confusion");
    r.counts = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(),
                c.at("tn").get<std::size_t>(), c.at("fn").get<std::size_t>()};
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.roc_auc = j.at("roc_auc").get<double>();
    r.pr_auc = j.at("pr_auc").get<double>();
    if (j.contains("delta_f1_vs_baseline") && !j["delta_f1_vs_baseline"].is_null()) {
      r.delta_f1_vs_baseline = j["delta_f1_vs_baseline"].get<double>();
    }
    r.in_range_f1 = j.at("in_range_f1").get<double>();
    r.n_oob_samples = j.at("n_oob_samples").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::malformed_model, std::string("eval report: ") + e.what());
  }
  return r;
}

std::string report_to_table(const EvalReport& r) {
  std::ostringstream out;
  char line[96];
  auto row = [&](const char* name, double v) {
    std::snprintf(line, sizeof line, "%-22s %12.6f\n", name, v);
    out << line;
  };
  auto count = [&](const char* name, std::size_t v) {
    std::snprintf(line, sizeof line, "%-22s %12zu\n", name, v);
    out << line;
  };
  std::snprintf(line, sizeof line, "%-22s %12s\n", "backend", r.backend.c_str());
  out << line;
  count("samples", r.n_samples);
  row("threshold", r.threshold);
  row("accuracy", r.accuracy);
  row("precision", r.precision);
  row("recall", r.recall);
  row("f1", r.f1);
  row("roc_auc", r.roc_auc);
  row("pr_auc", r.pr_auc);
  if (r.delta_f1_vs_baseline) row("delta_f1", *r.delta_f1_vs_baseline);
  row("in_range_f1", r.in_range_f1);
  count("oob_samples", r.n_oob_samples);
  return out.str();
}

}  // namespace lutkan
