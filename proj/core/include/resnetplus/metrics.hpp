#pragma once

// Confusion matrices, one-vs-all classification metrics, ROC/AUC, decision curves, export.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "resnetplus/tensor.hpp"

namespace rnp {

struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<std::size_t> counts;  // row = true class, column = predicted

  explicit ConfusionMatrix(std::size_t classes = 0) : k(classes), counts(classes * classes, 0) {}
  std::size_t& at(std::size_t t, std::size_t p) { return counts[t * k + p]; }
  std::size_t at(std::size_t t, std::size_t p) const { return counts[t * k + p]; }
  std::size_t total() const;
  std::size_t trace() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                          std::size_t k);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  bool zero_support = false;      // no true samples; recall and F1 reported as 0
  bool zero_predictions = false;  // never predicted; precision reported as 0
  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct ClassificationMetrics {
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  ClassMetrics macro;  // unweighted mean over classes
  ClassMetrics micro;
  friend bool operator==(const ClassificationMetrics&, const ClassificationMetrics&) = default;
};

/// Per-class one-vs-all counts. F1 = 2TP / (2TP + FP + FN).
ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), from (0,0) to (1,1)
  double auc = 0.0;
  bool defined = true;  // false when the class has no positives or no negatives
  friend bool operator==(const RocCurve&, const RocCurve&) = default;
};

struct RocResult {
  std::vector<RocCurve> curves;
  double macro_auc = 0.0;  // over defined curves
};

/// One curve per column of `scores` [N,K]; thresholds sweep the distinct scores from +inf
/// down, grouping ties into one step; AUC by the trapezoid rule.
RocResult roc_auc_ovr(const Tensor<double>& scores, const std::vector<int>& y_true);
/// Single-column helper: scores of one class, positives flagged.
RocCurve roc_curve(const std::vector<double>& scores, const std::vector<bool>& positive);

struct DcaCurve {
  std::vector<double> thresholds;
  std::vector<double> net_benefit;
  std::vector<double> treat_all;
  std::vector<double> treat_none;
  friend bool operator==(const DcaCurve&, const DcaCurve&) = default;
};

/// TP/N - FP/N * pt/(1-pt). Throws ArgumentError unless 0 < pt < 1.
double net_benefit(std::size_t tp, std::size_t fp, std::size_t n, double pt);
/// 0.01, 0.02, ..., 0.99 (step configurable).
std::vector<double> default_pt_grid(double step = 0.01);
/// Predicts positive iff score >= pt for each class column.
std::vector<DcaCurve> dca_ovr(const Tensor<double>& scores, const std::vector<int>& y_true,
                              const std::vector<double>& pt_grid = default_pt_grid());

struct LatencyStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::size_t samples = 0;
  friend bool operator==(const LatencyStats&, const LatencyStats&) = default;
};

LatencyStats latency_stats(const std::vector<double>& millis);

struct MetricsReport {
  std::vector<std::string> class_names;
  std::string weights;  // "ema" or "raw"
  ConfusionMatrix confusion;
  ClassificationMetrics metrics;
  std::vector<RocCurve> roc;
  double macro_auc = 0.0;
  std::vector<DcaCurve> dca;
  LatencyStats latency;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Builds the full report from softmax probabilities [N,K] and labels.
MetricsReport make_report(const Tensor<double>& probs, const std::vector<int>& y_true,
                          std::vector<std::string> class_names);

nlohmann::json to_json(const MetricsReport& r);
MetricsReport metrics_report_from_json(const nlohmann::json& j);

/// "ACC PRE REC F1 AUC" as percentages, macro-averaged.
std::string summary_line(const MetricsReport& r);

enum ExportFormat : unsigned { kExportJson = 1, kExportCsv = 2, kExportSvg = 4, kExportAll = 7 };

/// Writes <dir>/<stem>.json, <stem>.csv, <stem>_roc.csv, <stem>_dca.csv, <stem>_roc.svg and
/// <stem>_dca.svg according to `formats`. Returns the paths written.
std::vector<std::string> export_report(const MetricsReport& r, const std::string& dir,
                                       unsigned formats = kExportAll,
                                       const std::string& stem = "metrics");

std::string roc_svg(const MetricsReport& r);
std::string dca_svg(const MetricsReport& r);

}  // namespace rnp
