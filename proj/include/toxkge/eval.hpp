#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "toxkge/matrix.hpp"

namespace toxkge::eval {

struct ConfusionCounts {
  std::size_t tp{0};
  std::size_t fp{0};
  std::size_t tn{0};
  std::size_t fn{0};

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Counts under label = [score > tau]; truth is 1 for positives.
ConfusionCounts confusion(std::span<const double> scores, std::span<const double> truth, double tau = 0.5);

struct Rates {
  double sensitivity{0};
  double specificity{0};
  double yi{0};  ///< sensitivity + specificity - 1
};

/// Throws DataError when either class is absent (tp+fn = 0 or tn+fp = 0).
Rates compute_metrics(const ConfusionCounts& c);

struct YoudenMax {
  double yi_max{0};
  double tau_max{0};
};

/// Maximum Youden index over thresholds {0, 1} and the midpoints between
/// consecutive distinct scores; the smallest maximizing threshold wins.
YoudenMax youden_max(std::span<const double> scores, std::span<const double> truth);

/// Fraction of the total variance captured by the leading `components`
/// principal components of the rows of `m`. Needs at least two rows.
double explained_variance(const Matrix& m, int components = 10);

struct MetricsReport {
  double sensitivity{0};
  double specificity{0};
  double yi{0};
  double yi_max{0};
  double tau_max{0};
};

struct Aggregate {
  MetricsReport mean;
  MetricsReport std;  ///< population standard deviation
};

Aggregate aggregate_runs(std::span<const MetricsReport> runs);

/// Header for metrics CSV files.
std::string metrics_csv_header();
/// One per-run row; `run` is the repeat index.
std::string metrics_csv_row(const std::string& model, const std::string& strategy, std::size_t run,
                            const MetricsReport& r);
/// Aggregate row with `mean±std` cells and run column `mean±std`.
std::string metrics_csv_aggregate(const std::string& model, const std::string& strategy, const Aggregate& a);

}  // namespace toxkge::eval
