#include "toxkge/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "toxkge/detail/text.hpp"
#include "toxkge/error.hpp"

namespace toxkge::eval {

ConfusionCounts confusion(std::span<const double> scores, std::span<const double> truth, double tau) {
  if (scores.size() != truth.size()) throw DataError("score and label counts differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool predicted = scores[i] > tau;
    bool actual = truth[i] > 0.5;
    if (predicted && actual)
      ++c.tp;
    else if (predicted)
      ++c.fp;
    else if (actual)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

Rates compute_metrics(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) throw DataError("sensitivity undefined: no positive samples");
  if (c.tn + c.fp == 0) throw DataError("specificity undefined: no negative samples");
  Rates r;
  r.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  r.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  r.yi = r.sensitivity + r.specificity - 1.0;
  return r;
}

YoudenMax youden_max(std::span<const double> scores, std::span<const double> truth) {
  if (scores.size() != truth.size()) throw DataError("score and label counts differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::size_t pos = 0, neg = 0;
  for (double t : truth) (t > 0.5 ? pos : neg)++;
  if (pos == 0 || neg == 0) throw DataError("Youden index needs both classes");

  // Candidate thresholds in increasing order, each with the labeling it induces.
  std::vector<double> taus{0.0};
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    double a = scores[order[i]], b = scores[order[i + 1]];
    if (a != b) taus.push_back(a + (b - a) / 2.0);
  }
  taus.push_back(1.0);
  std::sort(taus.begin(), taus.end());

  YoudenMax best{-std::numeric_limits<double>::infinity(), 0.0};
  std::size_t cursor = 0, neg_at_or_below = 0, pos_at_or_below = 0;
  for (double tau : taus) {
    while (cursor < order.size() && scores[order[cursor]] <= tau) {
      (truth[order[cursor]] > 0.5 ? pos_at_or_below : neg_at_or_below)++;
      ++cursor;
    }
    const double sens = static_cast<double>(pos - pos_at_or_below) / static_cast<double>(pos);
    const double spec = static_cast<double>(neg_at_or_below) / static_cast<double>(neg);
    const double yi = sens + spec - 1.0;
    if (yi > best.yi_max) best = {yi, tau};
  }
  return best;
}

double explained_variance(const Matrix& m, int components) {
  if (m.rows() < 2) throw DataError("explained variance needs at least two rows");
  if (components < 1) throw DataError("need at least one component");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> x(m.values().data(), static_cast<Eigen::Index>(m.rows()),
                             static_cast<Eigen::Index>(m.cols()));
  RowMat centered = x.rowwise() - x.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
  Eigen::VectorXd ev = solver.eigenvalues().cwiseMax(0.0);  // ascending
  const double total = ev.sum();
  if (!(total > 0)) throw DataError("embedding matrix has zero variance");
  const auto take = std::min<Eigen::Index>(components, ev.size());
  return ev.tail(take).sum() / total;
}

Aggregate aggregate_runs(std::span<const MetricsReport> runs) {
  if (runs.empty()) throw DataError("no runs to aggregate");
  using Field = double MetricsReport::*;
  constexpr Field fields[] = {&MetricsReport::sensitivity, &MetricsReport::specificity, &MetricsReport::yi,
                              &MetricsReport::yi_max, &MetricsReport::tau_max};
  Aggregate a;
  const auto n = static_cast<double>(runs.size());
  for (auto f : fields) {
    // shifted by the first run so identical runs give exactly (value, 0)
    const double x0 = runs.front().*f;
    double shift = 0;
    for (const auto& r : runs) shift += r.*f - x0;
    shift /= n;
    double var = 0;
    for (const auto& r : runs) var += (r.*f - x0 - shift) * (r.*f - x0 - shift);
    a.mean.*f = x0 + shift;
    a.std.*f = std::sqrt(var / n);
  }
  return a;
}

std::string metrics_csv_header() { return "model,strategy,run,sensitivity,specificity,yi,yi_max,tau_max\n"; }

std::string metrics_csv_row(const std::string& model, const std::string& strategy, std::size_t run,
                            const MetricsReport& r) {
  return detail::csv_escape(model) + ',' + strategy + ',' + std::to_string(run) + ',' +
         detail::format_double(r.sensitivity) + ',' + detail::format_double(r.specificity) + ',' +
         detail::format_double(r.yi) + ',' + detail::format_double(r.yi_max) + ',' +
         detail::format_double(r.tau_max) + '\n';
}

std::string metrics_csv_aggregate(const std::string& model, const std::string& strategy, const Aggregate& a) {
  auto cell = [](double m, double s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f±%.3f", m, s);
    return std::string(buf);
  };
  return detail::csv_escape(model) + ',' + strategy + ",mean±std," + cell(a.mean.sensitivity, a.std.sensitivity) +
         ',' + cell(a.mean.specificity, a.std.specificity) + ',' + cell(a.mean.yi, a.std.yi) + ',' +
         cell(a.mean.yi_max, a.std.yi_max) + ',' + cell(a.mean.tau_max, a.std.tau_max) + '\n';
}

}  // namespace toxkge::eval
