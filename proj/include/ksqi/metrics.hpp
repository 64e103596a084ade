#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ksqi/parallel.hpp"
#include "ksqi/session.hpp"

namespace ksqi {

/// Pearson, Spearman (average ranks for ties) and Kendall tau-b. Inputs need
/// equal length >= 3; constant inputs raise ComputationError.
double plcc(std::span<const double> x, std::span<const double> y);
double srcc(std::span<const double> x, std::span<const double> y);
double krcc(std::span<const double> x, std::span<const double> y, Execution ex = Execution::Serial);

/// 1-based average ranks.
std::vector<double> average_ranks(std::span<const double> x);

/// f(x) = b2 + (b1 - b2) / (1 + exp(-(x - b3) / b4)), b4 > 0.
double logistic4(const std::array<double, 4>& b, double x);

struct VqegMapping {
  std::vector<double> mapped;
  std::array<double, 4> params{};  // logistic parameters when !linear_fallback
  bool linear_fallback = false;
  double slope = 0.0, intercept = 0.0;  // used when linear_fallback
  double sse = 0.0;
};

/// Seeded multi-start Levenberg-Marquardt fit of logistic4 from objective to
/// mos. Needs >= 5 points.
VqegMapping vqeg_map(std::span<const double> objective, std::span<const double> mos, std::uint64_t seed = 1);

/// Affine map of the dataset's declared MOS scale onto [low, high].
Dataset rescale_mos(const Dataset& ds, double low = 0.0, double high = 100.0);

enum class Significance { Better, Worse, Indistinguishable, Self };
char symbol(Significance s);  // '1', '0', '-', '-'

struct SignificanceMatrix {
  std::vector<std::string> models;
  std::vector<std::vector<Significance>> cells;  // row model vs column model
};

/// Two-sided F-test on residual variance ratios. Residual vectors need >= 50 entries.
SignificanceMatrix significance_matrix(const std::vector<std::string>& models,
                                       const std::vector<std::vector<double>>& residuals, double confidence = 0.95);
std::string significance_csv(const SignificanceMatrix& m);

struct MetricTriple {
  double plcc = 0.0, srcc = 0.0, krcc = 0.0;
};

enum class Metric { Plcc, Srcc, Krcc };

struct EvaluationReport {
  std::vector<std::string> models;
  std::vector<std::string> datasets;
  std::vector<std::size_t> dataset_sizes;
  std::vector<std::vector<MetricTriple>> cells;    // [model][dataset]
  std::vector<std::vector<double>> residuals;      // [model], all datasets concatenated
  std::vector<std::vector<bool>> linear_fallback;  // [model][dataset]

  double average(std::size_t model, Metric m) const;
  /// Weighted by session count per dataset.
  double weighted_average(std::size_t model, Metric m) const;
};

/// predictions[model][dataset] aligned with mos[dataset]. PLCC is taken after
/// the per-dataset logistic mapping; SRCC and KRCC on raw predictions.
EvaluationReport evaluate_models(const std::vector<std::string>& models, const std::vector<std::string>& datasets,
                                 const std::vector<std::vector<std::vector<double>>>& predictions,
                                 const std::vector<std::vector<double>>& mos, std::uint64_t seed = 1);

/// One table: rows are models, columns the datasets then Average and Weighted Average.
std::string report_csv(const EvaluationReport& r, Metric m);

}  // namespace ksqi
