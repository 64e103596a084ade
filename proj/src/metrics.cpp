#include "ksqi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>

#include "ksqi/error.hpp"

namespace ksqi {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, std::size_t min_len) {
  if (x.size() != y.size()) throw ValidationError("correlation inputs differ in length");
  if (x.size() < min_len) throw ValidationError("need at least " + std::to_string(min_len) + " points");
}

double mean_of(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

double pearson(std::span<const double> x, std::span<const double> y) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx, dy = y[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ComputationError("undefined correlation: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct LinearFit {
  double slope = 0.0, intercept = 0.0, sse = 0.0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
  }
  LinearFit f;
  f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - (f.intercept + f.slope * x[k]);
    f.sse += r * r;
  }
  return f;
}

double logistic_sse(const std::array<double, 4>& b, std::span<const double> x, std::span<const double> y) {
  double sse = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - logistic4(b, x[k]);
    sse += r * r;
  }
  return sse;
}

// Levenberg-Marquardt over (b1, b2, b3, log b4).
std::array<double, 4> levenberg_marquardt(std::array<double, 4> b, std::span<const double> x,
                                          std::span<const double> y) {
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd jac(n, 4);
  Eigen::VectorXd res(n);
  double sse = logistic_sse(b, x, y);
  double mu = 1e-3;
  for (int iter = 0; iter < 500; ++iter) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double z = (x[static_cast<std::size_t>(k)] - b[2]) / b[3];
      const double g = 1.0 / (1.0 + std::exp(-z));
      const double slope = (b[0] - b[1]) * g * (1.0 - g);
      jac(k, 0) = g;
      jac(k, 1) = 1.0 - g;
      jac(k, 2) = -slope / b[3];
      jac(k, 3) = -slope * z;
      res[k] = y[static_cast<std::size_t>(k)] - (b[1] + (b[0] - b[1]) * g);
    }
    const Eigen::Matrix4d jtj = jac.transpose() * jac;
    const Eigen::Vector4d jtr = jac.transpose() * res;
    bool improved = false;
    for (int attempt = 0; attempt < 30 && !improved; ++attempt) {
      Eigen::Matrix4d lhs = jtj;
      lhs.diagonal() += mu * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::Vector4d step = lhs.ldlt().solve(jtr);
      std::array<double, 4> trial{b[0] + step[0], b[1] + step[1], b[2] + step[2], b[3] * std::exp(step[3])};
      const double trial_sse = logistic_sse(trial, x, y);
      if (std::isfinite(trial_sse) && trial_sse < sse) {
        const double gain = sse - trial_sse;
        b = trial;
        sse = trial_sse;
        mu = std::max(mu / 3.0, 1e-12);
        improved = true;
        if (gain <= 1e-14 * std::max(sse, 1e-300)) return b;
      } else {
        mu *= 4.0;
      }
    }
    if (!improved) break;
  }
  return b;
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo;
    while (hi + 1 < order.size() && x[order[hi + 1]] == x[order[lo]]) ++hi;
    const double avg = 0.5 * static_cast<double>(lo + hi) + 1.0;
    for (std::size_t k = lo; k <= hi; ++k) ranks[order[k]] = avg;
    lo = hi + 1;
  }
  return ranks;
}

double plcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 3);
  return pearson(x, y);
}

double srcc(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y, 3);
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return pearson(rx, ry);
}

double krcc(std::span<const double> x, std::span<const double> y, Execution ex) {
  check_pair(x, y, 3);
  const kernels::PairCounts c = kernels::kendall_pairs(ex, x, y);
  const double n = static_cast<double>(x.size());
  const double n0 = n * (n - 1.0) / 2.0;
  const double denom = std::sqrt((n0 - static_cast<double>(c.tied_x)) * (n0 - static_cast<double>(c.tied_y)));
  if (denom == 0.0) throw ComputationError("undefined correlation: constant input");
  return std::clamp(static_cast<double>(c.concordant - c.discordant) / denom, -1.0, 1.0);
}

double logistic4(const std::array<double, 4>& b, double x) {
  return b[1] + (b[0] - b[1]) / (1.0 + std::exp(-(x - b[2]) / b[3]));
}

VqegMapping vqeg_map(std::span<const double> objective, std::span<const double> mos, std::uint64_t seed) {
  check_pair(objective, mos, 5);
  const LinearFit lin = linear_fit(objective, mos);
  const double mx = mean_of(objective);
  double var = 0.0;
  for (double v : objective) var += (v - mx) * (v - mx);
  const double sd = std::sqrt(var / static_cast<double>(objective.size()));
  const auto [lo_it, hi_it] = std::minmax_element(mos.begin(), mos.end());

  VqegMapping out;
  double best = std::numeric_limits<double>::infinity();
  if (sd > 0.0) {
    std::vector<double> sorted(objective.begin(), objective.end());
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 0.5 * sd);
    for (int start = 0; start < 3; ++start) {
      const double center = start == 0 ? median : median + jitter(rng);
      for (double orient : {1.0, -1.0}) {
        for (double width : {0.25, 1.0, 4.0}) {
          std::array<double, 4> b{orient > 0 ? *hi_it : *lo_it, orient > 0 ? *lo_it : *hi_it, center, width * sd};
          b = levenberg_marquardt(b, objective, mos);
          const double sse = logistic_sse(b, objective, mos);
          if (std::isfinite(sse) && sse < best) {
            best = sse;
            out.params = b;
          }
        }
      }
    }
  }
  out.mapped.resize(objective.size());
  if (!(best <= lin.sse * (1.0 + 1e-9) + 1e-12)) {
    out.linear_fallback = true;
    out.slope = lin.slope;
    out.intercept = lin.intercept;
    out.sse = lin.sse;
    for (std::size_t k = 0; k < objective.size(); ++k) out.mapped[k] = lin.intercept + lin.slope * objective[k];
    return out;
  }
  out.sse = best;
  for (std::size_t k = 0; k < objective.size(); ++k) out.mapped[k] = logistic4(out.params, objective[k]);
  return out;
}

Dataset rescale_mos(const Dataset& ds, double low, double high) {
  const double span = ds.mos_scale.high - ds.mos_scale.low;
  if (!(span > 0.0) || !std::isfinite(span)) throw ValidationError("degenerate MOS scale for dataset " + ds.name);
  if (!(high > low)) throw ValidationError("degenerate target MOS scale");
  Dataset out = ds;
  for (Session& s : out.sessions) {
    if (s.mos) s.mos = low + (*s.mos - ds.mos_scale.low) / span * (high - low);
  }
  out.mos_scale = MosScale{low, high};
  return out;
}

char symbol(Significance s) {
  switch (s) {
    case Significance::Better: return '1';
    case Significance::Worse: return '0';
    default: return '-';
  }
}

SignificanceMatrix significance_matrix(const std::vector<std::string>& models,
                                       const std::vector<std::vector<double>>& residuals, double confidence) {
  if (models.size() != residuals.size()) throw ValidationError("one residual vector per model required");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("confidence must be in (0, 1)");
  std::vector<double> variance;
  for (std::size_t k = 0; k < residuals.size(); ++k) {
    const auto& r = residuals[k];
    if (r.size() < 50) {
      throw ValidationError("model " + models[k] + " has " + std::to_string(r.size()) +
                            " residuals; the variance-ratio test assumes approximately Gaussian residuals and "
                            "needs at least 50");
    }
    const double m = mean_of(r);
    double ss = 0.0;
    for (double v : r) ss += (v - m) * (v - m);
    variance.push_back(ss / static_cast<double>(r.size() - 1));
  }
  const double alpha = 1.0 - confidence;
  SignificanceMatrix out;
  out.models = models;
  out.cells.assign(models.size(), std::vector<Significance>(models.size(), Significance::Self));
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      const boost::math::fisher_f dist(static_cast<double>(residuals[i].size() - 1),
                                       static_cast<double>(residuals[j].size() - 1));
      const double ratio = variance[j] > 0.0 ? variance[i] / variance[j]
                                             : (variance[i] > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
      Significance s = Significance::Indistinguishable;
      if (ratio < boost::math::quantile(dist, alpha / 2.0)) {
        s = Significance::Better;
      } else if (ratio > boost::math::quantile(dist, 1.0 - alpha / 2.0)) {
        s = Significance::Worse;
      }
      out.cells[i][j] = s;
      out.cells[j][i] = s == Significance::Better  ? Significance::Worse
                        : s == Significance::Worse ? Significance::Better
                                                   : s;
    }
  }
  return out;
}

std::string significance_csv(const SignificanceMatrix& m) {
  std::ostringstream out;
  out << "QoE model";
  for (const auto& name : m.models) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < m.models.size(); ++i) {
    out << m.models[i];
    for (Significance s : m.cells[i]) out << ',' << symbol(s);
    out << '\n';
  }
  return out.str();
}

namespace {

double pick(const MetricTriple& t, Metric m) {
  switch (m) {
    case Metric::Plcc: return t.plcc;
    case Metric::Srcc: return t.srcc;
    default: return t.krcc;
  }
}

}  // namespace

double EvaluationReport::average(std::size_t model, Metric m) const {
  double sum = 0.0;
  for (const MetricTriple& t : cells.at(model)) sum += pick(t, m);
  return sum / static_cast<double>(datasets.size());
}

double EvaluationReport::weighted_average(std::size_t model, Metric m) const {
  double sum = 0.0, weight = 0.0;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    sum += static_cast<double>(dataset_sizes[d]) * pick(cells.at(model)[d], m);
    weight += static_cast<double>(dataset_sizes[d]);
  }
  return sum / weight;
}

EvaluationReport evaluate_models(const std::vector<std::string>& models, const std::vector<std::string>& datasets,
                                 const std::vector<std::vector<std::vector<double>>>& predictions,
                                 const std::vector<std::vector<double>>& mos, std::uint64_t seed) {
  if (predictions.size() != models.size()) throw ValidationError("one prediction set per model required");
  if (mos.size() != datasets.size()) throw ValidationError("one MOS vector per dataset required");
  if (datasets.empty()) throw ValidationError("no datasets to evaluate");
  EvaluationReport r;
  r.models = models;
  r.datasets = datasets;
  for (const auto& m : mos) r.dataset_sizes.push_back(m.size());
  r.cells.assign(models.size(), std::vector<MetricTriple>(datasets.size()));
  r.residuals.assign(models.size(), {});
  r.linear_fallback.assign(models.size(), std::vector<bool>(datasets.size(), false));
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (predictions[i].size() != datasets.size()) {
      throw ValidationError("model " + models[i] + " lacks predictions for every dataset");
    }
    for (std::size_t d = 0; d < datasets.size(); ++d) {
      const auto& pred = predictions[i][d];
      const VqegMapping map = vqeg_map(pred, mos[d], seed);
      r.cells[i][d] = MetricTriple{plcc(map.mapped, mos[d]), srcc(pred, mos[d]), krcc(pred, mos[d])};
      r.linear_fallback[i][d] = map.linear_fallback;
      for (std::size_t k = 0; k < pred.size(); ++k) r.residuals[i].push_back(mos[d][k] - map.mapped[k]);
    }
  }
  return r;
}

std::string report_csv(const EvaluationReport& r, Metric m) {
  std::ostringstream out;
  out.precision(17);
  out << "QoE model";
  for (const auto& d : r.datasets) out << ',' << d;
  out << ",Average,Weighted Average\n";
  for (std::size_t i = 0; i < r.models.size(); ++i) {
    out << r.models[i];
    for (const MetricTriple& t : r.cells[i]) out << ',' << pick(t, m);
    out << ',' << r.average(i, m) << ',' << r.weighted_average(i, m) << '\n';
  }
  out << "# Weighted Average weights each dataset by its session count:";
  for (std::size_t d = 0; d < r.datasets.size(); ++d) out << ' ' << r.datasets[d] << '=' << r.dataset_sizes[d];
  out << '\n';
  return out.str();
}

}  // namespace ksqi
