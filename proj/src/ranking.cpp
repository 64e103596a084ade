#include "ksqi/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "ksqi/error.hpp"

namespace ksqi {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double log_normal_cdf(double x) {
  if (x > -30.0) return std::log(normal_cdf(x));
  // Asymptotic tail: log(phi(x) / -x) with the first correction terms.
  const double x2 = x * x;
  return -0.5 * x2 - std::log(-x) + std::log(kInvSqrt2Pi) + std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

// phi(x) / Phi(x), stable for negative x.
double inverse_mills(double x) {
  if (x > -30.0) return kInvSqrt2Pi * std::exp(-0.5 * x * x) / normal_cdf(x);
  return -x / (1.0 - 1.0 / (x * x) + 3.0 / (x * x * x * x));
}

// log Phi(d + h) - log Phi(d) without cancellation for small h.
double log_cdf_change(double d, double h) {
  if (std::abs(h) > 1e-3) return log_normal_cdf(d + h) - log_normal_cdf(d);
  const double m = inverse_mills(d);
  const double m1 = -m * (d + m);
  const double m2 = -m1 * (d + m) - m * (1.0 + m1);
  return h * (m + h * (m1 / 2.0 + h * m2 / 6.0));
}

// Change of the log-likelihood along mu -> mu + step * dir.
double likelihood_change(const PairwiseMatrix& pm, const Eigen::VectorXd& mu, const Eigen::VectorXd& dir,
                         double step) {
  double delta = 0.0;
  const Eigen::Index k = mu.size();
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i != j && pm.trials(i, j) > 0) {
        delta += pm.r(i, j) * log_cdf_change(mu[i] - mu[j], step * (dir[i] - dir[j]));
      }
    }
  }
  return delta;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto a = cell.find_first_not_of(" \t\r"), b = cell.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
  }
  return out;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

PairwiseMatrix pairwise_from_counts(std::vector<std::string> models, const Eigen::MatrixXi& wins,
                                    const Eigen::MatrixXi& trials) {
  const auto k = static_cast<Eigen::Index>(models.size());
  if (k < 2) throw ValidationError("ranking needs at least 2 models");
  if (wins.rows() != k || wins.cols() != k || trials.rows() != k || trials.cols() != k) {
    throw ValidationError("wins and trials must be " + std::to_string(k) + " x " + std::to_string(k));
  }
  PairwiseMatrix pm;
  pm.models = std::move(models);
  pm.r = Eigen::MatrixXd::Constant(k, k, 0.5);
  pm.trials = trials;
  for (Eigen::Index i = 0; i < k; ++i) {
    pm.trials(i, i) = 0;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      const int n = trials(i, j);
      if (n != trials(j, i)) throw ValidationError("trial counts for " + pm.models[i] + "/" + pm.models[j] +
                                                   " differ by direction");
      if (n < 0 || wins(i, j) < 0 || wins(i, j) > n) {
        throw ValidationError("wins for " + pm.models[i] + " over " + pm.models[j] + " outside [0, trials]");
      }
      if (n == 0) continue;
      if (wins(i, j) + wins(j, i) != n) {
        throw ValidationError("wins for " + pm.models[i] + "/" + pm.models[j] + " do not sum to the trial count");
      }
      const double lo = 1.0 / (2.0 * n);
      double r = static_cast<double>(wins(i, j)) / n;
      if (r <= 0.0 || r >= 1.0) {
        r = std::clamp(r, lo, 1.0 - lo);
        ++pm.clipped;
      }
      pm.r(i, j) = r;
    }
  }
  return pm;
}

PairwiseMatrix pairwise_from_probabilities(std::vector<std::string> models, const Eigen::MatrixXd& r) {
  const auto k = static_cast<Eigen::Index>(models.size());
  if (k < 2) throw ValidationError("ranking needs at least 2 models");
  if (r.rows() != k || r.cols() != k) throw ValidationError("r must be " + std::to_string(k) + " x " + std::to_string(k));
  PairwiseMatrix pm;
  pm.models = std::move(models);
  pm.r = r;
  pm.trials = Eigen::MatrixXi::Ones(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    pm.trials(i, i) = 0;
    pm.r(i, i) = 0.5;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j) continue;
      if (!(r(i, j) > 0.0 && r(i, j) < 1.0)) {
        throw ValidationError("r(" + pm.models[i] + ", " + pm.models[j] + ") must lie strictly inside (0, 1)");
      }
      if (std::abs(r(i, j) + r(j, i) - 1.0) > 1e-12) {
        throw ValidationError("r(" + pm.models[i] + ", " + pm.models[j] + ") + r(" + pm.models[j] + ", " +
                              pm.models[i] + ") must equal 1");
      }
    }
  }
  return pm;
}

PairwiseMatrix parse_pairwise_csv(std::string_view text) {
  std::map<std::string, std::size_t> index;
  std::vector<std::string> names;
  struct Row {
    std::size_t i, j;
    int wins, trials;
  };
  std::vector<Row> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  auto id = [&](const std::string& name) {
    auto [it, inserted] = index.try_emplace(name, names.size());
    if (inserted) names.push_back(name);
    return it->second;
  };
  auto to_int = [&](const std::string& cell, const char* field) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size()) throw ParseError("expected an integer, got '" + cell + "'", line_no, field);
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto cells = split_csv(line);
    if (cells.size() != 4) throw ParseError("expected 4 columns", line_no, "");
    if (rows.empty() && cells[0] == "model_i") continue;
    if (cells[0].empty() || cells[1].empty()) throw ParseError("empty model name", line_no, "model_i");
    if (cells[0] == cells[1]) throw ValidationError("line " + std::to_string(line_no) + ": model compared with itself");
    const int w = to_int(cells[2], "wins_i"), n = to_int(cells[3], "trials");
    if (n < 0 || w < 0 || w > n) {
      throw ValidationError("line " + std::to_string(line_no) + ": wins_i must lie in [0, trials]");
    }
    rows.push_back({id(cells[0]), id(cells[1]), w, n});
  }
  const auto k = static_cast<Eigen::Index>(names.size());
  Eigen::MatrixXi wins = Eigen::MatrixXi::Zero(k, k), trials = Eigen::MatrixXi::Zero(k, k);
  for (const Row& r : rows) {
    const auto i = static_cast<Eigen::Index>(r.i), j = static_cast<Eigen::Index>(r.j);
    wins(i, j) += r.wins;
    wins(j, i) += r.trials - r.wins;
    trials(i, j) += r.trials;
    trials(j, i) += r.trials;
  }
  return pairwise_from_counts(std::move(names), wins, trials);
}

std::vector<std::vector<std::size_t>> comparison_components(const PairwiseMatrix& pm) {
  const std::size_t k = pm.size();
  std::vector<std::size_t> parent(k);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      if (pm.trials(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) > 0) parent[find(i)] = find(j);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < k; ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  std::sort(out.begin(), out.end());
  return out;
}

double ranking_log_likelihood(const PairwiseMatrix& pm, const Eigen::VectorXd& mu) {
  double ll = 0.0;
  const Eigen::Index k = mu.size();
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i != j && pm.trials(i, j) > 0) ll += pm.r(i, j) * log_normal_cdf(mu[i] - mu[j]);
    }
  }
  return ll;
}

Eigen::VectorXd ranking_gradient(const PairwiseMatrix& pm, const Eigen::VectorXd& mu) {
  const Eigen::Index k = mu.size();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      if (i == j || pm.trials(i, j) == 0) continue;
      const double v = pm.r(i, j) * inverse_mills(mu[i] - mu[j]);
      g[i] += v;
      g[j] -= v;
    }
  }
  return g;
}

RankingResult mle_ranking(const PairwiseMatrix& pm, const RankingOptions& opt) {
  const std::size_t k = pm.size();
  if (k < 2) throw ValidationError("ranking needs at least 2 models");
  const auto parts = comparison_components(pm);
  if (parts.size() > 1) {
    std::string msg = "comparison graph is disconnected:";
    for (const auto& part : parts) {
      msg += " {";
      for (std::size_t m = 0; m < part.size(); ++m) msg += (m ? ", " : "") + pm.models[part[m]];
      msg += "}";
    }
    throw ValidationError(msg);
  }
  const auto n = static_cast<Eigen::Index>(k);
  auto project = [](Eigen::VectorXd v) {
    v.array() -= v.mean();
    return v;
  };
  Eigen::VectorXd mu = opt.initial ? project(*opt.initial) : Eigen::VectorXd::Zero(n);
  if (mu.size() != n) throw ValidationError("initial mu has the wrong length");

  RankingResult out;
  out.models = pm.models;
  out.clipped = pm.clipped;
  double ll = ranking_log_likelihood(pm, mu);
  Eigen::VectorXd g = project(ranking_gradient(pm, mu));
  double step = 1.0;
  int it = 0;
  for (; it < opt.max_iterations && g.lpNorm<Eigen::Infinity>() > opt.tol; ++it) {
    const double g2 = g.squaredNorm();
    double gain = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 80; ++bt) {
      gain = likelihood_change(pm, mu, g, step);
      if (gain >= 1e-4 * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    mu = project(mu + step * g);
    ll += gain;
    out.history.push_back(ll);
    g = project(ranking_gradient(pm, mu));
    step *= 2.0;
  }
  out.mu = mu;
  out.log_likelihood = ranking_log_likelihood(pm, mu);
  out.gradient_norm = g.lpNorm<Eigen::Infinity>();
  out.iterations = it;
  if (out.gradient_norm > opt.tol) {
    std::ostringstream msg;
    msg << "ranking did not converge: gradient norm " << out.gradient_norm << " after " << it << " iterations";
    throw ComputationError(msg.str());
  }
  return out;
}

Eigen::MatrixXd preference_probability(const Eigen::VectorXd& mu) {
  const Eigen::Index k = mu.size();
  Eigen::MatrixXd p(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) p(i, j) = normal_cdf(mu[i] - mu[j]);
  }
  return p;
}

std::string ranking_csv(const RankingResult& rr) {
  std::vector<std::size_t> order(rr.models.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rr.mu[static_cast<Eigen::Index>(a)] > rr.mu[static_cast<Eigen::Index>(b)];
  });
  std::ostringstream out;
  out.precision(17);
  out << "rank,model,mu\n";
  for (std::size_t r = 0; r < order.size(); ++r) {
    out << r + 1 << "," << rr.models[order[r]] << "," << rr.mu[static_cast<Eigen::Index>(order[r])] << "\n";
  }
  out << "# clipped cells: " << rr.clipped << "\n";
  return out.str();
}

std::string matrix_csv(const std::vector<std::string>& models, const Eigen::MatrixXd& m) {
  std::ostringstream out;
  out.precision(17);
  out << "model";
  for (const std::string& name : models) out << "," << name;
  out << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << models[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << "," << m(i, j);
    out << "\n";
  }
  return out.str();
}

}  // namespace ksqi
