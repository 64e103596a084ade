#pragma once

// Global scores from pairwise preferences under a normal-CDF (Thurstone
// case V) link, fitted by maximum likelihood on the zero-sum subspace.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace ksqi {

struct PairwiseMatrix {
  std::vector<std::string> models;
  Eigen::MatrixXd r;       // r(i, j): probability that model i beat model j
  Eigen::MatrixXi trials;  // symmetric, 0 where a pair was never compared
  std::size_t clipped = 0; // cells moved off {0, 1}

  std::size_t size() const { return models.size(); }
};

/// Builds r from win counts (wins(i, j) + wins(j, i) = trials(i, j)). Cells
/// at exactly 0 or 1 are clipped to [1/(2n), 1 - 1/(2n)].
PairwiseMatrix pairwise_from_counts(std::vector<std::string> models, const Eigen::MatrixXi& wins,
                                    const Eigen::MatrixXi& trials);

/// Every off-diagonal pair counts as compared once. Requires
/// r(i, j) + r(j, i) = 1 and entries strictly inside (0, 1).
PairwiseMatrix pairwise_from_probabilities(std::vector<std::string> models, const Eigen::MatrixXd& r);

/// Rows `model_i,model_j,wins_i,trials`; an optional header row is skipped and
/// repeated pairs accumulate. Models are indexed in order of appearance.
PairwiseMatrix parse_pairwise_csv(std::string_view text);

/// Connected components of the comparison graph, each sorted by index.
std::vector<std::vector<std::size_t>> comparison_components(const PairwiseMatrix& pm);

struct RankingOptions {
  double tol = 1e-10;  // gradient infinity-norm at return
  int max_iterations = 200000;
  std::optional<Eigen::VectorXd> initial;
};

struct RankingResult {
  std::vector<std::string> models;
  Eigen::VectorXd mu;
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  std::vector<double> history;  // log-likelihood after each accepted step
  std::size_t clipped = 0;
};

double ranking_log_likelihood(const PairwiseMatrix& pm, const Eigen::VectorXd& mu);
Eigen::VectorXd ranking_gradient(const PairwiseMatrix& pm, const Eigen::VectorXd& mu);

/// Maximizes sum over compared ordered pairs of r(i,j) log Phi(mu_i - mu_j)
/// subject to sum(mu) = 0. Throws ValidationError naming the components when
/// the comparison graph is disconnected.
RankingResult mle_ranking(const PairwiseMatrix& pm, const RankingOptions& opt = {});

/// Entry (i, j) = Phi(mu_i - mu_j).
Eigen::MatrixXd preference_probability(const Eigen::VectorXd& mu);
inline Eigen::MatrixXd preference_probability(const RankingResult& rr) { return preference_probability(rr.mu); }

double normal_cdf(double x);

/// `rank,model,mu`, best first, with a trailing comment on clipped cells.
std::string ranking_csv(const RankingResult& rr);
/// Square matrix with a header row and column of model names.
std::string matrix_csv(const std::vector<std::string>& models, const Eigen::MatrixXd& m);

}  // namespace ksqi
