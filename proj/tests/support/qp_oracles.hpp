#pragma once

// Independent reference solvers used only by tests: pool-adjacent-violators,
// exhaustive active-set enumeration, and feasible random sampling.

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ksqi/qp.hpp"

namespace ksqi::testing {

/// Least-squares nondecreasing fit of y (unit weights).
inline std::vector<double> pava_nondecreasing(const std::vector<double>& y) {
  std::vector<double> mean;
  std::vector<int> size;
  for (double v : y) {
    mean.push_back(v);
    size.push_back(1);
    while (mean.size() > 1 && mean[mean.size() - 2] > mean.back()) {
      const double m2 = mean.back();
      const int s2 = size.back();
      mean.pop_back();
      size.pop_back();
      mean.back() = (mean.back() * size.back() + m2 * s2) / (size.back() + s2);
      size.back() += s2;
    }
  }
  std::vector<double> out;
  for (std::size_t b = 0; b < mean.size(); ++b) out.insert(out.end(), static_cast<std::size_t>(size[b]), mean[b]);
  return out;
}

inline std::vector<double> pava_nonincreasing(const std::vector<double>& y) {
  std::vector<double> neg(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) neg[k] = -y[k];
  auto fit = pava_nondecreasing(neg);
  for (double& v : fit) v = -v;
  return fit;
}

struct DenseQp {
  Eigen::MatrixXd h;
  Eigen::VectorXd q;
  Eigen::MatrixXd g;  // g x <= hb
  Eigen::VectorXd hb;
  Eigen::MatrixXd b;  // b x = c
  Eigen::VectorXd c;

  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(h * x) + q.dot(x); }

  QpProblem to_problem() const {
    QpProblem p;
    p.quad_matrix = h.sparseView();
    p.lin_vector = q;
    p.constraints.ineq_matrix = g.sparseView();
    p.constraints.ineq_bound = hb;
    p.constraints.ineq_labels.assign(static_cast<std::size_t>(g.rows()), RowLabel::S1);
    p.constraints.eq_matrix = b.sparseView();
    p.constraints.eq_bound = c;
    p.constraints.eq_labels.assign(static_cast<std::size_t>(b.rows()), RowLabel::ZeroAnchor);
    return p;
  }
};

/// Exact minimizer of a strictly convex QP by trying every active set.
inline Eigen::VectorXd active_set_enumeration(const DenseQp& qp) {
  const Eigen::Index n = qp.q.size(), m = qp.g.rows(), e = qp.b.rows();
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_x;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index r = 0; r < m; ++r) {
      if (mask >> r & 1u) act.push_back(r);
    }
    const Eigen::Index k = e + static_cast<Eigen::Index>(act.size());
    if (k > n) continue;
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd rhs(n + k);
    kkt.topLeftCorner(n, n) = qp.h;
    rhs.head(n) = -qp.q;
    for (Eigen::Index r = 0; r < e; ++r) {
      kkt.block(n + r, 0, 1, n) = qp.b.row(r);
      kkt.block(0, n + r, n, 1) = qp.b.row(r).transpose();
      rhs[n + r] = qp.c[r];
    }
    for (std::size_t a = 0; a < act.size(); ++a) {
      const Eigen::Index row = n + e + static_cast<Eigen::Index>(a);
      kkt.block(row, 0, 1, n) = qp.g.row(act[a]);
      kkt.block(0, row, n, 1) = qp.g.row(act[a]).transpose();
      rhs[row] = qp.hb[act[a]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (lu.rank() < n + k) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd x = sol.head(n);
    bool ok = true;
    for (std::size_t a = 0; a < act.size(); ++a) ok &= sol[n + e + static_cast<Eigen::Index>(a)] >= -1e-10;
    if (m > 0) ok &= ((qp.g * x - qp.hb).array() <= 1e-10).all();
    if (ok && qp.objective(x) < best) {
      best = qp.objective(x);
      best_x = x;
    }
  }
  return best_x;
}

/// Best objective over `samples` random feasible points. Requires x = 0 to be
/// feasible with c = 0; samples are drawn in the null space of b and pulled
/// back along the ray to the origin until every row of g holds.
inline double best_random_feasible(const DenseQp& qp, std::int64_t samples, std::uint64_t seed, double radius) {
  const Eigen::Index n = qp.q.size();
  Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(n, n);
  if (qp.b.rows() > 0) basis = Eigen::FullPivLU<Eigen::MatrixXd>(qp.b).kernel();
  const Eigen::Index dim = basis.cols();
  // Center the cloud on the unconstrained minimizer restricted to the null space.
  const Eigen::MatrixXd hr = basis.transpose() * qp.h * basis;
  const Eigen::VectorXd center = basis * hr.ldlt().solve(-basis.transpose() * qp.q);

  constexpr std::int64_t kBlock = 4096;
  const std::int64_t blocks = (samples + kBlock - 1) / kBlock;
  double best = 0.0;  // the origin itself
#pragma omp parallel for schedule(static) reduction(min : best)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(blk) * 0x9E3779B97F4A7C15ull);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::VectorXd w(dim);
    const std::int64_t end = std::min(samples, (blk + 1) * kBlock);
    for (std::int64_t s = blk * kBlock; s < end; ++s) {
      for (Eigen::Index d = 0; d < dim; ++d) w[d] = gauss(rng);
      const double scale = radius * unit(rng);
      Eigen::VectorXd x = (s % 2 == 0) ? Eigen::VectorXd(center + basis * (scale * w)) : Eigen::VectorXd(basis * (scale * w));
      double t = 1.0;
      if (qp.g.rows() > 0) {
        const Eigen::VectorXd gx = qp.g * x;
        for (Eigen::Index r = 0; r < gx.size(); ++r) {
          if (gx[r] > qp.hb[r]) t = std::min(t, qp.hb[r] / gx[r]);
        }
      }
      x *= std::max(t, 0.0);
      best = std::min(best, qp.objective(x));
    }
  }
  return best;
}

/// Strictly convex random QP with the origin feasible.
inline DenseQp random_qp(std::mt19937_64& rng, int n, int m_ineq, int m_eq) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DenseQp qp;
  Eigen::MatrixXd l(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) l(r, c) = gauss(rng);
  }
  qp.h = l * l.transpose() / n + 0.1 * Eigen::MatrixXd::Identity(n, n);
  qp.q.resize(n);
  for (int r = 0; r < n; ++r) qp.q[r] = 3.0 * gauss(rng);
  qp.g.resize(m_ineq, n);
  qp.hb.resize(m_ineq);
  for (int r = 0; r < m_ineq; ++r) {
    for (int c = 0; c < n; ++c) qp.g(r, c) = gauss(rng);
    qp.hb[r] = 0.5 * unit(rng);
  }
  qp.b.resize(m_eq, n);
  qp.c = Eigen::VectorXd::Zero(m_eq);
  for (int r = 0; r < m_eq; ++r) {
    for (int c = 0; c < n; ++c) qp.b(r, c) = gauss(rng);
  }
  return qp;
}

}  // namespace ksqi::testing
