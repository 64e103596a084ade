#include "ksqi/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/SparseCholesky>

#include "ksqi/error.hpp"

namespace ksqi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEqualityRhoScale = 1e3;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;

double inf_norm(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// Stacked view of the constraints as l <= A x <= u with A = [B; G].
struct Stacked {
  SparseMatrix a;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::Index n_eq = 0;
};

Stacked stack_constraints(const ConstraintSystem& cs, Eigen::Index n) {
  Stacked s;
  s.n_eq = cs.eq_matrix.rows();
  const Eigen::Index m = s.n_eq + cs.ineq_matrix.rows();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(cs.eq_matrix.nonZeros() + cs.ineq_matrix.nonZeros()));
  for (Eigen::Index r = 0; r < cs.eq_matrix.rows(); ++r) {
    for (SparseRowMatrix::InnerIterator it(cs.eq_matrix, r); it; ++it) t.emplace_back(r, it.col(), it.value());
  }
  for (Eigen::Index r = 0; r < cs.ineq_matrix.rows(); ++r) {
    for (SparseRowMatrix::InnerIterator it(cs.ineq_matrix, r); it; ++it) {
      t.emplace_back(s.n_eq + r, it.col(), it.value());
    }
  }
  s.a.resize(m, n);
  s.a.setFromTriplets(t.begin(), t.end());
  s.lower.resize(m);
  s.upper.resize(m);
  s.lower.head(s.n_eq) = cs.eq_bound;
  s.upper.head(s.n_eq) = cs.eq_bound;
  s.lower.tail(m - s.n_eq).setConstant(-kInf);
  s.upper.tail(m - s.n_eq) = cs.ineq_bound;
  return s;
}

SparseMatrix identity(Eigen::Index n, double scale) {
  SparseMatrix id(n, n);
  id.setIdentity();
  return id * scale;
}

class AdmmKkt {
 public:
  bool factor(const SparseMatrix& h, const SparseMatrix& a, const Eigen::VectorXd& rho, double sigma) {
    const Eigen::Index n = h.rows();
    SparseMatrix k = h + identity(n, sigma) + SparseMatrix(a.transpose() * rho.asDiagonal() * a);
    solver_.compute(k);
    return solver_.info() == Eigen::Success;
  }
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return solver_.solve(rhs); }

 private:
  Eigen::SimplicialLDLT<SparseMatrix> solver_;
};

struct Iterate {
  Eigen::VectorXd x, z, y;
};

struct Candidate {
  Eigen::VectorXd x, ineq_duals, eq_duals;
  KktResiduals res;
};

Candidate make_candidate(const QpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& y, Eigen::Index n_eq) {
  Candidate c;
  c.x = x;
  c.eq_duals = y.head(n_eq);
  c.ineq_duals = y.tail(y.size() - n_eq).cwiseMax(0.0);
  c.res = kkt_residuals(p, c.x, c.ineq_duals, c.eq_duals);
  return c;
}

bool meets(const KktResiduals& r, const SolverSettings& s) {
  return r.primal <= s.tol_primal && r.dual <= s.tol_dual;
}

/// Solves the equality-constrained QP on the guessed active set, with
/// regularization and iterative refinement. Returns nullopt on failure.
std::optional<Candidate> polish(const QpProblem& p, const Stacked& st, const Iterate& it) {
  const Eigen::Index n = p.variables();
  const Eigen::Index m = st.a.rows();
  std::vector<Eigen::Index> active;
  for (Eigen::Index r = 0; r < m; ++r) {
    if (r < st.n_eq) {
      active.push_back(r);
    } else if (st.upper[r] - it.z[r] < it.y[r]) {
      active.push_back(r);
    }
  }
  const auto n_act = static_cast<Eigen::Index>(active.size());
  constexpr double delta = 1e-9;

  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index c = 0; c < n; ++c) {
    for (SparseMatrix::InnerIterator e(p.quad_matrix, c); e; ++e) t.emplace_back(e.row(), c, e.value());
    t.emplace_back(c, c, delta);
  }
  SparseRowMatrix a_rows = st.a;
  Eigen::VectorXd b_act(n_act);
  for (Eigen::Index k = 0; k < n_act; ++k) {
    const Eigen::Index r = active[static_cast<std::size_t>(k)];
    for (SparseRowMatrix::InnerIterator e(a_rows, r); e; ++e) {
      t.emplace_back(n + k, e.col(), e.value());
      t.emplace_back(e.col(), n + k, e.value());
    }
    t.emplace_back(n + k, n + k, -delta);
    b_act[k] = st.upper[r];
  }
  SparseMatrix k_reg(n + n_act, n + n_act);
  k_reg.setFromTriplets(t.begin(), t.end());

  // Unregularized operator for refinement.
  SparseMatrix k_exact = k_reg;
  for (Eigen::Index c = 0; c < n; ++c) k_exact.coeffRef(c, c) -= delta;
  for (Eigen::Index k = 0; k < n_act; ++k) k_exact.coeffRef(n + k, n + k) += delta;

  Eigen::SimplicialLDLT<SparseMatrix> ldlt(k_reg);
  if (ldlt.info() != Eigen::Success) return std::nullopt;

  Eigen::VectorXd rhs(n + n_act);
  rhs.head(n) = -p.lin_vector;
  rhs.tail(n_act) = b_act;
  Eigen::VectorXd sol = ldlt.solve(rhs);
  for (int refine = 0; refine < 25; ++refine) {
    const Eigen::VectorXd err = rhs - k_exact * sol;
    if (inf_norm(err) < 1e-14) break;
    sol += ldlt.solve(err);
  }
  if (!sol.allFinite()) return std::nullopt;

  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  for (Eigen::Index k = 0; k < n_act; ++k) {
    const Eigen::Index r = active[static_cast<std::size_t>(k)];
    y[r] = sol[n + k];
    if (r >= st.n_eq && y[r] < -1e-12) return std::nullopt;  // wrong active-set guess
  }
  return make_candidate(p, sol.head(n), y, st.n_eq);
}

bool primal_infeasible(const Stacked& st, const Eigen::VectorXd& dy, double eps) {
  const double norm = inf_norm(dy);
  if (norm < 1e-12) return false;
  if (inf_norm(st.a.transpose() * dy) > eps * norm) return false;
  double support = 0.0;
  for (Eigen::Index r = 0; r < dy.size(); ++r) {
    if (dy[r] > 0.0) {
      if (!std::isfinite(st.upper[r])) return false;
      support += st.upper[r] * dy[r];
    } else if (dy[r] < 0.0) {
      if (!std::isfinite(st.lower[r])) return false;
      support += st.lower[r] * dy[r];
    }
  }
  return support < -eps * norm;
}

}  // namespace

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::MaxIterations: return "max_iterations";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "?";
}

void QpProblem::validate() const {
  const Eigen::Index n = lin_vector.size();
  if (quad_matrix.rows() != n || quad_matrix.cols() != n) throw ValidationError("QP: quad_matrix size mismatch");
  if (constraints.ineq_matrix.cols() != n || constraints.eq_matrix.cols() != n) {
    throw ValidationError("QP: constraint column count mismatch");
  }
  if (constraints.ineq_matrix.rows() != constraints.ineq_bound.size() ||
      constraints.eq_matrix.rows() != constraints.eq_bound.size()) {
    throw ValidationError("QP: constraint bound length mismatch");
  }
  const SparseMatrix asym = quad_matrix - SparseMatrix(quad_matrix.transpose());
  double scale = 0.0, skew = 0.0;
  for (Eigen::Index c = 0; c < quad_matrix.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(quad_matrix, c); it; ++it) scale = std::max(scale, std::abs(it.value()));
  }
  for (Eigen::Index c = 0; c < asym.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(asym, c); it; ++it) skew = std::max(skew, std::abs(it.value()));
  }
  if (skew > 1e-12 * scale) throw ValidationError("QP: quad_matrix is not symmetric");
}

double QpProblem::objective(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(quad_matrix * x) + lin_vector.dot(x);
}

KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& ineq_duals,
                           const Eigen::VectorXd& eq_duals) {
  const ConstraintSystem& cs = p.constraints;
  if (x.size() != p.variables() || ineq_duals.size() != cs.ineq_matrix.rows() ||
      eq_duals.size() != cs.eq_matrix.rows()) {
    throw std::invalid_argument("kkt_residuals: dimension mismatch");
  }
  if (ineq_duals.size() > 0 && ineq_duals.minCoeff() < 0.0) {
    throw std::invalid_argument("kkt_residuals: inequality duals must be nonnegative");
  }
  KktResiduals r;
  const Eigen::VectorXd slack = cs.ineq_matrix * x - cs.ineq_bound;
  r.primal = std::max(inf_norm(cs.eq_matrix * x - cs.eq_bound), slack.size() ? std::max(slack.maxCoeff(), 0.0) : 0.0);
  const Eigen::VectorXd grad = p.quad_matrix * x + p.lin_vector + cs.ineq_matrix.transpose() * ineq_duals +
                               cs.eq_matrix.transpose() * eq_duals;
  r.dual = inf_norm(grad);
  r.complementarity = inf_norm(ineq_duals.cwiseProduct(slack));
  return r;
}

SolverReport solve_qp(const QpProblem& p, const SolverSettings& s) {
  p.validate();
  if (!(s.tol_primal > 0.0) || !(s.tol_dual > 0.0)) throw ValidationError("QP: tolerances must be positive");
  if (!(s.alpha > 0.0 && s.alpha < 2.0)) throw ValidationError("QP: over-relaxation must lie in (0, 2)");
  if (s.max_iter <= 0) throw ValidationError("QP: max_iter must be positive");

  const Eigen::Index n = p.variables();
  const Stacked st = stack_constraints(p.constraints, n);
  const Eigen::Index m = st.a.rows();

  double rho = s.rho;
  auto rho_vector = [&](double base) {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(m, base);
    v.head(st.n_eq) *= kEqualityRhoScale;
    return v;
  };
  Eigen::VectorXd rho_vec = rho_vector(rho);
  AdmmKkt kkt;
  if (!kkt.factor(p.quad_matrix, st.a, rho_vec, s.sigma)) throw ComputationError("QP: KKT factorization failed");

  Iterate it{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m)};
  it.z = (st.a * it.x).cwiseMax(st.lower).cwiseMin(st.upper);

  Candidate best = make_candidate(p, it.x, it.y, st.n_eq);
  auto better = [](const KktResiduals& a, const KktResiduals& b) {
    return std::max(a.primal, a.dual) < std::max(b.primal, b.dual);
  };

  if (s.trace) *s.trace << "iteration,objective,primal_residual,dual_residual,rho\n";

  SolverReport report;
  report.status = SolveStatus::MaxIterations;
  Eigen::VectorXd y_prev = it.y;
  int iter = 0;
  for (iter = 1; iter <= s.max_iter; ++iter) {
    const Eigen::VectorXd rhs = s.sigma * it.x - p.lin_vector + st.a.transpose() * (rho_vec.cwiseProduct(it.z) - it.y);
    const Eigen::VectorXd x_tilde = kkt.solve(rhs);
    const Eigen::VectorXd z_tilde = st.a * x_tilde;
    const Eigen::VectorXd z_relaxed = s.alpha * z_tilde + (1.0 - s.alpha) * it.z;
    it.x = s.alpha * x_tilde + (1.0 - s.alpha) * it.x;
    const Eigen::VectorXd z_next =
        (z_relaxed + it.y.cwiseQuotient(rho_vec)).cwiseMax(st.lower).cwiseMin(st.upper);
    it.y += rho_vec.cwiseProduct(z_relaxed - z_next);
    it.z = z_next;

    if (iter % s.check_interval != 0 && iter != s.max_iter) continue;

    const Eigen::VectorXd ax = st.a * it.x;
    const Eigen::VectorXd hx = p.quad_matrix * it.x;
    const Eigen::VectorXd aty = st.a.transpose() * it.y;
    const double r_prim = inf_norm(ax - it.z);
    const double r_dual = inf_norm(hx + p.lin_vector + aty);
    if (s.trace) {
      *s.trace << iter << ',' << p.objective(it.x) << ',' << r_prim << ',' << r_dual << ',' << rho << '\n';
    }

    Candidate cand = make_candidate(p, it.x, it.y, st.n_eq);
    if (better(cand.res, best.res)) best = cand;
    if (meets(best.res, s)) {
      report.status = SolveStatus::Optimal;
      break;
    }

    if (s.polish && iter % s.polish_interval == 0) {
      if (auto pol = polish(p, st, it); pol && better(pol->res, best.res)) {
        best = std::move(*pol);
        report.polished = true;
        if (meets(best.res, s)) {
          report.status = SolveStatus::Optimal;
          break;
        }
      }
    }

    if (primal_infeasible(st, it.y - y_prev, 1e-7)) {
      report.status = SolveStatus::Infeasible;
      break;
    }
    y_prev = it.y;

    if (s.adaptive_rho) {
      const double prim_scale = std::max({inf_norm(ax), inf_norm(it.z), 1e-30});
      const double dual_scale = std::max({inf_norm(hx), inf_norm(aty), inf_norm(p.lin_vector), 1e-30});
      const double ratio = std::sqrt((r_prim / prim_scale) / std::max(r_dual / dual_scale, 1e-30));
      const double proposed = std::clamp(rho * ratio, kRhoMin, kRhoMax);
      if (proposed > 5.0 * rho || proposed < 0.2 * rho) {
        rho = proposed;
        rho_vec = rho_vector(rho);
        if (!kkt.factor(p.quad_matrix, st.a, rho_vec, s.sigma)) throw ComputationError("QP: refactorization failed");
      }
    }
  }

  // A converged ADMM iterate identifies the active set; the polished KKT
  // solution is kept whenever it is at least as accurate.
  if (s.polish && report.status != SolveStatus::Infeasible && !report.polished) {
    if (auto pol = polish(p, st, it); pol && !better(best.res, pol->res)) {
      best = std::move(*pol);
      report.polished = true;
      if (meets(best.res, s)) report.status = SolveStatus::Optimal;
    }
  }

  report.iterations = std::min(iter, s.max_iter);
  report.solution = std::move(best.x);
  report.ineq_duals = std::move(best.ineq_duals);
  report.eq_duals = std::move(best.eq_duals);
  report.primal_residual = best.res.primal;
  report.dual_residual = best.res.dual;
  report.objective = p.objective(report.solution);
  return report;
}

}  // namespace ksqi
