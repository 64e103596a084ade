#pragma once

// Convex QP solver:  minimize 1/2 x'Hx + q'x  s.t.  G x <= h,  B x = c.
//
// Alternating-direction operator splitting with over-relaxation (OSQP-style
// splitting on z = Ax, A = [B; G]), adaptive step parameter, and an
// active-set polishing step that refines the ADMM iterate to KKT accuracy.

#include <iosfwd>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ksqi/grid.hpp"

namespace ksqi {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct QpProblem {
  SparseMatrix quad_matrix;  // symmetric PSD, full storage
  Eigen::VectorXd lin_vector;
  ConstraintSystem constraints;

  void validate() const;  // throws ValidationError
  Eigen::Index variables() const { return lin_vector.size(); }
  double objective(const Eigen::VectorXd& x) const;
};

enum class SolveStatus { Optimal, MaxIterations, Infeasible };
const char* to_string(SolveStatus s);

struct SolverSettings {
  double tol_primal = 1e-8;
  double tol_dual = 1e-8;
  int max_iter = 200000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;  // over-relaxation, in (0, 2)
  bool adaptive_rho = true;
  int check_interval = 10;
  bool polish = true;
  int polish_interval = 100;
  std::ostream* trace = nullptr;  // CSV: iteration,objective,primal_residual,dual_residual,rho
};

struct SolverReport {
  Eigen::VectorXd solution;
  Eigen::VectorXd ineq_duals;  // >= 0, one per row of G
  Eigen::VectorXd eq_duals;    // one per row of B
  SolveStatus status = SolveStatus::MaxIterations;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
  int iterations = 0;
  bool polished = false;
};

SolverReport solve_qp(const QpProblem& p, const SolverSettings& settings = {});

struct KktResiduals {
  double primal = 0.0;           // max(|Bx - c|, (Gx - h)+), infinity norm
  double dual = 0.0;             // |Hx + q + G'l + B'v|, infinity norm
  double complementarity = 0.0;  // max_i |l_i (Gx - h)_i|
};

/// Throws std::invalid_argument when an inequality dual is negative.
KktResiduals kkt_residuals(const QpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& ineq_duals,
                           const Eigen::VectorXd& eq_duals);

}  // namespace ksqi
