#pragma once

// Discretized rebuffering (S) and adaptation (A) functions and the linear
// constraint systems that encode their perceptual shape properties.
//
// Grid convention (0-based): S(i, j) sits at (p, tau) = (i/N * P, j/N * tau_max);
// A(i, j) sits at (p, dp) = (i/N * P, (j - i)/N * P), i.e. column j is the
// destination-quality bin. Vectorization is row-major: k = i * (N + 1) + j.

#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ksqi/parallel.hpp"

namespace ksqi {

struct GridSpec {
  int n_steps = 10;
  double quality_max = 100.0;
  double rebuffer_max = 10.0;

  void validate() const;  // throws ValidationError
  int side() const { return n_steps + 1; }
  int cells() const { return side() * side(); }
  int index(int i, int j) const { return i * side() + j; }
  double quality_step() const { return quality_max / n_steps; }
  double rebuffer_step() const { return rebuffer_max / n_steps; }

  bool operator==(const GridSpec&) const = default;
};

enum class GridKind { Rebuffering, Adaptation };

struct QoEGrid {
  GridKind kind = GridKind::Rebuffering;
  GridSpec spec;
  Eigen::MatrixXd values;  // side x side

  static QoEGrid zeros(GridKind kind, const GridSpec& spec);
  static QoEGrid from_vector(GridKind kind, const GridSpec& spec, const Eigen::VectorXd& v);
  Eigen::VectorXd to_vector() const;
};

/// Named constraint families. A1 and A2 share rows (sign + monotone in dp).
enum class Constraint { S1, S2, S3, S4, A1, A2, A3, A4 };
using ConstraintSet = std::set<Constraint>;

/// Tag carried by every emitted row.
enum class RowLabel { ZeroAnchor, S1, S2, S3, S4, A1A2, A3, A4 };

std::string to_string(Constraint c);
std::string to_string(RowLabel r);
Constraint constraint_from_string(std::string_view name);
/// Parses "S1,S2,A3"; empty text gives the empty set.
ConstraintSet parse_constraint_list(std::string_view text);

ConstraintSet all_rebuffering_constraints();
ConstraintSet all_adaptation_constraints();

/// G x <= h, B x = c over vectorized grids.
struct ConstraintSystem {
  SparseRowMatrix ineq_matrix;
  Eigen::VectorXd ineq_bound;
  std::vector<RowLabel> ineq_labels;
  SparseRowMatrix eq_matrix;
  Eigen::VectorXd eq_bound;
  std::vector<RowLabel> eq_labels;

  Eigen::Index variables() const { return ineq_matrix.cols(); }
  std::size_t count(RowLabel label) const;
};

ConstraintSystem build_rebuffering_constraints(const GridSpec& spec, const ConstraintSet& enabled);
ConstraintSystem build_adaptation_constraints(const GridSpec& spec, const ConstraintSet& enabled);
ConstraintSystem build_constraints(GridKind kind, const GridSpec& spec, const ConstraintSet& enabled);

struct RowViolation {
  RowLabel label = RowLabel::ZeroAnchor;
  bool equality = false;
  std::size_t row = 0;  // row within its (in)equality block
  double residual = 0.0;
};

/// Rows whose residual exceeds `tol`: (G x - h)_r > tol or |(B x - c)_r| > tol.
std::vector<RowViolation> check_feasible(const QoEGrid& grid, const ConstraintSystem& cs, double tol,
                                         Execution ex = Execution::Serial);

/// Nearest-bin quantization, ties toward the larger index. For Rebuffering the
/// second coordinate is tau (clamped to the last bin beyond tau_max); for
/// Adaptation it is dp and the returned j is the destination bin.
std::pair<int, int> bin_index(const GridSpec& spec, double p, double second, GridKind kind);

/// Nearest bin of a single quality value.
int quality_bin(const GridSpec& spec, double p);

/// Sparse-triplet text export: header line, then `G r c v`, `h r v label`,
/// `B r c v`, `c r v label` lines.
std::string export_triplets(const ConstraintSystem& cs);
ConstraintSystem import_triplets(std::string_view text);

}  // namespace ksqi
