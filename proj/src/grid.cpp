#include "ksqi/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ksqi/error.hpp"

namespace ksqi {

namespace {

using Triplet = Eigen::Triplet<double>;

/// Accumulates rows for one (in)equality block.
class RowBuilder {
 public:
  void add(std::initializer_list<std::pair<int, double>> terms, double bound, RowLabel label) {
    const int row = static_cast<int>(bounds_.size());
    for (const auto& [col, coef] : terms) triplets_.emplace_back(row, col, coef);
    bounds_.push_back(bound);
    labels_.push_back(label);
  }

  void finish(int cols, SparseRowMatrix& matrix, Eigen::VectorXd& bound, std::vector<RowLabel>& labels) {
    matrix.resize(static_cast<Eigen::Index>(bounds_.size()), cols);
    matrix.setFromTriplets(triplets_.begin(), triplets_.end());
    matrix.makeCompressed();
    bound = Eigen::Map<const Eigen::VectorXd>(bounds_.data(), static_cast<Eigen::Index>(bounds_.size()));
    labels = std::move(labels_);
  }

 private:
  std::vector<Triplet> triplets_;
  std::vector<double> bounds_;
  std::vector<RowLabel> labels_;
};

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

}  // namespace

void GridSpec::validate() const {
  if (n_steps < 2) throw ValidationError("grid n_steps must be >= 2, got " + std::to_string(n_steps));
  if (!(quality_max > 0.0) || !std::isfinite(quality_max)) throw ValidationError("grid quality_max must be > 0");
  if (!(rebuffer_max > 0.0) || !std::isfinite(rebuffer_max)) throw ValidationError("grid rebuffer_max must be > 0");
}

QoEGrid QoEGrid::zeros(GridKind kind, const GridSpec& spec) {
  spec.validate();
  return {kind, spec, Eigen::MatrixXd::Zero(spec.side(), spec.side())};
}

QoEGrid QoEGrid::from_vector(GridKind kind, const GridSpec& spec, const Eigen::VectorXd& v) {
  spec.validate();
  if (v.size() != spec.cells()) throw ValidationError("grid vector has wrong length");
  QoEGrid g{kind, spec, Eigen::MatrixXd(spec.side(), spec.side())};
  for (int i = 0; i < spec.side(); ++i) {
    for (int j = 0; j < spec.side(); ++j) g.values(i, j) = v[spec.index(i, j)];
  }
  return g;
}

Eigen::VectorXd QoEGrid::to_vector() const {
  Eigen::VectorXd v(spec.cells());
  for (int i = 0; i < spec.side(); ++i) {
    for (int j = 0; j < spec.side(); ++j) v[spec.index(i, j)] = values(i, j);
  }
  return v;
}

std::string to_string(Constraint c) {
  switch (c) {
    case Constraint::S1: return "S1";
    case Constraint::S2: return "S2";
    case Constraint::S3: return "S3";
    case Constraint::S4: return "S4";
    case Constraint::A1: return "A1";
    case Constraint::A2: return "A2";
    case Constraint::A3: return "A3";
    case Constraint::A4: return "A4";
  }
  return "?";
}

std::string to_string(RowLabel r) {
  switch (r) {
    case RowLabel::ZeroAnchor: return "zero-anchor";
    case RowLabel::S1: return "S1";
    case RowLabel::S2: return "S2";
    case RowLabel::S3: return "S3";
    case RowLabel::S4: return "S4";
    case RowLabel::A1A2: return "A1/A2";
    case RowLabel::A3: return "A3";
    case RowLabel::A4: return "A4";
  }
  return "?";
}

namespace {

RowLabel row_label_from_string(std::string_view s) {
  for (RowLabel r : {RowLabel::ZeroAnchor, RowLabel::S1, RowLabel::S2, RowLabel::S3, RowLabel::S4, RowLabel::A1A2,
                     RowLabel::A3, RowLabel::A4}) {
    if (to_string(r) == s) return r;
  }
  throw ParseError("unknown row label '" + std::string(s) + "'", 0, "label");
}

}  // namespace

Constraint constraint_from_string(std::string_view name) {
  for (Constraint c : {Constraint::S1, Constraint::S2, Constraint::S3, Constraint::S4, Constraint::A1, Constraint::A2,
                       Constraint::A3, Constraint::A4}) {
    if (to_string(c) == name) return c;
  }
  throw ValidationError("unknown constraint '" + std::string(name) + "'");
}

ConstraintSet parse_constraint_list(std::string_view text) {
  ConstraintSet out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view token = text.substr(start, end - start);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (!token.empty()) out.insert(constraint_from_string(token));
    start = end + 1;
  }
  return out;
}

ConstraintSet all_rebuffering_constraints() {
  return {Constraint::S1, Constraint::S2, Constraint::S3, Constraint::S4};
}

ConstraintSet all_adaptation_constraints() {
  return {Constraint::A1, Constraint::A2, Constraint::A3, Constraint::A4};
}

std::size_t ConstraintSystem::count(RowLabel label) const {
  std::size_t n = 0;
  for (RowLabel l : ineq_labels) n += (l == label);
  for (RowLabel l : eq_labels) n += (l == label);
  return n;
}

ConstraintSystem build_rebuffering_constraints(const GridSpec& spec, const ConstraintSet& enabled) {
  spec.validate();
  const int n = spec.n_steps;
  auto at = [&](int i, int j) { return spec.index(i, j); };
  RowBuilder eq, ineq;

  for (int i = 0; i <= n; ++i) eq.add({{at(i, 0), 1.0}}, 0.0, RowLabel::ZeroAnchor);

  if (enabled.contains(Constraint::S1)) {
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j < n; ++j) ineq.add({{at(i, j + 1), 1.0}, {at(i, j), -1.0}}, 0.0, RowLabel::S1);
    }
  }
  if (enabled.contains(Constraint::S2)) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= n; ++j) ineq.add({{at(i + 1, j), 1.0}, {at(i, j), -1.0}}, 0.0, RowLabel::S2);
    }
  }
  if (enabled.contains(Constraint::S3)) {
    // S(p, t1) + S(p, t2) <= S(p, t1 + t2) for every pair of nonzero bins whose sum is on the grid.
    for (int i = 0; i <= n; ++i) {
      for (int a = 1; 2 * a <= n; ++a) {
        for (int b = a; a + b <= n; ++b) {
          if (a == b) {
            ineq.add({{at(i, a), 2.0}, {at(i, a + b), -1.0}}, 0.0, RowLabel::S3);
          } else {
            ineq.add({{at(i, a), 1.0}, {at(i, b), 1.0}, {at(i, a + b), -1.0}}, 0.0, RowLabel::S3);
          }
        }
      }
    }
  }
  if (enabled.contains(Constraint::S4)) {
    const double step = spec.quality_step();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j <= n; ++j) ineq.add({{at(i, j), 1.0}, {at(i + 1, j), -1.0}}, step, RowLabel::S4);
    }
  }

  ConstraintSystem cs;
  ineq.finish(spec.cells(), cs.ineq_matrix, cs.ineq_bound, cs.ineq_labels);
  eq.finish(spec.cells(), cs.eq_matrix, cs.eq_bound, cs.eq_labels);
  return cs;
}

ConstraintSystem build_adaptation_constraints(const GridSpec& spec, const ConstraintSet& enabled) {
  spec.validate();
  const int n = spec.n_steps;
  auto at = [&](int i, int j) { return spec.index(i, j); };
  RowBuilder eq, ineq;

  for (int i = 0; i <= n; ++i) eq.add({{at(i, i), 1.0}}, 0.0, RowLabel::ZeroAnchor);

  if (enabled.contains(Constraint::A1) || enabled.contains(Constraint::A2)) {
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j < n; ++j) ineq.add({{at(i, j), 1.0}, {at(i, j + 1), -1.0}}, 0.0, RowLabel::A1A2);
    }
  }
  if (enabled.contains(Constraint::A3)) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) ineq.add({{at(i + 1, j + 1), 1.0}, {at(i, j), -1.0}}, 0.0, RowLabel::A3);
    }
  }
  if (enabled.contains(Constraint::A4)) {
    for (int i = 1; i <= n; ++i) {
      for (int d = 1; d <= i; ++d) ineq.add({{at(i, i - d), 1.0}, {at(i - d, i), 1.0}}, 0.0, RowLabel::A4);
    }
  }

  ConstraintSystem cs;
  ineq.finish(spec.cells(), cs.ineq_matrix, cs.ineq_bound, cs.ineq_labels);
  eq.finish(spec.cells(), cs.eq_matrix, cs.eq_bound, cs.eq_labels);
  return cs;
}

ConstraintSystem build_constraints(GridKind kind, const GridSpec& spec, const ConstraintSet& enabled) {
  return kind == GridKind::Rebuffering ? build_rebuffering_constraints(spec, enabled)
                                       : build_adaptation_constraints(spec, enabled);
}

std::vector<RowViolation> check_feasible(const QoEGrid& grid, const ConstraintSystem& cs, double tol, Execution ex) {
  if (grid.values.rows() != grid.spec.side() || grid.values.cols() != grid.spec.side() ||
      cs.ineq_matrix.cols() != grid.spec.cells() || cs.eq_matrix.cols() != grid.spec.cells()) {
    throw ValidationError("check_feasible: grid and constraint dimensions disagree");
  }
  const Eigen::VectorXd x = grid.to_vector();
  Eigen::VectorXd r_ineq, r_eq;
  kernels::affine_residual(ex, cs.ineq_matrix, x, cs.ineq_bound, r_ineq);
  kernels::affine_residual(ex, cs.eq_matrix, x, cs.eq_bound, r_eq);

  std::vector<RowViolation> out;
  for (Eigen::Index r = 0; r < r_eq.size(); ++r) {
    if (std::abs(r_eq[r]) > tol) out.push_back({cs.eq_labels[r], true, static_cast<std::size_t>(r), r_eq[r]});
  }
  for (Eigen::Index r = 0; r < r_ineq.size(); ++r) {
    if (r_ineq[r] > tol) out.push_back({cs.ineq_labels[r], false, static_cast<std::size_t>(r), r_ineq[r]});
  }
  return out;
}

int quality_bin(const GridSpec& spec, double p) {
  if (!(p >= 0.0 && p <= spec.quality_max)) {
    throw ValidationError("quality " + std::to_string(p) + " outside [0, " + std::to_string(spec.quality_max) + "]");
  }
  return std::min(round_half_up(p / spec.quality_step()), spec.n_steps);
}

std::pair<int, int> bin_index(const GridSpec& spec, double p, double second, GridKind kind) {
  spec.validate();
  const int i = quality_bin(spec, p);
  if (kind == GridKind::Rebuffering) {
    if (!(second >= 0.0)) throw ValidationError("rebuffering duration must be >= 0");
    const double j = std::min(static_cast<double>(spec.n_steps), std::floor(second / spec.rebuffer_step() + 0.5));
    return {i, static_cast<int>(j)};
  }
  constexpr double slack = 1e-9;
  if (!(second >= -p - slack && second <= spec.quality_max - p + slack)) {
    throw ValidationError("quality change outside [-p, P - p]");
  }
  const int j = round_half_up(i + second / spec.quality_step());
  return {i, std::clamp(j, 0, spec.n_steps)};
}

std::string export_triplets(const ConstraintSystem& cs) {
  std::ostringstream out;
  char buf[96];
  out << "ksqi-constraints 1 " << cs.variables() << ' ' << cs.ineq_matrix.rows() << ' ' << cs.eq_matrix.rows()
      << '\n';
  auto emit_block = [&](char m, char v, const SparseRowMatrix& a, const Eigen::VectorXd& b,
                        const std::vector<RowLabel>& labels) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      for (SparseRowMatrix::InnerIterator it(a, r); it; ++it) {
        std::snprintf(buf, sizeof buf, "%c %ld %ld %.17g\n", m, static_cast<long>(r), static_cast<long>(it.col()),
                      it.value());
        out << buf;
      }
    }
    for (Eigen::Index r = 0; r < b.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%c %ld %.17g ", v, static_cast<long>(r), b[r]);
      out << buf << to_string(labels[r]) << '\n';
    }
  };
  emit_block('G', 'h', cs.ineq_matrix, cs.ineq_bound, cs.ineq_labels);
  emit_block('B', 'c', cs.eq_matrix, cs.eq_bound, cs.eq_labels);
  return out.str();
}

ConstraintSystem import_triplets(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string magic;
  int version = 0;
  long cols = 0, n_ineq = 0, n_eq = 0;
  if (!(in >> magic >> version >> cols >> n_ineq >> n_eq) || magic != "ksqi-constraints" || version != 1 ||
      cols <= 0 || n_ineq < 0 || n_eq < 0) {
    throw ParseError("bad constraint-system header", 1, "header");
  }
  std::vector<Triplet> g, b;
  ConstraintSystem cs;
  cs.ineq_bound = Eigen::VectorXd::Zero(n_ineq);
  cs.eq_bound = Eigen::VectorXd::Zero(n_eq);
  cs.ineq_labels.assign(n_ineq, RowLabel::ZeroAnchor);
  cs.eq_labels.assign(n_eq, RowLabel::ZeroAnchor);

  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    char tag = 0;
    long r = -1;
    ls >> tag >> r;
    const long rows = (tag == 'G' || tag == 'h') ? n_ineq : n_eq;
    if (!ls || r < 0 || r >= rows) throw ParseError("bad row index", line_no, std::string(1, tag));
    if (tag == 'G' || tag == 'B') {
      long c = -1;
      double v = 0.0;
      if (!(ls >> c >> v) || c < 0 || c >= cols) throw ParseError("bad triplet", line_no, std::string(1, tag));
      (tag == 'G' ? g : b).emplace_back(r, c, v);
    } else if (tag == 'h' || tag == 'c') {
      double v = 0.0;
      std::string label;
      if (!(ls >> v >> label)) throw ParseError("bad bound line", line_no, std::string(1, tag));
      if (tag == 'h') {
        cs.ineq_bound[r] = v;
        cs.ineq_labels[r] = row_label_from_string(label);
      } else {
        cs.eq_bound[r] = v;
        cs.eq_labels[r] = row_label_from_string(label);
      }
    } else {
      throw ParseError("unknown line tag", line_no, std::string(1, tag));
    }
  }
  cs.ineq_matrix.resize(n_ineq, cols);
  cs.ineq_matrix.setFromTriplets(g.begin(), g.end());
  cs.eq_matrix.resize(n_eq, cols);
  cs.eq_matrix.setFromTriplets(b.begin(), b.end());
  return cs;
}

}  // namespace ksqi
