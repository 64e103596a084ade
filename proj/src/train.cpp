#include "ksqi/train.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <random>

#include "ksqi/error.hpp"

namespace ksqi {

namespace {

bool labeled(const Session& s) { return s.mos.has_value(); }

double mean_quality(const Session& s) {
  double sum = 0.0;
  for (const Chunk& c : s.chunks) sum += c.quality;
  return sum / static_cast<double>(s.chunks.size());
}

void require_valid(const Session& s, const std::string& where) {
  const auto bad = validate_session(s);
  if (!bad.empty()) throw ValidationError(where + ": " + bad.front().describe());
  if (!labeled(s)) throw ValidationError(where + ": missing mos");
}

FidelityDesign build_design(const std::vector<Session>& sessions, const GridSpec& spec, GridKind kind) {
  spec.validate();
  std::vector<Eigen::Triplet<double>> trip;
  FidelityDesign d;
  d.target_vector.resize(static_cast<Eigen::Index>(sessions.size()));
  for (std::size_t m = 0; m < sessions.size(); ++m) {
    const Session& s = sessions[m];
    if (s.chunks.empty()) throw ValidationError("session " + std::to_string(m) + " has no chunks");
    const double w = 1.0 / static_cast<double>(s.chunks.size());
    for (std::size_t c = 0; c < s.chunks.size(); ++c) {
      const double prev = c == 0 ? kInitialExpectation : s.chunks[c - 1].quality;
      const Chunk& ch = s.chunks[c];
      if (kind == GridKind::Rebuffering) {
        if (ch.rebuffering_before <= 0.0) continue;
        const auto [i, j] = bin_index(spec, prev, ch.rebuffering_before, GridKind::Rebuffering);
        trip.emplace_back(static_cast<int>(m), spec.index(i, j), w);
      } else {
        if (c == 0 || ch.quality == prev) continue;
        trip.emplace_back(static_cast<int>(m), spec.index(quality_bin(spec, prev), quality_bin(spec, ch.quality)), w);
      }
    }
    d.target_vector[static_cast<Eigen::Index>(m)] = s.mos.value_or(0.0) - mean_quality(s);
  }
  d.weight_matrix.resize(static_cast<Eigen::Index>(sessions.size()), spec.cells());
  d.weight_matrix.setFromTriplets(trip.begin(), trip.end());
  return d;
}

void copy_report(const SolverReport& r, double& primal, double& dual, int& iterations) {
  primal = r.primal_residual;
  dual = r.dual_residual;
  iterations = r.iterations;
}

}  // namespace

TrainingSet partition_sessions(const std::vector<Session>& sessions, PartitionReport* report) {
  TrainingSet ts;
  PartitionReport rep;
  for (const Session& s : sessions) {
    if (!labeled(s)) {
      ++rep.dropped_unlabeled;
      continue;
    }
    const FeatureSummary f = session_features(s);
    const bool stalls = f.total_rebuffer_seconds > 0.0;
    const bool switches = f.total_switch_magnitude > 0.0;
    if (stalls && !switches) {
      ts.rebuffer_sessions.push_back(s);
    } else if (switches && !stalls && s.initial_buffering == 0.0) {
      ts.adaptation_sessions.push_back(s);
    } else if (stalls || switches) {
      ++rep.dropped_mixed;
    } else {
      ++rep.dropped_eventless;
    }
  }
  rep.rebuffer = ts.rebuffer_sessions.size();
  rep.adaptation = ts.adaptation_sessions.size();
  if (report) *report = rep;
  return ts;
}

void validate_training_set(const TrainingSet& ts) {
  for (std::size_t m = 0; m < ts.rebuffer_sessions.size(); ++m) {
    const std::string where = "rebuffer_sessions[" + std::to_string(m) + "]";
    const Session& s = ts.rebuffer_sessions[m];
    require_valid(s, where);
    if (session_features(s).total_switch_magnitude != 0.0) {
      throw ValidationError(where + ": contains a quality switch");
    }
  }
  for (std::size_t m = 0; m < ts.adaptation_sessions.size(); ++m) {
    const std::string where = "adaptation_sessions[" + std::to_string(m) + "]";
    const Session& s = ts.adaptation_sessions[m];
    require_valid(s, where);
    if (session_features(s).total_rebuffer_seconds != 0.0 || s.initial_buffering != 0.0) {
      throw ValidationError(where + ": contains rebuffering");
    }
  }
}

FidelityDesign rebuffering_design(const std::vector<Session>& sessions, const GridSpec& spec) {
  return build_design(sessions, spec, GridKind::Rebuffering);
}

FidelityDesign adaptation_design(const std::vector<Session>& sessions, const GridSpec& spec) {
  return build_design(sessions, spec, GridKind::Adaptation);
}

SparseRowMatrix second_difference_operator(const GridSpec& spec) {
  spec.validate();
  const int n = spec.n_steps;
  if (n < 2) throw ValidationError("second differences need n_steps >= 2");
  std::vector<Eigen::Triplet<double>> trip;
  int row = 0;
  for (int i = 1; i < n; ++i) {
    for (int j = 0; j <= n; ++j, ++row) {
      trip.emplace_back(row, spec.index(i - 1, j), 1.0);
      trip.emplace_back(row, spec.index(i, j), -2.0);
      trip.emplace_back(row, spec.index(i + 1, j), 1.0);
    }
  }
  for (int i = 0; i <= n; ++i) {
    for (int j = 1; j < n; ++j, ++row) {
      trip.emplace_back(row, spec.index(i, j - 1), 1.0);
      trip.emplace_back(row, spec.index(i, j), -2.0);
      trip.emplace_back(row, spec.index(i, j + 1), 1.0);
    }
  }
  SparseRowMatrix d(row, spec.cells());
  d.setFromTriplets(trip.begin(), trip.end());
  return d;
}

double fidelity_error(const FidelityDesign& d, const Eigen::VectorXd& x) {
  const Eigen::Index m = d.target_vector.size();
  if (m == 0) return 0.0;
  return (d.weight_matrix * x - d.target_vector).squaredNorm() / static_cast<double>(m);
}

double smoothness_error(const GridSpec& spec, const Eigen::VectorXd& x) {
  const double side = spec.side();
  return (second_difference_operator(spec) * x).squaredNorm() / (side * side);
}

QpProblem assemble_objective(const FidelityDesign& d, const GridSpec& spec, double lambda,
                             const ConstraintSystem& constraints) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
  const Eigen::Index m = d.target_vector.size();
  if (m == 0) throw ValidationError("empty fidelity design");
  const double side = spec.side();
  const SparseMatrix w = d.weight_matrix;
  const SparseMatrix dd = second_difference_operator(spec);
  QpProblem p;
  const SparseMatrix wtw = SparseMatrix(w.transpose()) * w;
  const SparseMatrix dtd = SparseMatrix(dd.transpose()) * dd;
  p.quad_matrix = 2.0 * (wtw / static_cast<double>(m) + (lambda / (side * side)) * dtd);
  p.quad_matrix.makeCompressed();
  p.lin_vector = -2.0 * (w.transpose() * d.target_vector) / static_cast<double>(m);
  p.constraints = constraints;
  return p;
}

QpProblem assemble_rebuffering_objective(const TrainingSet& ts, const GridSpec& spec, double lambda,
                                         const ConstraintSet& enabled) {
  if (ts.rebuffer_sessions.empty()) throw ValidationError("rebuffer_sessions partition is empty");
  validate_training_set(TrainingSet{ts.rebuffer_sessions, {}});
  return assemble_objective(rebuffering_design(ts.rebuffer_sessions, spec), spec, lambda,
                            build_rebuffering_constraints(spec, enabled));
}

QpProblem assemble_adaptation_objective(const TrainingSet& ts, const GridSpec& spec, double lambda,
                                        const ConstraintSet& enabled) {
  if (ts.adaptation_sessions.empty()) throw ValidationError("adaptation_sessions partition is empty");
  validate_training_set(TrainingSet{{}, ts.adaptation_sessions});
  return assemble_objective(adaptation_design(ts.adaptation_sessions, spec), spec, lambda,
                            build_adaptation_constraints(spec, enabled));
}

KsqiModel train_ksqi(const TrainingSet& ts, const GridSpec& spec, const TrainOptions& options) {
  spec.validate();
  if (ts.rebuffer_sessions.empty()) throw ValidationError("rebuffer_sessions partition is empty");
  if (ts.adaptation_sessions.empty()) throw ValidationError("adaptation_sessions partition is empty");
  const QpProblem sp = assemble_rebuffering_objective(ts, spec, options.lambda, options.s_constraints);
  const QpProblem ap = assemble_adaptation_objective(ts, spec, options.lambda, options.a_constraints);

  SolverReport sr, ar;
  if (options.concurrent && options.solver.trace == nullptr) {
    auto pending = std::async(std::launch::async, [&] { return solve_qp(ap, options.solver); });
    sr = solve_qp(sp, options.solver);
    ar = pending.get();
  } else {
    sr = solve_qp(sp, options.solver);
    ar = solve_qp(ap, options.solver);
  }
  if (sr.status != SolveStatus::Optimal) {
    throw TrainingError(std::string("rebuffering QP ended with status ") + to_string(sr.status),
                        GridKind::Rebuffering, sr);
  }
  if (ar.status != SolveStatus::Optimal) {
    throw TrainingError(std::string("adaptation QP ended with status ") + to_string(ar.status), GridKind::Adaptation,
                        ar);
  }

  KsqiModel m;
  m.spec = spec;
  m.lambda = options.lambda;
  m.s_constraints = options.s_constraints;
  m.a_constraints = options.a_constraints;
  m.s_grid = QoEGrid::from_vector(GridKind::Rebuffering, spec, sr.solution);
  m.a_grid = QoEGrid::from_vector(GridKind::Adaptation, spec, ar.solution);
  ModelProvenance& pv = m.provenance;
  pv.dataset = options.dataset;
  pv.seed = options.seed;
  pv.mos_rescaled = true;
  pv.rebuffer_sessions = ts.rebuffer_sessions.size();
  pv.adaptation_sessions = ts.adaptation_sessions.size();
  copy_report(sr, pv.rebuffer_primal_residual, pv.rebuffer_dual_residual, pv.rebuffer_iterations);
  copy_report(ar, pv.adaptation_primal_residual, pv.adaptation_dual_residual, pv.adaptation_iterations);
  m.verify(options.feasibility_tol);
  return m;
}

LambdaSelection cross_validate_lambda(const TrainingSet& ts, const GridSpec& spec, const std::vector<double>& candidates,
                                      double split_fraction, std::uint64_t seed, const TrainOptions& base) {
  if (candidates.empty()) throw ValidationError("no lambda candidates");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ValidationError("split_fraction must be in (0, 1)");
  validate_training_set(ts);

  std::mt19937_64 rng(seed);
  auto split = [&](const std::vector<Session>& all, const char* name, std::vector<Session>& train,
                   std::vector<Session>& valid) {
    if (all.size() < 2) throw ValidationError(std::string(name) + " partition needs at least 2 sessions");
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<std::size_t>(std::lround(split_fraction * static_cast<double>(all.size())));
    const std::size_t n_train = std::clamp<std::size_t>(n, 1, all.size() - 1);
    for (std::size_t k = 0; k < order.size(); ++k) (k < n_train ? train : valid).push_back(all[order[k]]);
  };
  TrainingSet train, valid;
  split(ts.rebuffer_sessions, "rebuffer_sessions", train.rebuffer_sessions, valid.rebuffer_sessions);
  split(ts.adaptation_sessions, "adaptation_sessions", train.adaptation_sessions, valid.adaptation_sessions);
  const FidelityDesign vs = rebuffering_design(valid.rebuffer_sessions, spec);
  const FidelityDesign va = adaptation_design(valid.adaptation_sessions, spec);
  const double pooled = static_cast<double>(vs.target_vector.size() + va.target_vector.size());

  LambdaSelection out;
  out.candidates = candidates;
  double best = std::numeric_limits<double>::infinity();
  for (double lambda : candidates) {
    TrainOptions opt = base;
    opt.lambda = lambda;
    opt.seed = seed;
    const KsqiModel m = train_ksqi(train, spec, opt);
    const double loss = ((vs.weight_matrix * m.s_grid.to_vector() - vs.target_vector).squaredNorm() +
                         (va.weight_matrix * m.a_grid.to_vector() - va.target_vector).squaredNorm()) /
                        pooled;
    out.validation_loss.push_back(loss);
    if (loss < best || (loss == best && lambda > out.best_lambda)) {
      best = loss;
      out.best_lambda = lambda;
    }
  }
  return out;
}

}  // namespace ksqi
