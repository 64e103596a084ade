#include "ksqi/robustness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "ksqi/error.hpp"

namespace ksqi {

TrainingSet synthesize_training_set(const QoEGrid& s_true, const QoEGrid& a_true, const SyntheticOptions& opt) {
  if (!(s_true.spec == a_true.spec)) throw ValidationError("grids must share a spec");
  if (opt.chunks < 2) throw ValidationError("synthetic sessions need at least 2 chunks");
  if (opt.hits_per_cell < 1) throw ValidationError("hits_per_cell must be >= 1");
  const GridSpec& spec = s_true.spec;
  const double c = opt.chunks;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto mos = [&](double clean) { return opt.noise_sigma > 0.0 ? clean + opt.noise_sigma * noise(rng) : clean; };

  TrainingSet ts;
  for (int hit = 0; hit < opt.hits_per_cell; ++hit) {
    for (int i = 0; i <= spec.n_steps; ++i) {
      const double p = i * spec.quality_step();
      for (int j = 1; j <= spec.n_steps; ++j) {
        Session s;
        s.chunks.assign(static_cast<std::size_t>(opt.chunks), Chunk{p, 0.0, 1.0, std::nullopt, std::nullopt});
        s.chunks[1].rebuffering_before = j * spec.rebuffer_step();
        s.mos = mos(p + s_true.values(i, j) / c);
        ts.rebuffer_sessions.push_back(std::move(s));
      }
      for (int j = 0; j <= spec.n_steps; ++j) {
        if (j == i) continue;
        const double q = j * spec.quality_step();
        Session s;
        s.chunks.assign(static_cast<std::size_t>(opt.chunks), Chunk{q, 0.0, 1.0, std::nullopt, std::nullopt});
        s.chunks[0].quality = p;
        s.mos = mos((p + (c - 1.0) * q + a_true.values(i, j)) / c);
        ts.adaptation_sessions.push_back(std::move(s));
      }
    }
  }
  return ts;
}

QoEGrid reference_rebuffering_grid(const GridSpec& spec) {
  spec.validate();
  QoEGrid g = QoEGrid::zeros(GridKind::Rebuffering, spec);
  const double scale = 10.0 / spec.rebuffer_max;
  for (int i = 0; i <= spec.n_steps; ++i) {
    const double p = i * spec.quality_step() * 100.0 / spec.quality_max;
    for (int j = 0; j <= spec.n_steps; ++j) {
      const double tau = j * spec.rebuffer_step() * scale;
      g.values(i, j) = -(2.0 + 0.03 * p) * tau * (1.0 - 0.02 * tau);
    }
  }
  return g;
}

QoEGrid reference_adaptation_grid(const GridSpec& spec) {
  spec.validate();
  QoEGrid g = QoEGrid::zeros(GridKind::Adaptation, spec);
  const double unit = 100.0 / spec.quality_max;
  for (int i = 0; i <= spec.n_steps; ++i) {
    const double p = i * spec.quality_step() * unit;
    for (int j = 0; j <= spec.n_steps; ++j) {
      const double dp = (j - i) * spec.quality_step() * unit;
      g.values(i, j) = (dp > 0.0 ? 0.3 : 0.6) * dp - 0.002 * p * std::abs(dp);
    }
  }
  return g;
}

namespace {

SweepPoint evaluate_point(const TrainingSet& ts, const GridSpec& spec, double lambda, const TrainOptions& base) {
  TrainOptions opt = base;
  opt.lambda = lambda;
  const auto t0 = std::chrono::steady_clock::now();
  const KsqiModel m = train_ksqi(ts, spec, opt);
  SweepPoint pt;
  pt.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  pt.lambda = lambda;
  pt.n_steps = spec.n_steps;
  const Eigen::VectorXd s = m.s_grid.to_vector(), a = m.a_grid.to_vector();
  pt.fidelity_s = fidelity_error(rebuffering_design(ts.rebuffer_sessions, spec), s);
  pt.fidelity_a = fidelity_error(adaptation_design(ts.adaptation_sessions, spec), a);
  pt.smoothness_s = smoothness_error(spec, s);
  pt.smoothness_a = smoothness_error(spec, a);
  const KsqiModel full{m.s_grid, m.a_grid, spec, lambda, all_rebuffering_constraints(), all_adaptation_constraints(),
                       m.provenance};
  try {
    full.verify(1e-6);
    pt.feasible = true;
  } catch (const ValidationError&) {
    pt.feasible = false;
  }
  return pt;
}

}  // namespace

std::vector<SweepPoint> lambda_sweep(const TrainingSet& ts, const GridSpec& spec, const std::vector<double>& lambdas,
                                     const TrainOptions& base) {
  if (lambdas.empty()) throw ValidationError("lambda sweep needs at least one value");
  std::vector<SweepPoint> out;
  for (double l : lambdas) out.push_back(evaluate_point(ts, spec, l, base));
  return out;
}

std::vector<SweepPoint> bin_sweep(const TrainingSet& ts, const GridSpec& base_spec, const std::vector<int>& n_values,
                                  double lambda, const TrainOptions& base) {
  if (n_values.empty()) throw ValidationError("bin sweep needs at least one grid size");
  std::vector<SweepPoint> out;
  for (int n : n_values) {
    GridSpec spec = base_spec;
    spec.n_steps = n;
    out.push_back(evaluate_point(ts, spec, lambda, base));
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream out;
  out << "lambda,n_steps,fidelity_s,fidelity_a,smoothness_s,smoothness_a,feasible,seconds\n";
  char buf[256];
  for (const SweepPoint& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%d,%.17g,%.17g,%.17g,%.17g,%d,%.6f\n", p.lambda, p.n_steps, p.fidelity_s,
                  p.fidelity_a, p.smoothness_s, p.smoothness_a, p.feasible ? 1 : 0, p.seconds);
    out << buf;
  }
  return out.str();
}

}  // namespace ksqi
