#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include "ksqi/grid.hpp"
#include "ksqi/metrics.hpp"
#include "ksqi/predict.hpp"
#include "ksqi/qp.hpp"
#include "ksqi/ranking.hpp"
#include "ksqi/robustness.hpp"
#include "ksqi/session.hpp"
#include "ksqi/synth.hpp"
#include "ksqi/train.hpp"
#include "support/qp_oracles.hpp"
#include "support/truth_grids.hpp"

using namespace ksqi;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  failures += !ok;
}

template <typename F>
void criterion(const std::string& name, F&& body) {
  std::ostringstream detail;
  bool ok = false;
  try {
    ok = body(detail);
  } catch (const std::exception& e) {
    detail << "threw " << e.what();
  }
  report(name, ok, detail.str());
}

double max_abs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

bool feasible_on_full_systems(const KsqiModel& m, const GridSpec& spec) {
  return check_feasible(m.s_grid, build_rebuffering_constraints(spec, all_rebuffering_constraints()), 1e-6).empty() &&
         check_feasible(m.a_grid, build_adaptation_constraints(spec, all_adaptation_constraints()), 1e-6).empty();
}

std::size_t s3_pairs(int n) {
  std::size_t count = 0;
  for (int j1 = 2; j1 <= n + 1; ++j1) {
    for (int j2 = j1; j2 <= n + 1; ++j2) count += (j1 + j2 <= n + 2);
  }
  return count;
}

testing::DenseQp isotonic_qp(const std::vector<double>& y) {
  const int n = static_cast<int>(y.size());
  testing::DenseQp qp;
  qp.h = 2.0 * Eigen::MatrixXd::Identity(n, n);
  qp.q = -2.0 * Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  qp.g = Eigen::MatrixXd::Zero(n - 1, n);
  for (int k = 0; k + 1 < n; ++k) {
    qp.g(k, k) = 1.0;
    qp.g(k, k + 1) = -1.0;
  }
  qp.hb = Eigen::VectorXd::Zero(n - 1);
  qp.b.resize(0, n);
  qp.c.resize(0);
  return qp;
}

BitrateLadder ladder_b3_d4(std::uint64_t seed) {
  BitrateLadder l;
  l.segment_duration = 2.0;
  const double kbps[3] = {600.0, 1500.0, 3000.0}, quality[3] = {45.0, 68.0, 86.0};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(0.85, 1.15);
  for (int r = 0; r < 3; ++r) {
    Representation rep;
    for (int s = 0; s < 4; ++s) {
      rep.segment_bytes.push_back(std::round(kbps[r] * 250.0 * jitter(rng)));
      rep.quality.push_back(quality[r] + 4.0 * (jitter(rng) - 1.0));
    }
    l.representations.push_back(rep);
  }
  return l;
}

NetworkTrace random_trace(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.3e6, 3.5e6);
  std::vector<std::pair<double, double>> samples;
  for (int k = 0; k < 200; ++k) samples.emplace_back(0.5 * k, u(rng));
  return NetworkTrace(samples);
}

}  // namespace

int main() {
  const GridSpec spec;
  const QoEGrid s_true = testing::truth_rebuffering(spec), a_true = testing::truth_adaptation(spec);

  criterion("constraint feasibility", [&](std::ostream& d) {
    bool ok = true;
    double worst = 0.0;
    int trained = 0;
    for (double lambda : {1e-6, 1.0, 1e3}) {
      for (double sigma : {0.0, 5.0, 20.0}) {
        SyntheticOptions so;
        so.noise_sigma = sigma;
        so.seed = 11 + static_cast<std::uint64_t>(trained);
        TrainOptions opt;
        opt.lambda = lambda;
        const auto t0 = Clock::now();
        const KsqiModel m = train_ksqi(synthesize_training_set(s_true, a_true, so), spec, opt);
        const double t = seconds_since(t0);
        worst = std::max(worst, t);
        ok = ok && feasible_on_full_systems(m, spec) && t < 10.0;
        ++trained;
      }
    }
    d << trained << " models at N=10 feasible at tol 1e-6, slowest " << worst << " s";
    return ok;
  });

  criterion("constraint counts", [&](std::ostream& d) {
    bool ok = true;
    for (int n = 2; n <= 10; ++n) {
      const auto nn = static_cast<std::size_t>(n);
      const GridSpec g{n, 100.0, 10.0};
      const ConstraintSystem s = build_rebuffering_constraints(g, all_rebuffering_constraints());
      const ConstraintSystem a = build_adaptation_constraints(g, all_adaptation_constraints());
      ok = ok && s.count(RowLabel::ZeroAnchor) == nn + 1 && s.count(RowLabel::S1) == (nn + 1) * nn &&
           s.count(RowLabel::S2) == nn * (nn + 1) && s.count(RowLabel::S3) == (nn + 1) * s3_pairs(n) &&
           s.count(RowLabel::S4) == nn * (nn + 1) && a.count(RowLabel::ZeroAnchor) == nn + 1 &&
           a.count(RowLabel::A1A2) == (nn + 1) * nn && a.count(RowLabel::A3) == nn * nn &&
           a.count(RowLabel::A4) == nn * (nn + 1) / 2;
    }
    d << "N = 2..10, all families";
    return ok;
  });

  criterion("QP solver oracles", [&](std::ostream& d) {
    std::mt19937_64 rng(31);
    bool ok = true;
    double worst_gap = -std::numeric_limits<double>::infinity(), worst_kkt = 0.0, worst_pava = 0.0;
    const int instances = 20;
    for (int trial = 0; trial < instances; ++trial) {
      const int n = 2 + trial % 8;
      const testing::DenseQp qp = testing::random_qp(rng, n, 2 + trial % 7, trial % 3 == 0 ? 1 : 0);
      const QpProblem p = qp.to_problem();
      const SolverReport r = solve_qp(p);
      const double sampled = testing::best_random_feasible(qp, 1000000, 500 + static_cast<std::uint64_t>(trial), 5.0);
      worst_gap = std::max(worst_gap, qp.objective(r.solution) - sampled);
      const KktResiduals k = kkt_residuals(p, r.solution, r.ineq_duals, r.eq_duals);
      worst_kkt = std::max({worst_kkt, k.primal, k.dual, k.complementarity});
      ok = ok && r.status == SolveStatus::Optimal;
    }
    std::normal_distribution<double> gauss(0.0, 2.0);
    for (int trial = 0; trial < instances; ++trial) {
      std::vector<double> y(9);
      for (double& v : y) v = gauss(rng);
      const SolverReport r = solve_qp(isotonic_qp(y).to_problem());
      const auto ref = testing::pava_nondecreasing(y);
      for (int k = 0; k < 9; ++k) worst_pava = std::max(worst_pava, std::abs(r.solution[k] - ref[static_cast<std::size_t>(k)]));
      ok = ok && r.status == SolveStatus::Optimal;
    }
    d << instances << " random + " << instances << " isotonic; objective - best sampled <= " << worst_gap
      << ", max KKT residual " << worst_kkt << ", max PAVA deviation " << worst_pava;
    return ok && worst_gap <= 1e-6 && worst_kkt <= 1e-8 && worst_pava <= 1e-9;
  });

  criterion("synthetic recovery", [&](std::ostream& d) {
    const auto t0 = Clock::now();
    TrainOptions exact;
    exact.lambda = 1e-6;
    const KsqiModel clean = train_ksqi(synthesize_training_set(s_true, a_true, SyntheticOptions{}), spec, exact);
    const double err = std::max(max_abs(clean.s_grid.values, s_true.values), max_abs(clean.a_grid.values, a_true.values));

    SyntheticOptions noisy;
    noisy.noise_sigma = 2.0;
    noisy.hits_per_cell = 20;
    noisy.seed = 41;
    const TrainingSet train = synthesize_training_set(s_true, a_true, noisy);
    noisy.seed = 42;
    const TrainingSet held_out = synthesize_training_set(s_true, a_true, noisy);
    std::vector<double> cv_grid;
    for (double l = 1e-2; l <= 1e4; l *= 10.0) cv_grid.push_back(l);
    TrainOptions opt;
    opt.lambda = cross_validate_lambda(train, spec, cv_grid, 0.8, 43).best_lambda;
    const KsqiModel m = train_ksqi(train, spec, opt);
    std::vector<double> pred, mos;
    for (const auto* group : {&held_out.rebuffer_sessions, &held_out.adaptation_sessions}) {
      for (const Session& s : *group) {
        pred.push_back(session_qoe(m, s).final_score);
        mos.push_back(*s.mos);
      }
    }
    const double r = plcc(pred, mos), t = seconds_since(t0);
    d << "noiseless max error " << err << " at lambda 1e-6; sigma 2, 20 hits/cell, lambda " << opt.lambda
      << ": held-out PLCC " << r << " on " << pred.size() << " sessions; " << t << " s";
    return err <= 1e-3 && r >= 0.95 && t < 120.0;
  });

  criterion("DP optimality", [&](std::ostream& d) {
    const KsqiModel m = train_ksqi(synthesize_training_set(s_true, a_true, SyntheticOptions{}), spec);
    const KsqiObjective ksqi(m);
    const BitrateLinearObjective linear;
    const PlayerConfig cfg;
    int matched = 0, total = 0;
    for (std::uint64_t t = 0; t < 5; ++t) {
      const BitrateLadder ladder = ladder_b3_d4(60 + t);
      const NetworkTrace trace = random_trace(70 + t);
      for (const QoeObjective* q : {static_cast<const QoeObjective*>(&ksqi), static_cast<const QoeObjective*>(&linear)}) {
        const SynthesisResult dp = dp_optimal_session(ladder, trace, cfg, *q);
        const SynthesisResult bf = brute_force_optimal(ladder, trace, cfg, *q);
        matched += dp.choices == bf.choices && dp.score == bf.score;
        ++total;
      }
    }
    d << matched << "/" << total << " (5 traces x 2 objectives, b=3, d=4) identical choices and score";
    return matched == total;
  });

  criterion("ranking recovery", [&](std::ostream& d) {
    const Eigen::Vector4d truth(0.6, 0.2, -0.2, -0.6);
    const std::vector<std::string> names{"a", "b", "c", "d"};
    const RankingResult exact = mle_ranking(pairwise_from_probabilities(names, preference_probability(truth)));
    const double err = (exact.mu - truth).cwiseAbs().maxCoeff();
    int preserved = 0;
    for (std::uint64_t rep = 0; rep < 100; ++rep) {
      std::mt19937_64 rng(2000 + rep);
      Eigen::MatrixXi wins = Eigen::MatrixXi::Zero(4, 4), n = Eigen::MatrixXi::Constant(4, 4, 100);
      for (int i = 0; i < 4; ++i) {
        for (int j = i + 1; j < 4; ++j) {
          std::binomial_distribution<int> b(100, normal_cdf(truth[i] - truth[j]));
          wins(i, j) = b(rng);
          wins(j, i) = 100 - wins(i, j);
        }
      }
      const RankingResult rr = mle_ranking(pairwise_from_counts(names, wins, n));
      preserved += rr.mu[0] > rr.mu[1] && rr.mu[1] > rr.mu[2] && rr.mu[2] > rr.mu[3];
    }
    d << "exact-probability error " << err << "; order preserved in " << preserved << "/100";
    return err <= 1e-4 && preserved >= 95;
  });

  criterion("metric fixtures", [&](std::ostream& d) {
    using V = std::vector<double>;
    const V x{1, 2, 3}, y{2, 4, 6}, r{3, 2, 1};
    const double k4 = krcc(V{1, 2, 3, 4}, V{1, 3, 2, 4});
    bool ok = plcc(x, y) == 1.0 && srcc(x, y) == 1.0 && krcc(x, y) == 1.0 && plcc(x, r) == -1.0 &&
              srcc(x, r) == -1.0 && krcc(x, r) == -1.0 && k4 == 2.0 / 3.0;
    std::mt19937_64 rng(56);
    std::normal_distribution<double> g(0.0, 1.0);
    V low(200), high(200);
    for (std::size_t k = 0; k < 200; ++k) {
      low[k] = g(rng);
      high[k] = 5.0 * g(rng);
    }
    const SignificanceMatrix m = significance_matrix({"low", "high"}, {low, high});
    ok = ok && m.cells[0][1] == Significance::Better && m.cells[1][0] == Significance::Worse;
    d << "KRCC 4-point " << k4 << ", variance 1 vs 25: " << (m.cells[0][1] == Significance::Better ? "better" : "not better");
    return ok;
  });

  criterion("lambda and bin sweeps", [&](std::ostream& d) {
    SyntheticOptions so;
    so.noise_sigma = 6.0;
    so.seed = 4;
    const TrainingSet ts = synthesize_training_set(s_true, a_true, so);
    const auto lam = lambda_sweep(ts, spec, {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4});
    bool ok = true;
    for (std::size_t k = 1; k < lam.size(); ++k) {
      ok = ok && lam[k].smoothness_s <= lam[k - 1].smoothness_s && lam[k].smoothness_a <= lam[k - 1].smoothness_a &&
           lam[k].feasible;
    }
    const auto bins = bin_sweep(ts, spec, {5, 10, 20}, 1.0);
    for (const SweepPoint& p : bins) ok = ok && p.feasible;
    d << lam.size() << " lambdas with non-increasing smoothness, " << bins.size() << " bin sizes feasible";
    return ok;
  });

  {
    const char* dir = std::getenv("KSQI_BENCHMARK_DIR");
    if (!dir || !fs::is_directory(dir) || !fs::exists(fs::path(dir) / "model.json")) {
      std::cout << "SKIPPED benchmark reproduction: set KSQI_BENCHMARK_DIR to a directory with model.json and the "
                   "four labeled dataset files"
                << std::endl;
    } else {
      criterion("benchmark reproduction", [&](std::ostream& d) {
        const KsqiModel m = deserialize_model(read_text_file((fs::path(dir) / "model.json").string()));
        std::vector<std::string> names;
        std::vector<std::vector<double>> mos, pred;
        for (const auto& entry : fs::directory_iterator(dir)) {
          if (entry.path().filename() == "model.json" || entry.path().extension() != ".json") continue;
          const Dataset ds = rescale_mos(load_dataset_file(entry.path().string()), 0.0, kQualityMax);
          names.push_back(ds.name);
          std::vector<double> mm, pp;
          for (const Session& s : ds.sessions) {
            mm.push_back(*s.mos);
            pp.push_back(session_qoe(m, s).final_score);
          }
          mos.push_back(mm);
          pred.push_back(pp);
        }
        const EvaluationReport r = evaluate_models({"KSQI"}, names, {pred}, mos, 1);
        const double w = r.weighted_average(0, Metric::Plcc);
        d << names.size() << " datasets, weighted PLCC " << w;
        return names.size() == 4 && std::abs(w - 0.769) <= 0.02;
      });
    }
  }

  return failures == 0 ? 0 : 1;
}
