#include <random>

#include <benchmark/benchmark.h>

#include "ksqi/grid.hpp"
#include "ksqi/parallel.hpp"
#include "ksqi/synth.hpp"

using namespace ksqi;

namespace {

Execution mode(const benchmark::State& state) { return state.range(0) ? Execution::Parallel : Execution::Serial; }

void affine_residual(benchmark::State& state) {
  const GridSpec spec{static_cast<int>(state.range(1)), 100.0, 10.0};
  const ConstraintSystem cs = build_rebuffering_constraints(spec, all_rebuffering_constraints());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Eigen::VectorXd x(spec.side() * spec.side()), out;
  for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = g(rng);
  for (auto _ : state) {
    kernels::affine_residual(mode(state), cs.ineq_matrix, x, cs.ineq_bound, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["rows"] = static_cast<double>(cs.ineq_matrix.rows());
}

void kendall_pairs(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<double> x(static_cast<std::size_t>(state.range(1))), y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    x[k] = std::round(g(rng) * 20.0);
    y[k] = x[k] + g(rng) * 10.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(kernels::kendall_pairs(mode(state), x, y));
}

void dp_expansion(benchmark::State& state) {
  BitrateLadder ladder;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> jitter(0.85, 1.15), tput(0.3e6, 3.5e6);
  const double kbps[3] = {600.0, 1500.0, 3000.0}, quality[3] = {45.0, 68.0, 86.0};
  for (int r = 0; r < 3; ++r) {
    Representation rep;
    for (int s = 0; s < state.range(1); ++s) {
      rep.segment_bytes.push_back(std::round(kbps[r] * 250.0 * jitter(rng)));
      rep.quality.push_back(quality[r]);
    }
    ladder.representations.push_back(rep);
  }
  std::vector<std::pair<double, double>> samples;
  for (int k = 0; k < 400; ++k) samples.emplace_back(0.5 * k, tput(rng));
  const NetworkTrace trace(samples);
  const BitrateLinearObjective qoe;
  for (auto _ : state) benchmark::DoNotOptimize(dp_optimal_session(ladder, trace, PlayerConfig{}, qoe, mode(state)));
}

}  // namespace

BENCHMARK(affine_residual)->ArgsProduct({{0, 1}, {10, 40}});
BENCHMARK(kendall_pairs)->ArgsProduct({{0, 1}, {1000, 5000}})->Unit(benchmark::kMillisecond);
BENCHMARK(dp_expansion)->ArgsProduct({{0, 1}, {10, 20}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
