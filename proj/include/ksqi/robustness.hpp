#pragma once

// Synthetic training data drawn from known grids, and the lambda / bin-count
// sweeps run on top of it.

#include <cstdint>
#include <string>
#include <vector>

#include "ksqi/train.hpp"

namespace ksqi {

struct SyntheticOptions {
  int hits_per_cell = 1;     // sessions per off-anchor cell
  int chunks = 2;            // chunks per session, >= 2
  double noise_sigma = 0.0;  // Gaussian noise added to MOS
  std::uint64_t seed = 1;
};

/// One rebuffering session per (cell, hit) with quality i*P/N held constant
/// and a stall of j*tau_max/N before chunk 1; one adaptation session per
/// (cell, hit) switching from bin i to bin j at chunk 1. MOS is the exact
/// decomposition under `s_true` / `a_true` plus noise.
TrainingSet synthesize_training_set(const QoEGrid& s_true, const QoEGrid& a_true, const SyntheticOptions& opt);

/// Smooth feasible shapes on an arbitrary spec, used by demos and sweeps.
QoEGrid reference_rebuffering_grid(const GridSpec& spec);
QoEGrid reference_adaptation_grid(const GridSpec& spec);

struct SweepPoint {
  double lambda = 0.0;
  int n_steps = 0;
  double fidelity_s = 0.0;
  double fidelity_a = 0.0;
  double smoothness_s = 0.0;
  double smoothness_a = 0.0;
  bool feasible = false;
  double seconds = 0.0;
};

std::vector<SweepPoint> lambda_sweep(const TrainingSet& ts, const GridSpec& spec, const std::vector<double>& lambdas,
                                     const TrainOptions& base = {});
std::vector<SweepPoint> bin_sweep(const TrainingSet& ts, const GridSpec& base_spec, const std::vector<int>& n_values,
                                  double lambda, const TrainOptions& base = {});
std::string sweep_csv(const std::vector<SweepPoint>& points);

}  // namespace ksqi
