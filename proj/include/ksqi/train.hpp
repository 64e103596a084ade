#pragma once

// Fidelity + smoothness objectives for the S and A grids, and training of a
// KsqiModel by solving the two constrained least-squares problems.

#include <cstdint>
#include <vector>

#include "ksqi/error.hpp"
#include "ksqi/model.hpp"
#include "ksqi/qp.hpp"
#include "ksqi/session.hpp"

namespace ksqi {

struct TrainingSet {
  std::vector<Session> rebuffer_sessions;    // stalls, no switches
  std::vector<Session> adaptation_sessions;  // switches, no stalls, no startup delay
};

struct PartitionReport {
  std::size_t rebuffer = 0;
  std::size_t adaptation = 0;
  std::size_t dropped_mixed = 0;       // both stalls and switches
  std::size_t dropped_eventless = 0;   // neither
  std::size_t dropped_unlabeled = 0;   // no MOS
};

/// Routes each labeled session to the partition matching its event type.
TrainingSet partition_sessions(const std::vector<Session>& sessions, PartitionReport* report = nullptr);

/// Throws ValidationError naming the first session that breaks its partition's invariant.
void validate_training_set(const TrainingSet& ts);

struct FidelityDesign {
  SparseRowMatrix weight_matrix;  // M x (N+1)^2
  Eigen::VectorXd target_vector;  // MOS minus mean presentation quality
};

FidelityDesign rebuffering_design(const std::vector<Session>& sessions, const GridSpec& spec);
FidelityDesign adaptation_design(const std::vector<Session>& sessions, const GridSpec& spec);

/// Interior second differences along both axes; 2(N-1)(N+1) rows.
SparseRowMatrix second_difference_operator(const GridSpec& spec);

/// Mean squared fidelity error |W x - y|^2 / M.
double fidelity_error(const FidelityDesign& d, const Eigen::VectorXd& x);
/// |D x|^2 / (N+1)^2.
double smoothness_error(const GridSpec& spec, const Eigen::VectorXd& x);

QpProblem assemble_objective(const FidelityDesign& d, const GridSpec& spec, double lambda,
                             const ConstraintSystem& constraints);
QpProblem assemble_rebuffering_objective(const TrainingSet& ts, const GridSpec& spec, double lambda,
                                         const ConstraintSet& enabled = all_rebuffering_constraints());
QpProblem assemble_adaptation_objective(const TrainingSet& ts, const GridSpec& spec, double lambda,
                                        const ConstraintSet& enabled = all_adaptation_constraints());

struct TrainOptions {
  double lambda = 1.0;
  ConstraintSet s_constraints = all_rebuffering_constraints();
  ConstraintSet a_constraints = all_adaptation_constraints();
  SolverSettings solver;
  double feasibility_tol = 1e-6;
  bool concurrent = true;  // solve S and A at the same time
  std::string dataset;
  std::uint64_t seed = 0;
};

/// Raised when either QP ends without an optimal status.
class TrainingError : public ComputationError {
 public:
  TrainingError(const std::string& message, GridKind kind, SolverReport report)
      : ComputationError(message), kind_(kind), report_(std::move(report)) {}
  GridKind grid() const noexcept { return kind_; }
  const SolverReport& report() const noexcept { return report_; }

 private:
  GridKind kind_;
  SolverReport report_;
};

KsqiModel train_ksqi(const TrainingSet& ts, const GridSpec& spec, const TrainOptions& options = {});

struct LambdaSelection {
  double best_lambda = 1.0;
  std::vector<double> candidates;
  std::vector<double> validation_loss;  // pooled MSE over both validation partitions
};

/// Seeded split of each partition; the first round(split_fraction * M) sessions
/// of a shuffled order train, the rest validate. Ties go to the larger lambda.
LambdaSelection cross_validate_lambda(const TrainingSet& ts, const GridSpec& spec, const std::vector<double>& candidates,
                                      double split_fraction, std::uint64_t seed, const TrainOptions& base = {});

}  // namespace ksqi
