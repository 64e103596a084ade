#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "ksqi/grid.hpp"

namespace ksqi {

/// Quality the viewer is assumed to expect before the first chunk.
inline constexpr double kInitialExpectation = 80.0;
/// Weight applied to the startup-delay penalty relative to a mid-session stall.
inline constexpr double kInitialBufferingDiscount = 1.0 / 9.0;

inline constexpr int kModelFormatVersion = 1;

struct ModelProvenance {
  std::string dataset;
  std::uint64_t seed = 0;
  bool mos_rescaled = true;
  std::size_t rebuffer_sessions = 0;
  std::size_t adaptation_sessions = 0;
  double rebuffer_primal_residual = 0.0;
  double rebuffer_dual_residual = 0.0;
  int rebuffer_iterations = 0;
  double adaptation_primal_residual = 0.0;
  double adaptation_dual_residual = 0.0;
  int adaptation_iterations = 0;

  bool operator==(const ModelProvenance&) const = default;
};

struct KsqiModel {
  QoEGrid s_grid;  // Rebuffering
  QoEGrid a_grid;  // Adaptation
  GridSpec spec;
  double lambda = 1.0;
  ConstraintSet s_constraints = all_rebuffering_constraints();
  ConstraintSet a_constraints = all_adaptation_constraints();
  ModelProvenance provenance;

  /// Throws ValidationError if either grid violates its constraint system
  /// (the subsets the model was trained with) beyond `tol`.
  void verify(double tol = 1e-6) const;
};

std::string serialize_model(const KsqiModel& m);
/// Throws ParseError on corrupted documents, ValidationError on unsupported
/// versions or infeasible grids.
KsqiModel deserialize_model(std::string_view text);

/// FNV-1a 64 of the serialized model, as 16 hex digits.
std::string model_hash(const KsqiModel& m);

}  // namespace ksqi
