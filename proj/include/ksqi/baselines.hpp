#pragma once

// Classic parametric QoE models: additive presentation, rebuffering and
// switching terms with least-squares coefficients.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ksqi/error.hpp"
#include "ksqi/session.hpp"

namespace ksqi {

enum class PresentationTerm { None, LinearBitrate, LogBitrate, LinearQp, LinearVqa, IdentityVqa };
enum class RebufferTerm { Linear, Exponential, Logarithmic, VqaInformed };
enum class SwitchingTerm { None, Linear, Logarithmic };

std::string to_string(PresentationTerm t);
std::string to_string(RebufferTerm t);
std::string to_string(SwitchingTerm t);

struct BaselineSpec {
  std::string name;
  PresentationTerm presentation = PresentationTerm::None;
  RebufferTerm rebuffer = RebufferTerm::Linear;
  SwitchingTerm switching = SwitchingTerm::None;

  /// Coefficient names in canonical order.
  std::vector<std::string> coefficient_names() const;
  bool operator==(const BaselineSpec&) const = default;
};

/// Mok2011, FTW, Liu2012, Xue2014, Yin2015, Spiteri2016, Bentaleb2016, SQI.
std::vector<BaselineSpec> standard_baselines();
BaselineSpec find_baseline(std::string_view name);

/// Raised when a session lacks the per-chunk field a spec needs.
class MissingFeatureError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Session-level inputs after the per-term transforms, e.g. mean log bitrate
/// for LogBitrate or log(1 + tau_total) for Logarithmic rebuffering.
struct BaselineFeatures {
  double presentation = 0.0;
  double rebuffer = 0.0;  // tau_total for Exponential (transform applied in the model)
  double switching = 0.0;
};

BaselineFeatures baseline_features(const BaselineSpec& spec, const Session& s);

struct FitReport {
  std::size_t sessions = 0;
  double mse = 0.0;
  double zero_model_mse = 0.0;
};

struct FittedBaseline {
  BaselineSpec spec;
  std::map<std::string, double> coefficients;
  FitReport fit;
};

double predict_baseline(const FittedBaseline& f, const Session& s);

/// Closed-form least squares for linear-in-parameter specs; the exponential
/// rebuffering form is fitted by variable projection over beta with a seeded
/// multi-start. Rank-deficient designs raise ComputationError naming columns.
FittedBaseline fit_baseline(const BaselineSpec& spec, const Dataset& ds, std::uint64_t seed = 1);

/// Quality-proportional rebuffering penalty per second at full quality used
/// when an SQI model has not been fitted.
inline constexpr double kSqiDefaultPenalty = -4.0;
/// Mean presentation quality plus rebuffer coefficient times the sum over
/// stalls of (P_prev / P) * tau, initial buffering included with P_prev = 80.
double sqi_baseline(const Session& s, double rebuffer_coefficient = kSqiDefaultPenalty);

std::string serialize_registry(const std::vector<FittedBaseline>& models);
std::vector<FittedBaseline> parse_registry(std::string_view text);

}  // namespace ksqi
