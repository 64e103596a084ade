#include "ksqi/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "json.hpp"
#include "ksqi/model.hpp"

namespace ksqi {

namespace {

template <typename E>
E enum_from(std::string_view name, std::initializer_list<E> all, const char* what) {
  for (E e : all) {
    if (to_string(e) == name) return e;
  }
  throw ValidationError(std::string("unknown ") + what + " term '" + std::string(name) + "'");
}

bool has_presentation_coefficient(PresentationTerm t) {
  return t != PresentationTerm::None && t != PresentationTerm::IdentityVqa;
}

// Per-chunk value the presentation and switching terms are built on.
std::vector<double> chunk_units(const BaselineSpec& spec, const Session& s) {
  std::vector<double> u;
  u.reserve(s.chunks.size());
  for (std::size_t k = 0; k < s.chunks.size(); ++k) {
    const Chunk& c = s.chunks[k];
    switch (spec.presentation) {
      case PresentationTerm::LinearBitrate:
      case PresentationTerm::LogBitrate:
        if (!c.bitrate_kbps) {
          throw MissingFeatureError(spec.name + " needs bitrate_kbps, missing at chunk " + std::to_string(k));
        }
        u.push_back(*c.bitrate_kbps);
        break;
      case PresentationTerm::LinearQp:
        if (!c.qp) throw MissingFeatureError(spec.name + " needs qp, missing at chunk " + std::to_string(k));
        u.push_back(*c.qp);
        break;
      default:
        u.push_back(c.quality);
    }
  }
  return u;
}

double positive_log(double v, const BaselineSpec& spec) {
  if (!(v > 0.0)) throw ValidationError(spec.name + " takes the logarithm of a non-positive value");
  return std::log(v);
}

struct Design {
  Eigen::MatrixXd x;
  std::vector<std::string> names;
  Eigen::VectorXd target;
  Eigen::VectorXd tau;  // raw rebuffer feature, for the exponential form
};

double mean_quality(const Session& s) {
  double sum = 0.0;
  for (const Chunk& c : s.chunks) sum += c.quality;
  return sum / static_cast<double>(s.chunks.size());
}

double offset(const BaselineSpec& spec, const Session& s) {
  return spec.presentation == PresentationTerm::IdentityVqa ? mean_quality(s) : 0.0;
}

struct LeastSquares {
  Eigen::VectorXd beta;
  double sse = 0.0;
};

LeastSquares solve_ls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names,
                      const std::string& model) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) {
    std::string cols;
    Eigen::Index prev = 0;
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> partial(x.leftCols(k + 1));
      partial.setThreshold(1e-10);
      if (partial.rank() == prev) cols += (cols.empty() ? "" : ", ") + names[static_cast<std::size_t>(k)];
      prev = partial.rank();
    }
    throw ComputationError("rank-deficient design for " + model + ": column(s) " + cols +
                           " add no information beyond the earlier columns");
  }
  LeastSquares out;
  out.beta = qr.solve(y);
  out.sse = (x * out.beta - y).squaredNorm();
  return out;
}

}  // namespace

std::string to_string(PresentationTerm t) {
  switch (t) {
    case PresentationTerm::None: return "none";
    case PresentationTerm::LinearBitrate: return "linear_bitrate";
    case PresentationTerm::LogBitrate: return "log_bitrate";
    case PresentationTerm::LinearQp: return "linear_qp";
    case PresentationTerm::LinearVqa: return "linear_vqa";
    default: return "identity_vqa";
  }
}

std::string to_string(RebufferTerm t) {
  switch (t) {
    case RebufferTerm::Linear: return "linear";
    case RebufferTerm::Exponential: return "exponential";
    case RebufferTerm::Logarithmic: return "logarithmic";
    default: return "vqa_informed";
  }
}

std::string to_string(SwitchingTerm t) {
  switch (t) {
    case SwitchingTerm::None: return "none";
    case SwitchingTerm::Linear: return "linear";
    default: return "logarithmic";
  }
}

std::vector<std::string> BaselineSpec::coefficient_names() const {
  std::vector<std::string> out;
  if (rebuffer != RebufferTerm::Exponential) out.push_back("intercept");
  if (has_presentation_coefficient(presentation)) out.push_back("presentation");
  if (rebuffer == RebufferTerm::Exponential) {
    out.insert(out.end(), {"alpha", "beta", "gamma"});
  } else {
    out.push_back("rebuffer");
  }
  if (switching != SwitchingTerm::None) out.push_back("switching");
  return out;
}

std::vector<BaselineSpec> standard_baselines() {
  using P = PresentationTerm;
  using R = RebufferTerm;
  using S = SwitchingTerm;
  return {
      {"Mok2011", P::None, R::Linear, S::None},
      {"FTW", P::None, R::Exponential, S::None},
      {"Liu2012", P::LinearBitrate, R::Linear, S::None},
      {"Xue2014", P::LinearQp, R::Logarithmic, S::None},
      {"Yin2015", P::LinearBitrate, R::Linear, S::Linear},
      {"Spiteri2016", P::LogBitrate, R::Linear, S::Logarithmic},
      {"Bentaleb2016", P::LinearVqa, R::Linear, S::None},
      {"SQI", P::IdentityVqa, R::VqaInformed, S::None},
  };
}

BaselineSpec find_baseline(std::string_view name) {
  for (const BaselineSpec& b : standard_baselines()) {
    if (b.name == name) return b;
  }
  throw ValidationError("unknown baseline '" + std::string(name) + "'");
}

BaselineFeatures baseline_features(const BaselineSpec& spec, const Session& s) {
  if (s.chunks.empty()) throw ValidationError("session has no chunks");
  const std::vector<double> u = chunk_units(spec, s);
  BaselineFeatures f;
  double sum = 0.0;
  for (double v : u) sum += spec.presentation == PresentationTerm::LogBitrate ? positive_log(v, spec) : v;
  f.presentation = sum / static_cast<double>(u.size());

  double tau_total = s.initial_buffering, weighted = s.initial_buffering * kInitialExpectation / kQualityMax;
  for (std::size_t k = 0; k < s.chunks.size(); ++k) {
    const double tau = s.chunks[k].rebuffering_before;
    tau_total += tau;
    const double prev = k == 0 ? kInitialExpectation : s.chunks[k - 1].quality;
    weighted += prev / kQualityMax * tau;
  }
  switch (spec.rebuffer) {
    case RebufferTerm::Logarithmic: f.rebuffer = std::log1p(tau_total); break;
    case RebufferTerm::VqaInformed: f.rebuffer = weighted; break;
    default: f.rebuffer = tau_total;
  }

  for (std::size_t k = 1; k < u.size(); ++k) {
    if (spec.switching == SwitchingTerm::Linear) {
      f.switching += std::abs(u[k] - u[k - 1]);
    } else if (spec.switching == SwitchingTerm::Logarithmic) {
      f.switching += std::abs(positive_log(u[k], spec) - positive_log(u[k - 1], spec));
    }
  }
  return f;
}

double predict_baseline(const FittedBaseline& f, const Session& s) {
  const BaselineSpec& spec = f.spec;
  for (const std::string& name : spec.coefficient_names()) {
    if (!f.coefficients.count(name)) throw ValidationError(spec.name + " lacks coefficient " + name);
  }
  const BaselineFeatures x = baseline_features(spec, s);
  auto c = [&](const char* name) { return f.coefficients.at(name); };
  double score = offset(spec, s);
  if (has_presentation_coefficient(spec.presentation)) score += c("presentation") * x.presentation;
  if (spec.rebuffer == RebufferTerm::Exponential) {
    score += c("alpha") * std::exp(-c("beta") * x.rebuffer) + c("gamma");
  } else {
    score += c("intercept") + c("rebuffer") * x.rebuffer;
  }
  if (spec.switching != SwitchingTerm::None) score += c("switching") * x.switching;
  return score;
}

FittedBaseline fit_baseline(const BaselineSpec& spec, const Dataset& ds, std::uint64_t seed) {
  const std::size_t n = ds.sessions.size();
  if (n == 0) throw ValidationError("cannot fit " + spec.name + " on an empty dataset");
  const bool expo = spec.rebuffer == RebufferTerm::Exponential;
  const bool pres = has_presentation_coefficient(spec.presentation);
  const bool sw = spec.switching != SwitchingTerm::None;

  // Linear columns in order: [intercept/gamma, presentation?, rebuffer (linear forms), switching?].
  std::vector<std::string> names{expo ? "gamma" : "intercept"};
  if (pres) names.push_back("presentation");
  if (!expo) names.push_back("rebuffer");
  if (sw) names.push_back("switching");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(names.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n)), tau(static_cast<Eigen::Index>(n));
  for (std::size_t m = 0; m < n; ++m) {
    const Session& s = ds.sessions[m];
    if (!s.mos) throw ValidationError("session " + std::to_string(m) + " has no mos");
    const BaselineFeatures f = baseline_features(spec, s);
    const auto row = static_cast<Eigen::Index>(m);
    Eigen::Index col = 0;
    x(row, col++) = 1.0;
    if (pres) x(row, col++) = f.presentation;
    if (!expo) x(row, col++) = f.rebuffer;
    if (sw) x(row, col++) = f.switching;
    y[row] = *s.mos - offset(spec, s);
    tau[row] = f.rebuffer;
  }

  FittedBaseline out;
  out.spec = spec;
  out.fit.sessions = n;
  out.fit.zero_model_mse = y.squaredNorm() / static_cast<double>(n);
  if (!expo) {
    const LeastSquares ls = solve_ls(x, y, names, spec.name);
    for (std::size_t k = 0; k < names.size(); ++k) out.coefficients[names[k]] = ls.beta[static_cast<Eigen::Index>(k)];
    out.fit.mse = ls.sse / static_cast<double>(n);
    return out;
  }

  // Variable projection: for each beta the remaining coefficients are linear.
  std::vector<std::string> vp_names = names;
  vp_names.insert(vp_names.begin(), "alpha");
  auto project = [&](double beta) {
    Eigen::MatrixXd xb(x.rows(), x.cols() + 1);
    xb.col(0) = (-beta * tau.array()).exp().matrix();
    xb.rightCols(x.cols()) = x;
    return solve_ls(xb, y, vp_names, spec.name);
  };
  std::vector<double> starts;
  for (int k = 0; k <= 24; ++k) starts.push_back(std::pow(10.0, -3.0 + 4.0 * k / 24.0));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> expo_draw(-3.0, 1.0);
  for (int k = 0; k < 8; ++k) starts.push_back(std::pow(10.0, expo_draw(rng)));
  std::sort(starts.begin(), starts.end());

  double best_beta = starts.front(), best_sse = std::numeric_limits<double>::infinity();
  for (double b : starts) {
    const double sse = project(b).sse;
    if (sse < best_sse) {
      best_sse = sse;
      best_beta = b;
    }
  }
  // Refine by bisection on the sign of dSSE/dbeta = 2 sum r * alpha * tau * exp(-beta tau)
  // (envelope theorem: the linear coefficients are optimal at every beta).
  auto slope = [&](double beta) {
    const LeastSquares ls = project(beta);
    Eigen::MatrixXd xb(x.rows(), x.cols() + 1);
    xb.col(0) = (-beta * tau.array()).exp().matrix();
    xb.rightCols(x.cols()) = x;
    const Eigen::VectorXd r = y - xb * ls.beta;
    return 2.0 * ls.beta[0] * (r.array() * tau.array() * xb.col(0).array()).sum();
  };
  double lo = std::log(best_beta) - 0.5, hi = std::log(best_beta) + 0.5;
  double beta = best_beta;
  LeastSquares ls = project(best_beta);
  if (slope(std::exp(lo)) < 0.0 && slope(std::exp(hi)) > 0.0) {
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      (slope(std::exp(mid)) < 0.0 ? lo : hi) = mid;
    }
    const LeastSquares refined = project(std::exp(0.5 * (lo + hi)));
    if (refined.sse <= ls.sse) {
      beta = std::exp(0.5 * (lo + hi));
      ls = refined;
    }
  }
  out.coefficients["beta"] = beta;
  for (std::size_t k = 0; k < vp_names.size(); ++k) out.coefficients[vp_names[k]] = ls.beta[static_cast<Eigen::Index>(k)];
  out.fit.mse = ls.sse / static_cast<double>(n);
  return out;
}

double sqi_baseline(const Session& s, double rebuffer_coefficient) {
  const auto bad = validate_session(s);
  if (!bad.empty()) throw ValidationError(bad.front().describe());
  FittedBaseline f;
  f.spec = find_baseline("SQI");
  f.coefficients = {{"intercept", 0.0}, {"rebuffer", rebuffer_coefficient}};
  return predict_baseline(f, s);
}

std::string serialize_registry(const std::vector<FittedBaseline>& models) {
  nlohmann::json doc;
  doc["format"] = "ksqi-baselines";
  doc["version"] = 1;
  doc["models"] = nlohmann::json::array();
  for (const FittedBaseline& f : models) {
    doc["models"].push_back({{"name", f.spec.name},
                             {"presentation", to_string(f.spec.presentation)},
                             {"rebuffer", to_string(f.spec.rebuffer)},
                             {"switching", to_string(f.spec.switching)},
                             {"coefficients", f.coefficients},
                             {"fit", {{"sessions", f.fit.sessions}, {"mse", f.fit.mse}, {"zero_model_mse", f.fit.zero_model_mse}}}});
  }
  return doc.dump(2) + "\n";
}

std::vector<FittedBaseline> parse_registry(std::string_view text) {
  using P = PresentationTerm;
  using R = RebufferTerm;
  using S = SwitchingTerm;
  std::vector<FittedBaseline> out;
  try {
    const auto doc = nlohmann::json::parse(text.begin(), text.end());
    if (doc.value("format", "") != "ksqi-baselines") throw ParseError("not a baseline registry", 0, "format");
    if (doc.value("version", 0) != 1) throw ValidationError("unsupported registry version");
    for (const auto& m : doc.at("models")) {
      FittedBaseline f;
      f.spec.name = m.at("name").get<std::string>();
      f.spec.presentation = enum_from(m.at("presentation").get<std::string>(),
                                      {P::None, P::LinearBitrate, P::LogBitrate, P::LinearQp, P::LinearVqa, P::IdentityVqa},
                                      "presentation");
      f.spec.rebuffer = enum_from(m.at("rebuffer").get<std::string>(),
                                  {R::Linear, R::Exponential, R::Logarithmic, R::VqaInformed}, "rebuffer");
      f.spec.switching =
          enum_from(m.at("switching").get<std::string>(), {S::None, S::Linear, S::Logarithmic}, "switching");
      f.coefficients = m.at("coefficients").get<std::map<std::string, double>>();
      for (const std::string& name : f.spec.coefficient_names()) {
        if (!f.coefficients.count(name)) throw ValidationError(f.spec.name + " lacks coefficient " + name);
      }
      if (m.contains("fit")) {
        f.fit.sessions = m["fit"].value("sessions", std::size_t{0});
        f.fit.mse = m["fit"].value("mse", 0.0);
        f.fit.zero_model_mse = m["fit"].value("zero_model_mse", 0.0);
      }
      out.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("corrupted baseline registry: ") + e.what(), 0, "");
  }
  return out;
}

}  // namespace ksqi
