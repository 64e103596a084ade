#include "ksqi/predict.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "ksqi/error.hpp"

namespace ksqi {

namespace {

void check_quality(const GridSpec& spec, double p, const char* what) {
  if (!(p >= 0.0 && p <= spec.quality_max)) {
    throw ValidationError(std::string(what) + " " + std::to_string(p) + " outside [0, " +
                          std::to_string(spec.quality_max) + "]");
  }
}

// Cell origin and fractional offset of coordinate u in [0, n].
std::pair<int, double> locate(double u, int n) {
  const int k = std::min(static_cast<int>(std::floor(u)), n - 1);
  return {k, u - k};
}

}  // namespace

double interpolate_rebuffering(const QoEGrid& s, double p, double tau) {
  const GridSpec& spec = s.spec;
  check_quality(spec, p, "quality");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ValidationError("rebuffering duration must be finite and >= 0");
  const int n = spec.n_steps;
  const auto [i, fu] = locate(p / spec.quality_step(), n);
  auto column = [&, i = i, fu = fu](int j) { return (1.0 - fu) * s.values(i, j) + fu * s.values(i + 1, j); };
  const double v = tau / spec.rebuffer_step();
  if (v <= n) {
    const auto [j, fv] = locate(v, n);
    return (1.0 - fv) * column(j) + fv * column(j + 1);
  }
  const double last = column(n);
  return last + (v - n) * (last - column(n - 1));
}

double interpolate_adaptation(const QoEGrid& a, double p_prev, double p_cur) {
  const GridSpec& spec = a.spec;
  check_quality(spec, p_prev, "previous quality");
  check_quality(spec, p_cur, "current quality");
  const int n = spec.n_steps;
  const auto [i, x] = locate(p_prev / spec.quality_step(), n);
  const auto [j, y] = locate(p_cur / spec.quality_step(), n);
  const double a00 = a.values(i, j), a10 = a.values(i + 1, j), a01 = a.values(i, j + 1),
               a11 = a.values(i + 1, j + 1);
  if (y <= x) return a00 + x * (a10 - a00) + y * (a11 - a10);
  return a00 + y * (a01 - a00) + x * (a11 - a01);
}

double rebuffering_penalty(const KsqiModel& m, double p, double tau) { return interpolate_rebuffering(m.s_grid, p, tau); }

double adaptation_delta(const KsqiModel& m, double p_prev, double p_cur) {
  return interpolate_adaptation(m.a_grid, p_prev, p_cur);
}

double chunk_qoe(const KsqiModel& m, const Session& s, std::size_t t, const PredictOptions& opt) {
  if (t >= s.chunks.size()) {
    throw ValidationError("chunk index " + std::to_string(t) + " out of range for " +
                          std::to_string(s.chunks.size()) + " chunks");
  }
  const Chunk& c = s.chunks[t];
  const double prev = t == 0 ? opt.initial_expectation : s.chunks[t - 1].quality;
  double q = c.quality + rebuffering_penalty(m, prev, c.rebuffering_before);
  if (t > 0 || opt.first_chunk_adaptation) q += adaptation_delta(m, prev, c.quality);
  if (t == 0 && s.initial_buffering > 0.0) {
    q += opt.initial_buffering_discount * rebuffering_penalty(m, opt.initial_expectation, s.initial_buffering);
  }
  return q;
}

PredictionTrace session_qoe(const KsqiModel& m, const Session& s, const PredictOptions& opt) {
  const auto bad = validate_session(s);
  if (!bad.empty()) throw ValidationError(bad.front().describe());
  PredictionTrace tr;
  tr.per_chunk_q.reserve(s.chunks.size());
  tr.cumulative.reserve(s.chunks.size());
  for (std::size_t t = 0; t < s.chunks.size(); ++t) {
    const double q = chunk_qoe(m, s, t, opt);
    tr.per_chunk_q.push_back(q);
    const double k = static_cast<double>(t + 1);
    tr.cumulative.push_back(t == 0 ? q : ((k - 1.0) * tr.cumulative.back() + q) / k);
  }
  tr.final_score = tr.cumulative.empty() ? 0.0 : tr.cumulative.back();
  return tr;
}

std::string prediction_document(const KsqiModel& m, const PredictionTrace& trace, const PredictOptions& opt) {
  nlohmann::json doc;
  doc["per_chunk_q"] = trace.per_chunk_q;
  doc["cumulative"] = trace.cumulative;
  doc["final_score"] = trace.final_score;
  doc["model_hash"] = model_hash(m);
  doc["options"] = {{"initial_expectation", opt.initial_expectation},
                    {"initial_buffering_discount", opt.initial_buffering_discount},
                    {"first_chunk_adaptation", opt.first_chunk_adaptation}};
  return doc.dump(2) + "\n";
}

}  // namespace ksqi
