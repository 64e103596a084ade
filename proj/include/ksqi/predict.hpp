#pragma once

#include <string>
#include <vector>

#include "ksqi/model.hpp"
#include "ksqi/session.hpp"

namespace ksqi {

struct PredictOptions {
  double initial_expectation = kInitialExpectation;
  double initial_buffering_discount = kInitialBufferingDiscount;
  bool first_chunk_adaptation = true;  // apply A(P_-1, P_0) on the first chunk
};

struct PredictionTrace {
  std::vector<double> per_chunk_q;
  std::vector<double> cumulative;  // running mean of per_chunk_q
  double final_score = 0.0;
};

/// Bilinear on the S grid; beyond rebuffer_max, linear extrapolation in tau
/// from the last two tau bins.
double interpolate_rebuffering(const QoEGrid& s, double p, double tau);
/// Piecewise-linear on the (i, j) index square, each cell split along the
/// diagonal direction so that the zero diagonal is reproduced exactly.
double interpolate_adaptation(const QoEGrid& a, double p_prev, double p_cur);

double rebuffering_penalty(const KsqiModel& m, double p, double tau);
double adaptation_delta(const KsqiModel& m, double p_prev, double p_cur);

/// Q_t for 0-based chunk index t.
double chunk_qoe(const KsqiModel& m, const Session& s, std::size_t t, const PredictOptions& opt = {});
PredictionTrace session_qoe(const KsqiModel& m, const Session& s, const PredictOptions& opt = {});

/// JSON prediction document with per-chunk values, the running mean, the
/// final score, the model hash and the options used.
std::string prediction_document(const KsqiModel& m, const PredictionTrace& trace, const PredictOptions& opt);

}  // namespace ksqi
