#pragma once

// Trace-driven player simulation and the offline-optimal session search:
// replay a throughput trace through a buffer model and pick, with full future
// knowledge, the representation sequence that maximizes a QoE objective.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ksqi/baselines.hpp"
#include "ksqi/error.hpp"
#include "ksqi/model.hpp"
#include "ksqi/parallel.hpp"
#include "ksqi/predict.hpp"
#include "ksqi/session.hpp"

namespace ksqi {

class TraceExhaustedError : public ComputationError {
 public:
  using ComputationError::ComputationError;
};

/// Piecewise-constant throughput: sample k holds on [t_k, t_{k+1}); the last
/// sample holds for the preceding spacing (1 s for a single-sample trace).
class NetworkTrace {
 public:
  NetworkTrace() = default;
  explicit NetworkTrace(std::vector<std::pair<double, double>> samples);

  static NetworkTrace constant(double bits_per_second, double seconds);

  const std::vector<std::pair<double, double>>& samples() const { return samples_; }
  double start() const { return samples_.front().first; }
  double end() const;
  double rate_at(double clock) const;
  /// Wall clock at which `bits` finish downloading when started at `clock`.
  double finish_time(double clock, double bits) const;

 private:
  std::vector<std::pair<double, double>> samples_;
};

/// Two columns per line (timestamp_s, throughput_bps), whitespace or comma
/// separated; blank lines and lines starting with '#' are skipped.
NetworkTrace parse_trace(std::string_view text);

struct Representation {
  std::vector<double> segment_bytes;
  std::vector<double> quality;
};

struct BitrateLadder {
  std::vector<Representation> representations;
  double segment_duration = 2.0;

  std::size_t segments() const;
  std::size_t levels() const { return representations.size(); }
  double bitrate_kbps(std::size_t rep, std::size_t seg) const;
  void validate() const;
};

BitrateLadder parse_ladder(std::string_view text);
std::string serialize_ladder(const BitrateLadder& ladder);

struct PlayerConfig {
  double buffer_capacity = 60.0;
  std::optional<double> startup_threshold;  // defaults to one segment
  double buffer_quantum = 0.1;

  double startup(const BitrateLadder& ladder) const {
    return startup_threshold.value_or(ladder.segment_duration);
  }
  void validate(const BitrateLadder& ladder) const;
};

struct PlayerState {
  double clock = 0.0;
  double buffer = 0.0;
  bool playing = false;
  double initial_buffering = 0.0;
};

struct StepResult {
  PlayerState next;
  double stall = 0.0;
  double download_seconds = 0.0;
  double idle_seconds = 0.0;
};

/// Fetch one segment of `bits` from `s`: wait for buffer room, download,
/// drain the buffer meanwhile, then append the segment.
StepResult advance(const PlayerState& s, double bits, const BitrateLadder& ladder, const NetworkTrace& trace,
                   const PlayerConfig& cfg, bool last_segment);

struct PlaybackLog {
  Session session;
  std::vector<double> download_seconds;
  std::vector<double> idle_seconds;
  double start_clock = 0.0;
  double download_end_clock = 0.0;
  double playback_end_clock = 0.0;
};

PlaybackLog simulate_playback(const std::vector<int>& choices, const BitrateLadder& ladder,
                              const NetworkTrace& trace, const PlayerConfig& cfg = {});
Session simulate_download(const std::vector<int>& choices, const BitrateLadder& ladder, const NetworkTrace& trace,
                          const PlayerConfig& cfg = {});

struct ChunkContext {
  std::size_t index;
  std::size_t total_chunks;
  const Chunk* previous;  // nullptr for the first chunk
  const Chunk& current;
  double initial_buffering;
};

/// A per-chunk additive QoE model. The search maximizes the sum of chunk
/// scores; `session_score` is the model's own session value, which must be
/// increasing in that sum for a fixed chunk count.
class QoeObjective {
 public:
  virtual ~QoeObjective() = default;
  virtual std::string name() const = 0;
  virtual double chunk_score(const ChunkContext& c) const = 0;
  virtual double session_score(const Session& s) const;
};

class KsqiObjective : public QoeObjective {
 public:
  explicit KsqiObjective(KsqiModel model, PredictOptions opt = {}) : model_(std::move(model)), opt_(opt) {}
  std::string name() const override { return "KSQI"; }
  double chunk_score(const ChunkContext& c) const override;
  double session_score(const Session& s) const override;

 private:
  KsqiModel model_;
  PredictOptions opt_;
};

/// sum_k a*R_k - b*tau_k - c*|R_k - R_{k-1}| with R in Mbps; initial
/// buffering is charged at the rebuffering rate on the first chunk.
class BitrateLinearObjective : public QoeObjective {
 public:
  BitrateLinearObjective(double per_mbps = 1.0, double rebuffer_per_second = 4.3, double switch_per_mbps = 1.0)
      : per_mbps_(per_mbps), rebuffer_(rebuffer_per_second), switch_(switch_per_mbps) {}
  std::string name() const override { return "BitrateLinear"; }
  double chunk_score(const ChunkContext& c) const override;

 private:
  double per_mbps_, rebuffer_, switch_;
};

/// Fitted baseline split into chunk terms. Only specs whose rebuffering term
/// is linear in the stalls (Linear, VqaInformed) are additive.
class BaselineObjective : public QoeObjective {
 public:
  explicit BaselineObjective(FittedBaseline model);
  std::string name() const override { return model_.spec.name; }
  double chunk_score(const ChunkContext& c) const override;
  double session_score(const Session& s) const override { return predict_baseline(model_, s); }

 private:
  double unit(const Chunk& c, std::size_t index) const;
  FittedBaseline model_;
};

/// Sum of chunk scores of a complete session, accumulated in chunk order.
double additive_total(const QoeObjective& qoe, const Session& s);

struct SynthesisResult {
  std::vector<int> choices;
  Session session;
  double score = 0.0;        // qoe.session_score(session)
  double total = 0.0;        // additive_total(qoe, session)
  std::size_t states = 0;    // DP states kept across all stages
};

/// Stage-wise DP over (last representation, clock, buffer) with clock and
/// buffer bucketed to cfg.buffer_quantum; each bucket keeps its best path.
/// Ties go to the lexicographically earliest choice sequence.
SynthesisResult dp_optimal_session(const BitrateLadder& ladder, const NetworkTrace& trace, const PlayerConfig& cfg,
                                   const QoeObjective& qoe, Execution ex = Execution::Parallel);

/// Exhaustive search; at most 8 segments and 4 representations.
SynthesisResult brute_force_optimal(const BitrateLadder& ladder, const NetworkTrace& trace,
                                    const PlayerConfig& cfg, const QoeObjective& qoe);

/// Highest representation whose segment bitrate fits the instantaneous trace
/// throughput at request time; lowest if none fits.
std::vector<int> greedy_rate_matching(const BitrateLadder& ladder, const NetworkTrace& trace,
                                      const PlayerConfig& cfg = {});
std::vector<int> fixed_quality(const BitrateLadder& ladder, int rep);

SynthesisResult evaluate_choices(const std::vector<int>& choices, const BitrateLadder& ladder,
                                 const NetworkTrace& trace, const PlayerConfig& cfg, const QoeObjective& qoe);

/// Session log plus the choice sequence and score, as one JSON document.
std::string synthesis_document(const SynthesisResult& r, const QoeObjective& qoe, const PlayerConfig& cfg,
                               const BitrateLadder& ladder);

}  // namespace ksqi
