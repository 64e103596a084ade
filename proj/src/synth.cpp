#include "ksqi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace ksqi {

using nlohmann::json;

NetworkTrace::NetworkTrace(std::vector<std::pair<double, double>> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw ValidationError("trace has no samples");
  for (std::size_t k = 0; k < samples_.size(); ++k) {
    const auto [t, r] = samples_[k];
    if (!std::isfinite(t)) throw ValidationError("trace timestamp " + std::to_string(k) + " is not finite");
    if (!(r > 0.0)) throw ValidationError("trace throughput at sample " + std::to_string(k) + " must be > 0");
    if (k > 0 && !(t > samples_[k - 1].first)) {
      throw ValidationError("trace timestamps must be strictly increasing (sample " + std::to_string(k) + ")");
    }
  }
}

NetworkTrace NetworkTrace::constant(double bits_per_second, double seconds) {
  return NetworkTrace({{0.0, bits_per_second}, {seconds / 2.0, bits_per_second}});
}

double NetworkTrace::end() const {
  const std::size_t n = samples_.size();
  return samples_.back().first + (n == 1 ? 1.0 : samples_[n - 1].first - samples_[n - 2].first);
}

double NetworkTrace::rate_at(double clock) const {
  auto it = std::upper_bound(samples_.begin(), samples_.end(), clock,
                             [](double c, const auto& s) { return c < s.first; });
  if (it == samples_.begin()) return samples_.front().second;
  return std::prev(it)->second;
}

double NetworkTrace::finish_time(double clock, double bits) const {
  if (bits <= 0.0) return clock;
  clock = std::max(clock, start());
  auto it = std::upper_bound(samples_.begin(), samples_.end(), clock,
                             [](double c, const auto& s) { return c < s.first; });
  std::size_t k = static_cast<std::size_t>(std::prev(it) - samples_.begin());
  const double stop = end();
  while (clock < stop) {
    const double rate = samples_[k].second;
    const double until = k + 1 < samples_.size() ? samples_[k + 1].first : stop;
    if (until > clock) {
      const double capacity = rate * (until - clock);
      if (bits <= capacity) return clock + bits / rate;
      bits -= capacity;
    }
    clock = until;
    ++k;
  }
  std::ostringstream msg;
  msg << "trace exhausted at t=" << stop << " s with " << bits << " bits still to download";
  throw TraceExhaustedError(msg.str());
}

NetworkTrace parse_trace(std::string_view text) {
  std::vector<std::pair<double, double>> samples;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::replace(line.begin(), line.end(), ',', ' ');
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream row(line);
    double t = 0.0, r = 0.0;
    std::string extra;
    if (!(row >> t)) throw ParseError("expected a timestamp", line_no, "timestamp_s");
    if (!(row >> r)) throw ParseError("expected a throughput", line_no, "throughput_bps");
    if (row >> extra) throw ParseError("unexpected third column '" + extra + "'", line_no, "");
    samples.emplace_back(t, r);
  }
  return NetworkTrace(std::move(samples));
}

std::size_t BitrateLadder::segments() const {
  return representations.empty() ? 0 : representations.front().segment_bytes.size();
}

double BitrateLadder::bitrate_kbps(std::size_t rep, std::size_t seg) const {
  return representations.at(rep).segment_bytes.at(seg) * 8.0 / segment_duration / 1000.0;
}

void BitrateLadder::validate() const {
  if (!(segment_duration > 0.0)) throw ValidationError("segment_duration must be > 0");
  if (representations.empty()) throw ValidationError("ladder has no representations");
  const std::size_t n = segments();
  if (n == 0) throw ValidationError("ladder has no segments");
  for (std::size_t r = 0; r < representations.size(); ++r) {
    const Representation& rep = representations[r];
    const std::string where = "representations[" + std::to_string(r) + "]";
    if (rep.segment_bytes.size() != n || rep.quality.size() != n) {
      throw ValidationError(where + " has a different segment count than representations[0]");
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (!(rep.segment_bytes[k] > 0.0)) {
        throw ValidationError(where + ".segment_bytes[" + std::to_string(k) + "] must be > 0");
      }
      if (!(rep.quality[k] >= 0.0 && rep.quality[k] <= kQualityMax)) {
        throw ValidationError(where + ".quality[" + std::to_string(k) + "] outside [0, 100]");
      }
    }
  }
}

BitrateLadder parse_ladder(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("ladder is not valid JSON: ") + e.what(), 0, "");
  }
  BitrateLadder ladder;
  try {
    ladder.segment_duration = doc.at("segment_duration").get<double>();
    for (const json& r : doc.at("representations")) {
      ladder.representations.push_back(
          {r.at("segment_bytes").get<std::vector<double>>(), r.at("quality").get<std::vector<double>>()});
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed ladder: ") + e.what(), 0, "representations");
  }
  ladder.validate();
  return ladder;
}

std::string serialize_ladder(const BitrateLadder& ladder) {
  json doc;
  doc["segment_duration"] = ladder.segment_duration;
  doc["representations"] = json::array();
  for (const Representation& r : ladder.representations) {
    doc["representations"].push_back({{"segment_bytes", r.segment_bytes}, {"quality", r.quality}});
  }
  return doc.dump(2) + "\n";
}

void PlayerConfig::validate(const BitrateLadder& ladder) const {
  const double start = startup(ladder);
  if (!(start > 0.0)) throw ValidationError("startup_threshold must be > 0");
  if (!(buffer_capacity >= start)) throw ValidationError("buffer_capacity must be >= startup_threshold");
  if (!(buffer_capacity >= ladder.segment_duration)) {
    throw ValidationError("buffer_capacity must hold at least one segment");
  }
  if (!(buffer_quantum > 0.0)) throw ValidationError("buffer_quantum must be > 0");
}

StepResult advance(const PlayerState& s, double bits, const BitrateLadder& ladder, const NetworkTrace& trace,
                   const PlayerConfig& cfg, bool last_segment) {
  StepResult out;
  PlayerState n = s;
  const double seg = ladder.segment_duration;
  if (n.playing && n.buffer + seg > cfg.buffer_capacity) {
    out.idle_seconds = n.buffer + seg - cfg.buffer_capacity;
    n.clock += out.idle_seconds;
    n.buffer -= out.idle_seconds;
  }
  const double done = trace.finish_time(n.clock, bits);
  out.download_seconds = done - n.clock;
  n.clock = done;
  if (n.playing) {
    if (n.buffer >= out.download_seconds) {
      n.buffer -= out.download_seconds;
    } else {
      out.stall = out.download_seconds - n.buffer;
      n.buffer = 0.0;
    }
  }
  n.buffer += seg;
  if (!n.playing && (n.buffer >= cfg.startup(ladder) || last_segment)) {
    n.playing = true;
    n.initial_buffering = n.clock - trace.start();
  }
  out.next = n;
  return out;
}

namespace {

Chunk make_chunk(const BitrateLadder& ladder, std::size_t rep, std::size_t seg, double stall) {
  Chunk c;
  c.quality = ladder.representations[rep].quality[seg];
  c.rebuffering_before = stall;
  c.duration = ladder.segment_duration;
  c.bitrate_kbps = ladder.bitrate_kbps(rep, seg);
  return c;
}

double segment_bits(const BitrateLadder& ladder, std::size_t rep, std::size_t seg) {
  return ladder.representations[rep].segment_bytes[seg] * 8.0;
}

void check_instance(const BitrateLadder& ladder, const PlayerConfig& cfg) {
  ladder.validate();
  cfg.validate(ladder);
}

void check_choices(const std::vector<int>& choices, const BitrateLadder& ladder) {
  if (choices.size() != ladder.segments()) {
    throw ValidationError("expected " + std::to_string(ladder.segments()) + " choices, got " +
                          std::to_string(choices.size()));
  }
  for (std::size_t k = 0; k < choices.size(); ++k) {
    if (choices[k] < 0 || static_cast<std::size_t>(choices[k]) >= ladder.levels()) {
      throw ValidationError("choice " + std::to_string(k) + " = " + std::to_string(choices[k]) +
                            " is not a representation index");
    }
  }
}

}  // namespace

PlaybackLog simulate_playback(const std::vector<int>& choices, const BitrateLadder& ladder,
                              const NetworkTrace& trace, const PlayerConfig& cfg) {
  check_instance(ladder, cfg);
  check_choices(choices, ladder);
  PlaybackLog log;
  PlayerState st{trace.start(), 0.0, false, 0.0};
  log.start_clock = st.clock;
  for (std::size_t k = 0; k < choices.size(); ++k) {
    const auto rep = static_cast<std::size_t>(choices[k]);
    const StepResult r = advance(st, segment_bits(ladder, rep, k), ladder, trace, cfg, k + 1 == choices.size());
    log.session.chunks.push_back(make_chunk(ladder, rep, k, r.stall));
    log.download_seconds.push_back(r.download_seconds);
    log.idle_seconds.push_back(r.idle_seconds);
    st = r.next;
  }
  log.session.initial_buffering = st.initial_buffering;
  log.download_end_clock = st.clock;
  log.playback_end_clock = st.clock + st.buffer;
  return log;
}

Session simulate_download(const std::vector<int>& choices, const BitrateLadder& ladder, const NetworkTrace& trace,
                          const PlayerConfig& cfg) {
  return simulate_playback(choices, ladder, trace, cfg).session;
}

double QoeObjective::session_score(const Session& s) const { return additive_total(*this, s); }

double additive_total(const QoeObjective& qoe, const Session& s) {
  double total = 0.0;
  for (std::size_t k = 0; k < s.chunks.size(); ++k) {
    total += qoe.chunk_score({k, s.chunks.size(), k == 0 ? nullptr : &s.chunks[k - 1], s.chunks[k],
                              s.initial_buffering});
  }
  return total;
}

double KsqiObjective::chunk_score(const ChunkContext& c) const {
  Session s;
  if (c.previous) {
    s.chunks = {*c.previous, c.current};
    return chunk_qoe(model_, s, 1, opt_);
  }
  s.chunks = {c.current};
  s.initial_buffering = c.initial_buffering;
  return chunk_qoe(model_, s, 0, opt_);
}

double KsqiObjective::session_score(const Session& s) const { return session_qoe(model_, s, opt_).final_score; }

double BitrateLinearObjective::chunk_score(const ChunkContext& c) const {
  auto mbps = [&](const Chunk& ch) {
    if (!ch.bitrate_kbps) throw MissingFeatureError(name() + " needs bitrate_kbps, missing at chunk " +
                                                    std::to_string(c.index));
    return *ch.bitrate_kbps / 1000.0;
  };
  const double r = mbps(c.current);
  double tau = c.current.rebuffering_before;
  if (c.index == 0) tau += c.initial_buffering;
  double q = per_mbps_ * r - rebuffer_ * tau;
  if (c.previous) q -= switch_ * std::abs(r - mbps(*c.previous));
  return q;
}

BaselineObjective::BaselineObjective(FittedBaseline model) : model_(std::move(model)) {
  const RebufferTerm r = model_.spec.rebuffer;
  if (r != RebufferTerm::Linear && r != RebufferTerm::VqaInformed) {
    throw ValidationError(model_.spec.name + " has a " + to_string(r) +
                          " rebuffering term, which is not additive over chunks");
  }
  for (const std::string& name : model_.spec.coefficient_names()) {
    if (!model_.coefficients.count(name)) throw ValidationError(model_.spec.name + " lacks coefficient " + name);
  }
}

double BaselineObjective::unit(const Chunk& c, std::size_t index) const {
  const BaselineSpec& spec = model_.spec;
  double u = c.quality;
  switch (spec.presentation) {
    case PresentationTerm::LinearBitrate:
    case PresentationTerm::LogBitrate:
      if (!c.bitrate_kbps) {
        throw MissingFeatureError(spec.name + " needs bitrate_kbps, missing at chunk " + std::to_string(index));
      }
      u = *c.bitrate_kbps;
      break;
    case PresentationTerm::LinearQp:
      if (!c.qp) throw MissingFeatureError(spec.name + " needs qp, missing at chunk " + std::to_string(index));
      u = *c.qp;
      break;
    default:
      break;
  }
  return u;
}

double BaselineObjective::chunk_score(const ChunkContext& c) const {
  const BaselineSpec& spec = model_.spec;
  auto coef = [&](const char* n) { return model_.coefficients.at(n); };
  auto log_of = [&](double v) {
    if (!(v > 0.0)) throw ValidationError(spec.name + " takes the logarithm of a non-positive value");
    return std::log(v);
  };
  const double n = static_cast<double>(c.total_chunks);
  const double u = unit(c.current, c.index);
  double q = coef("intercept") / n;
  switch (spec.presentation) {
    case PresentationTerm::None: break;
    case PresentationTerm::IdentityVqa: q += c.current.quality / n; break;
    case PresentationTerm::LogBitrate: q += coef("presentation") * log_of(u) / n; break;
    default: q += coef("presentation") * u / n;
  }
  const double tau = c.current.rebuffering_before;
  if (spec.rebuffer == RebufferTerm::VqaInformed) {
    const double prev = c.previous ? c.previous->quality : kInitialExpectation;
    double w = prev / kQualityMax * tau;
    if (c.index == 0) w += c.initial_buffering * kInitialExpectation / kQualityMax;
    q += coef("rebuffer") * w;
  } else {
    q += coef("rebuffer") * (tau + (c.index == 0 ? c.initial_buffering : 0.0));
  }
  if (c.previous && spec.switching != SwitchingTerm::None) {
    const double v = unit(*c.previous, c.index - 1);
    const double d = spec.switching == SwitchingTerm::Linear ? u - v : log_of(u) - log_of(v);
    q += coef("switching") * std::abs(d);
  }
  return q;
}

SynthesisResult evaluate_choices(const std::vector<int>& choices, const BitrateLadder& ladder,
                                 const NetworkTrace& trace, const PlayerConfig& cfg, const QoeObjective& qoe) {
  SynthesisResult r;
  r.choices = choices;
  r.session = simulate_download(choices, ladder, trace, cfg);
  r.total = additive_total(qoe, r.session);
  r.score = qoe.session_score(r.session);
  return r;
}

namespace {

struct Path {
  PlayerState state;
  Chunk first;
  Chunk last;
  double total = 0.0;  // excludes the first chunk until playback starts
  int first_rep = 0;
};

Path extend(const Path& p, std::size_t rep, std::size_t seg, const BitrateLadder& ladder,
            const NetworkTrace& trace, const PlayerConfig& cfg, const QoeObjective& qoe) {
  const std::size_t n = ladder.segments();
  const StepResult r = advance(p.state, segment_bits(ladder, rep, seg), ladder, trace, cfg, seg + 1 == n);
  Path out;
  out.state = r.next;
  out.last = make_chunk(ladder, rep, seg, r.stall);
  out.first = seg == 0 ? out.last : p.first;
  out.first_rep = seg == 0 ? static_cast<int>(rep) : p.first_rep;
  out.total = p.total;
  if (r.next.playing && !p.state.playing) {
    out.total += qoe.chunk_score({0, n, nullptr, out.first, r.next.initial_buffering});
  }
  if (seg > 0) out.total += qoe.chunk_score({seg, n, &p.last, out.last, r.next.initial_buffering});
  return out;
}

}  // namespace

SynthesisResult dp_optimal_session(const BitrateLadder& ladder, const NetworkTrace& trace, const PlayerConfig& cfg,
                                   const QoeObjective& qoe, Execution ex) {
  check_instance(ladder, cfg);
  const std::size_t n = ladder.segments(), b = ladder.levels();
  using Key = std::tuple<std::size_t, int, long long, long long>;
  // Layers are kept in lexicographic order of their choice prefixes, so a
  // candidate's index (parent * b + rep) is its lexicographic rank.
  std::vector<Path> layer(1);
  layer[0].state = {trace.start(), 0.0, false, 0.0};
  std::vector<std::vector<std::size_t>> parents, reps;
  std::size_t kept = 0;
  for (std::size_t seg = 0; seg < n; ++seg) {
    std::vector<Path> cand(layer.size() * b);
    const auto total = static_cast<std::int64_t>(cand.size());
    auto expand = [&](std::int64_t i) {
      const auto idx = static_cast<std::size_t>(i);
      cand[idx] = extend(layer[idx / b], idx % b, seg, ladder, trace, cfg, qoe);
    };
    if (ex == Execution::Parallel) {
      std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 64)
      for (std::int64_t i = 0; i < total; ++i) {
        try {
          expand(i);
        } catch (...) {
#pragma omp critical
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
    } else {
      for (std::int64_t i = 0; i < total; ++i) expand(i);
    }
    std::map<Key, std::size_t> buckets;
    for (std::size_t idx = 0; idx < cand.size(); ++idx) {
      const Path& p = cand[idx];
      const Key key{idx % b, p.state.playing ? -1 : p.first_rep, std::llround(p.state.clock / cfg.buffer_quantum),
                    std::llround(p.state.buffer / cfg.buffer_quantum)};
      auto [it, inserted] = buckets.try_emplace(key, idx);
      if (!inserted && p.total > cand[it->second].total) it->second = idx;
    }
    std::vector<std::size_t> winners;
    winners.reserve(buckets.size());
    for (const auto& [key, idx] : buckets) winners.push_back(idx);
    std::sort(winners.begin(), winners.end());
    layer.clear();
    parents.emplace_back();
    reps.emplace_back();
    for (std::size_t idx : winners) {
      layer.push_back(std::move(cand[idx]));
      parents.back().push_back(idx / b);
      reps.back().push_back(idx % b);
    }
    kept += layer.size();
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < layer.size(); ++k) {
    if (layer[k].total > layer[best].total) best = k;
  }
  std::vector<int> choices(n);
  for (std::size_t seg = n; seg-- > 0;) {
    choices[seg] = static_cast<int>(reps[seg][best]);
    best = parents[seg][best];
  }
  SynthesisResult r = evaluate_choices(choices, ladder, trace, cfg, qoe);
  r.states = kept;
  return r;
}

SynthesisResult brute_force_optimal(const BitrateLadder& ladder, const NetworkTrace& trace,
                                    const PlayerConfig& cfg, const QoeObjective& qoe) {
  check_instance(ladder, cfg);
  const std::size_t n = ladder.segments(), b = ladder.levels();
  if (n > 8 || b > 4) {
    throw ValidationError("brute force is limited to 8 segments and 4 representations, got " + std::to_string(n) +
                          " x " + std::to_string(b));
  }
  // Sequences are visited in lexicographic order; only strict improvements
  // replace the incumbent.
  std::vector<int> choice(n, 0), best_choice;
  double best_total = -std::numeric_limits<double>::infinity();
  while (true) {
    Path p;
    p.state = {trace.start(), 0.0, false, 0.0};
    for (std::size_t seg = 0; seg < n; ++seg) {
      p = extend(p, static_cast<std::size_t>(choice[seg]), seg, ladder, trace, cfg, qoe);
    }
    if (best_choice.empty() || p.total > best_total) {
      best_total = p.total;
      best_choice = choice;
    }
    std::size_t k = n;
    while (k > 0 && choice[k - 1] == static_cast<int>(b) - 1) choice[--k] = 0;
    if (k == 0) break;
    ++choice[k - 1];
  }
  SynthesisResult r = evaluate_choices(best_choice, ladder, trace, cfg, qoe);
  r.states = static_cast<std::size_t>(std::pow(static_cast<double>(b), static_cast<double>(n)));
  return r;
}

std::vector<int> greedy_rate_matching(const BitrateLadder& ladder, const NetworkTrace& trace,
                                      const PlayerConfig& cfg) {
  check_instance(ladder, cfg);
  const std::size_t n = ladder.segments();
  std::vector<int> choices;
  PlayerState st{trace.start(), 0.0, false, 0.0};
  for (std::size_t seg = 0; seg < n; ++seg) {
    const double rate = trace.rate_at(st.clock);
    int pick = 0;
    for (std::size_t r = 0; r < ladder.levels(); ++r) {
      if (ladder.bitrate_kbps(r, seg) * 1000.0 <= rate) pick = static_cast<int>(r);
    }
    choices.push_back(pick);
    st = advance(st, segment_bits(ladder, static_cast<std::size_t>(pick), seg), ladder, trace, cfg, seg + 1 == n)
             .next;
  }
  return choices;
}

std::vector<int> fixed_quality(const BitrateLadder& ladder, int rep) {
  if (rep < 0 || static_cast<std::size_t>(rep) >= ladder.levels()) {
    throw ValidationError("representation " + std::to_string(rep) + " not in ladder");
  }
  return std::vector<int>(ladder.segments(), rep);
}

std::string synthesis_document(const SynthesisResult& r, const QoeObjective& qoe, const PlayerConfig& cfg,
                               const BitrateLadder& ladder) {
  json doc;
  doc["objective"] = qoe.name();
  doc["choices"] = r.choices;
  doc["score"] = r.score;
  doc["additive_total"] = r.total;
  doc["player"] = {{"buffer_capacity", cfg.buffer_capacity},
                   {"startup_threshold", cfg.startup(ladder)},
                   {"buffer_quantum", cfg.buffer_quantum}};
  doc["session"] = json::parse(serialize_session(r.session));
  return doc.dump(2) + "\n";
}

}  // namespace ksqi
