#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ksqi {

/// Presentation-quality scale used throughout (VMAF-like, 0..100).
inline constexpr double kQualityMax = 100.0;

struct Chunk {
  double quality = 0.0;             // presentation quality, [0, kQualityMax]
  double rebuffering_before = 0.0;  // stall (s) immediately preceding playback of this chunk
  double duration = 0.0;            // seconds, > 0
  std::optional<double> bitrate_kbps;
  std::optional<double> qp;

  bool operator==(const Chunk&) const = default;
};

struct Session {
  std::vector<Chunk> chunks;
  double initial_buffering = 0.0;
  std::optional<double> mos;

  bool operator==(const Session&) const = default;
};

struct MosScale {
  double low = 0.0;
  double high = 100.0;

  bool operator==(const MosScale&) const = default;
};

struct Dataset {
  std::string name;
  std::vector<Session> sessions;
  MosScale mos_scale;

  bool operator==(const Dataset&) const = default;
};

struct FeatureSummary {
  double mean_quality = 0.0;
  double total_rebuffer_seconds = 0.0;  // stalls only; initial buffering is separate
  int rebuffer_count = 0;
  double total_switch_magnitude = 0.0;
  double session_seconds = 0.0;  // sum of chunk durations
  double initial_buffering = 0.0;
};

/// One broken invariant. `index` is the 0-based chunk index, or nullopt for
/// session-level fields.
struct Violation {
  std::string field;
  std::optional<std::size_t> index;
  std::string bound;

  std::string describe() const;
  bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate_session(const Session& s);
FeatureSummary session_features(const Session& s);

/// Parses one session-log document. Throws ParseError on malformed input and
/// ValidationError when a parsed value breaks an invariant.
Session parse_session_log(std::string_view text);
std::string serialize_session(const Session& s);

Dataset parse_dataset(std::string_view text);
std::string serialize_dataset(const Dataset& ds);

Session load_session_file(const std::string& path);
Dataset load_dataset_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace ksqi
