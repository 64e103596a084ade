#include "ksqi/session.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ksqi/error.hpp"

namespace ksqi {

using nlohmann::json;

namespace {

std::size_t line_of_offset(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed document: ") + e.what(), line_of_offset(text, e.byte), "");
  }
}

double require_number(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError("missing required field", 0, path + key);
  if (!it->is_number()) throw ParseError("expected a number", 0, path + key);
  return it->get<double>();
}

std::optional<double> optional_number(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw ParseError("expected a number", 0, path + key);
  return it->get<double>();
}

Session session_from_json(const json& doc, const std::string& prefix) {
  if (!doc.is_object()) throw ParseError("session document must be an object", 0, prefix);
  Session s;
  s.initial_buffering = require_number(doc, "initial_buffering_s", prefix);
  s.mos = optional_number(doc, "mos", prefix);

  auto it = doc.find("chunks");
  if (it == doc.end()) throw ParseError("missing required field", 0, prefix + "chunks");
  if (!it->is_array()) throw ParseError("expected an array", 0, prefix + "chunks");
  s.chunks.reserve(it->size());
  for (std::size_t k = 0; k < it->size(); ++k) {
    const json& c = (*it)[k];
    const std::string path = prefix + "chunks[" + std::to_string(k) + "].";
    if (!c.is_object()) throw ParseError("chunk must be an object", 0, path);
    Chunk chunk;
    chunk.quality = require_number(c, "quality", path);
    chunk.rebuffering_before = optional_number(c, "rebuffer_s", path).value_or(0.0);
    chunk.duration = require_number(c, "duration_s", path);
    chunk.bitrate_kbps = optional_number(c, "bitrate_kbps", path);
    chunk.qp = optional_number(c, "qp", path);
    s.chunks.push_back(chunk);
  }
  return s;
}

json session_to_json(const Session& s) {
  json doc;
  doc["initial_buffering_s"] = s.initial_buffering;
  if (s.mos) doc["mos"] = *s.mos;
  json chunks = json::array();
  for (const Chunk& c : s.chunks) {
    json jc;
    jc["quality"] = c.quality;
    jc["rebuffer_s"] = c.rebuffering_before;
    jc["duration_s"] = c.duration;
    if (c.bitrate_kbps) jc["bitrate_kbps"] = *c.bitrate_kbps;
    if (c.qp) jc["qp"] = *c.qp;
    chunks.push_back(std::move(jc));
  }
  doc["chunks"] = std::move(chunks);
  return doc;
}

void throw_if_invalid(const Session& s, const std::string& where) {
  const auto violations = validate_session(s);
  if (violations.empty()) return;
  std::string msg = where.empty() ? "" : where + ": ";
  msg += violations.front().describe();
  if (violations.size() > 1) msg += " (+" + std::to_string(violations.size() - 1) + " more)";
  throw ValidationError(msg);
}

}  // namespace

std::string Violation::describe() const {
  std::string out = field;
  if (bound.starts_with("[")) {
    out += " out of " + bound;
  } else {
    out = bound;
  }
  if (index) out += " at chunk " + std::to_string(*index);
  return out;
}

std::vector<Violation> validate_session(const Session& s) {
  std::vector<Violation> out;
  if (s.chunks.empty()) out.push_back({"chunks", std::nullopt, "chunks non-empty"});
  if (!(s.initial_buffering >= 0.0) || !std::isfinite(s.initial_buffering)) {
    out.push_back({"initial_buffering", std::nullopt, "initial_buffering >= 0"});
  }
  if (s.mos && !std::isfinite(*s.mos)) out.push_back({"mos", std::nullopt, "mos finite"});
  for (std::size_t k = 0; k < s.chunks.size(); ++k) {
    const Chunk& c = s.chunks[k];
    if (!(c.quality >= 0.0 && c.quality <= kQualityMax)) {
      out.push_back({"presentation_quality", k, "[0,100]"});
    }
    if (!(c.rebuffering_before >= 0.0) || !std::isfinite(c.rebuffering_before)) {
      out.push_back({"rebuffering_before", k, "rebuffering_before >= 0"});
    }
    if (!(c.duration > 0.0) || !std::isfinite(c.duration)) {
      out.push_back({"duration", k, "duration > 0"});
    }
  }
  return out;
}

FeatureSummary session_features(const Session& s) {
  FeatureSummary f;
  f.initial_buffering = s.initial_buffering;
  if (s.chunks.empty()) return f;
  double quality_sum = 0.0;
  for (std::size_t k = 0; k < s.chunks.size(); ++k) {
    const Chunk& c = s.chunks[k];
    quality_sum += c.quality;
    f.session_seconds += c.duration;
    f.total_rebuffer_seconds += c.rebuffering_before;
    if (c.rebuffering_before > 0.0) ++f.rebuffer_count;
    if (k > 0) f.total_switch_magnitude += std::abs(c.quality - s.chunks[k - 1].quality);
  }
  f.mean_quality = quality_sum / static_cast<double>(s.chunks.size());
  return f;
}

Session parse_session_log(std::string_view text) {
  Session s = session_from_json(parse_json(text), "");
  throw_if_invalid(s, "");
  return s;
}

std::string serialize_session(const Session& s) { return session_to_json(s).dump(2) + "\n"; }

Dataset parse_dataset(std::string_view text) {
  const json doc = parse_json(text);
  if (!doc.is_object()) throw ParseError("dataset document must be an object", 0, "");
  Dataset ds;
  auto name = doc.find("name");
  if (name == doc.end() || !name->is_string()) throw ParseError("expected a string", 0, "name");
  ds.name = name->get<std::string>();

  auto scale = doc.find("mos_scale");
  if (scale == doc.end() || !scale->is_array() || scale->size() != 2 || !(*scale)[0].is_number() ||
      !(*scale)[1].is_number()) {
    throw ParseError("expected [low, high]", 0, "mos_scale");
  }
  ds.mos_scale = {(*scale)[0].get<double>(), (*scale)[1].get<double>()};

  auto sessions = doc.find("sessions");
  if (sessions == doc.end() || !sessions->is_array()) throw ParseError("expected an array", 0, "sessions");
  for (std::size_t m = 0; m < sessions->size(); ++m) {
    const std::string prefix = "sessions[" + std::to_string(m) + "].";
    Session s = session_from_json((*sessions)[m], prefix);
    throw_if_invalid(s, "session " + std::to_string(m));
    ds.sessions.push_back(std::move(s));
  }
  return ds;
}

std::string serialize_dataset(const Dataset& ds) {
  json doc;
  doc["name"] = ds.name;
  doc["mos_scale"] = {ds.mos_scale.low, ds.mos_scale.high};
  json sessions = json::array();
  for (const Session& s : ds.sessions) sessions.push_back(session_to_json(s));
  doc["sessions"] = std::move(sessions);
  return doc.dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << text;
}

Session load_session_file(const std::string& path) { return parse_session_log(read_text_file(path)); }
Dataset load_dataset_file(const std::string& path) { return parse_dataset(read_text_file(path)); }

}  // namespace ksqi
