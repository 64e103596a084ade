#include "ksqi/model.hpp"

#include <cstdio>

#include "json.hpp"
#include "ksqi/error.hpp"

namespace ksqi {

using nlohmann::json;

namespace {

json grid_to_json(const QoEGrid& g) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < g.values.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < g.values.cols(); ++j) row.push_back(g.values(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

QoEGrid grid_from_json(const json& rows, GridKind kind, const GridSpec& spec, const char* field) {
  if (!rows.is_array() || rows.size() != static_cast<std::size_t>(spec.side())) {
    throw ParseError("grid must have n_steps + 1 rows", 0, field);
  }
  QoEGrid g = QoEGrid::zeros(kind, spec);
  for (int i = 0; i < spec.side(); ++i) {
    const json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || row.size() != static_cast<std::size_t>(spec.side())) {
      throw ParseError("grid row has wrong length", 0, std::string(field) + "[" + std::to_string(i) + "]");
    }
    for (int j = 0; j < spec.side(); ++j) {
      const json& v = row[static_cast<std::size_t>(j)];
      if (!v.is_number()) throw ParseError("expected a number", 0, std::string(field));
      g.values(i, j) = v.get<double>();
    }
  }
  return g;
}

json constraints_to_json(const ConstraintSet& set) {
  json out = json::array();
  for (Constraint c : set) out.push_back(to_string(c));
  return out;
}

ConstraintSet constraints_from_json(const json& arr, const char* field) {
  if (!arr.is_array()) throw ParseError("expected an array", 0, field);
  ConstraintSet out;
  for (const json& v : arr) {
    if (!v.is_string()) throw ParseError("expected constraint names", 0, field);
    out.insert(constraint_from_string(v.get<std::string>()));
  }
  return out;
}

}  // namespace

void KsqiModel::verify(double tol) const {
  for (const auto* g : {&s_grid, &a_grid}) {
    if (!(g->spec == spec)) throw ValidationError("model grid spec disagrees with model spec");
  }
  const auto s_bad = check_feasible(s_grid, build_rebuffering_constraints(spec, s_constraints), tol);
  if (!s_bad.empty()) {
    throw ValidationError("rebuffering grid violates " + to_string(s_bad.front().label) + " row " +
                          std::to_string(s_bad.front().row) + " by " + std::to_string(s_bad.front().residual));
  }
  const auto a_bad = check_feasible(a_grid, build_adaptation_constraints(spec, a_constraints), tol);
  if (!a_bad.empty()) {
    throw ValidationError("adaptation grid violates " + to_string(a_bad.front().label) + " row " +
                          std::to_string(a_bad.front().row) + " by " + std::to_string(a_bad.front().residual));
  }
}

std::string serialize_model(const KsqiModel& m) {
  json doc;
  doc["format"] = "ksqi-model";
  doc["version"] = kModelFormatVersion;
  doc["grid"] = {{"n_steps", m.spec.n_steps}, {"quality_max", m.spec.quality_max}, {"rebuffer_max", m.spec.rebuffer_max}};
  doc["lambda"] = m.lambda;
  doc["constraints"] = {{"rebuffering", constraints_to_json(m.s_constraints)},
                        {"adaptation", constraints_to_json(m.a_constraints)}};
  doc["s_grid"] = grid_to_json(m.s_grid);
  doc["a_grid"] = grid_to_json(m.a_grid);
  const ModelProvenance& p = m.provenance;
  doc["provenance"] = {
      {"dataset", p.dataset},
      {"seed", p.seed},
      {"mos_rescaled", p.mos_rescaled},
      {"rebuffer_sessions", p.rebuffer_sessions},
      {"adaptation_sessions", p.adaptation_sessions},
      {"rebuffer_solver", {{"primal_residual", p.rebuffer_primal_residual},
                           {"dual_residual", p.rebuffer_dual_residual},
                           {"iterations", p.rebuffer_iterations}}},
      {"adaptation_solver", {{"primal_residual", p.adaptation_primal_residual},
                             {"dual_residual", p.adaptation_dual_residual},
                             {"iterations", p.adaptation_iterations}}},
  };
  return doc.dump(2) + "\n";
}

KsqiModel deserialize_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("corrupted model document: ") + e.what(), 0, "");
  }
  if (!doc.is_object() || doc.value("format", "") != "ksqi-model") {
    throw ParseError("not a ksqi model document", 0, "format");
  }
  if (!doc.contains("version") || !doc["version"].is_number_integer()) {
    throw ParseError("missing version", 0, "version");
  }
  const int version = doc["version"].get<int>();
  if (version != kModelFormatVersion) {
    throw ValidationError("unsupported model version " + std::to_string(version) + " (expected " +
                          std::to_string(kModelFormatVersion) + ")");
  }
  KsqiModel m;
  try {
    const json& g = doc.at("grid");
    m.spec = GridSpec{g.at("n_steps").get<int>(), g.at("quality_max").get<double>(), g.at("rebuffer_max").get<double>()};
    m.spec.validate();
    m.lambda = doc.at("lambda").get<double>();
    m.s_constraints = constraints_from_json(doc.at("constraints").at("rebuffering"), "constraints.rebuffering");
    m.a_constraints = constraints_from_json(doc.at("constraints").at("adaptation"), "constraints.adaptation");
    m.s_grid = grid_from_json(doc.at("s_grid"), GridKind::Rebuffering, m.spec, "s_grid");
    m.a_grid = grid_from_json(doc.at("a_grid"), GridKind::Adaptation, m.spec, "a_grid");
    const json& p = doc.at("provenance");
    ModelProvenance& pv = m.provenance;
    pv.dataset = p.at("dataset").get<std::string>();
    pv.seed = p.at("seed").get<std::uint64_t>();
    pv.mos_rescaled = p.at("mos_rescaled").get<bool>();
    pv.rebuffer_sessions = p.at("rebuffer_sessions").get<std::size_t>();
    pv.adaptation_sessions = p.at("adaptation_sessions").get<std::size_t>();
    pv.rebuffer_primal_residual = p.at("rebuffer_solver").at("primal_residual").get<double>();
    pv.rebuffer_dual_residual = p.at("rebuffer_solver").at("dual_residual").get<double>();
    pv.rebuffer_iterations = p.at("rebuffer_solver").at("iterations").get<int>();
    pv.adaptation_primal_residual = p.at("adaptation_solver").at("primal_residual").get<double>();
    pv.adaptation_dual_residual = p.at("adaptation_solver").at("dual_residual").get<double>();
    pv.adaptation_iterations = p.at("adaptation_solver").at("iterations").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("corrupted model document: ") + e.what(), 0, "");
  }
  m.verify();
  return m;
}

std::string model_hash(const KsqiModel& m) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : serialize_model(m)) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ksqi
