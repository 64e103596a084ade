#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ksqi/baselines.hpp"
#include "ksqi/grid.hpp"
#include "ksqi/metrics.hpp"
#include "ksqi/predict.hpp"
#include "ksqi/ranking.hpp"
#include "ksqi/robustness.hpp"
#include "ksqi/synth.hpp"
#include "ksqi/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ksqi;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitComputation = 3;

struct Global {
  std::uint64_t seed = 1;
  std::string error_format = "text";
};

struct GridArgs {
  int n_steps = 10;
  double quality_max = 100.0;
  double rebuffer_max = 10.0;

  GridSpec spec() const {
    GridSpec s{n_steps, quality_max, rebuffer_max};
    s.validate();
    return s;
  }
  void add(CLI::App* app) {
    app->add_option("--n-steps", n_steps, "Grid steps N per axis")->capture_default_str();
    app->add_option("--quality-max", quality_max, "Presentation quality scale P")->capture_default_str();
    app->add_option("--rebuffer-max", rebuffer_max, "Maximum rebuffering duration in seconds")->capture_default_str();
  }
};

struct SolverArgs {
  SolverSettings s;
  void add(CLI::App* app) {
    app->add_option("--tol-primal", s.tol_primal, "QP primal residual tolerance")->capture_default_str();
    app->add_option("--tol-dual", s.tol_dual, "QP dual residual tolerance")->capture_default_str();
    app->add_option("--max-iter", s.max_iter, "QP iteration limit")->capture_default_str();
    app->add_option("--rho", s.rho, "Initial ADMM penalty")->capture_default_str();
  }
};

void require_output_dir(const std::string& path) {
  if (path.empty() || path == "-") return;
  const fs::path parent = fs::absolute(path).parent_path();
  if (!fs::is_directory(parent)) throw ValidationError("output directory does not exist: " + parent.string());
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

std::vector<double> parse_lambda_list(const std::string& text) {
  std::vector<double> out;
  const auto dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      const double lo = std::stod(text.substr(0, dots)), hi = std::stod(text.substr(dots + 2));
      if (!(lo > 0.0 && hi >= lo)) throw ValidationError("lambda range needs 0 < lo <= hi: " + text);
      const int decades = static_cast<int>(std::lround(std::log10(hi / lo)));
      for (int k = 0; k <= decades; ++k) out.push_back(lo * std::pow(10.0, k));
    } else {
      std::stringstream in(text);
      std::string cell;
      while (std::getline(in, cell, ',')) out.push_back(std::stod(cell));
    }
  } catch (const std::logic_error&) {
    throw ValidationError("cannot parse lambda list '" + text + "'");
  }
  if (out.empty()) throw ValidationError("empty lambda list");
  for (double l : out) {
    if (!(l >= 0.0)) throw ValidationError("lambda values must be >= 0");
  }
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    std::istringstream v(cell);
    T x{};
    if (!(v >> x)) throw ValidationError("cannot parse list item '" + cell + "'");
    out.push_back(x);
  }
  return out;
}

Dataset load_rescaled(const std::string& path) {
  const Dataset ds = load_dataset_file(path);
  return rescale_mos(ds, 0.0, kQualityMax);
}

std::string sweep_table(const std::vector<SweepPoint>& points, const std::vector<double>* losses) {
  std::ostringstream out;
  out << "lambda,n_steps," << (losses ? "validation_loss," : "")
      << "fidelity_s,fidelity_a,smoothness_s,smoothness_a,feasible\n";
  char buf[320];
  for (std::size_t k = 0; k < points.size(); ++k) {
    const SweepPoint& p = points[k];
    std::snprintf(buf, sizeof buf, "%.17g,%d,", p.lambda, p.n_steps);
    out << buf;
    if (losses) {
      std::snprintf(buf, sizeof buf, "%.17g,", (*losses)[k]);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%d\n", p.fidelity_s, p.fidelity_a, p.smoothness_s,
                  p.smoothness_a, p.feasible ? 1 : 0);
    out << buf;
  }
  return out.str();
}

json feasibility_json(const QoEGrid& g, GridKind kind, const GridSpec& spec) {
  const ConstraintSystem full = build_constraints(
      kind, spec, kind == GridKind::Rebuffering ? all_rebuffering_constraints() : all_adaptation_constraints());
  const auto bad = check_feasible(g, full, 1e-6);
  double worst = 0.0;
  for (const RowViolation& v : bad) worst = std::max(worst, std::abs(v.residual));
  return {{"rows", full.ineq_bound.size() + full.eq_bound.size()},
          {"violations", bad.size()},
          {"worst_residual", worst}};
}

std::string constraint_names(const ConstraintSet& set) {
  std::string out;
  for (Constraint c : set) out += (out.empty() ? "" : ",") + to_string(c);
  return out;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::vector<std::string> data;
  std::string out, report, sweep_out;
  GridArgs grid;
  SolverArgs solver;
  double lambda = 1.0;
  std::string constraints, lambda_sweep, bin_sweep, cv_lambdas;
  double cv_split = 0.8;
  int synthetic_hits = 0;
  double synthetic_noise = 0.0;
};

int run_train(const TrainArgs& a, const Global& g) {
  if (a.data.empty() && a.synthetic_hits <= 0) throw ValidationError("train needs --data or --synthetic-hits");
  if (!a.data.empty() && a.synthetic_hits > 0) throw ValidationError("--data and --synthetic-hits are exclusive");
  require_output_dir(a.out);
  require_output_dir(a.report);
  require_output_dir(a.sweep_out);
  const GridSpec spec = a.grid.spec();

  TrainOptions opt;
  opt.lambda = a.lambda;
  opt.solver = a.solver.s;
  opt.seed = g.seed;
  if (!a.constraints.empty()) {
    const ConstraintSet chosen = parse_constraint_list(a.constraints);
    opt.s_constraints.clear();
    opt.a_constraints.clear();
    for (Constraint c : chosen) {
      (all_rebuffering_constraints().count(c) ? opt.s_constraints : opt.a_constraints).insert(c);
    }
  }

  TrainingSet ts;
  PartitionReport part;
  if (a.synthetic_hits > 0) {
    SyntheticOptions so;
    so.hits_per_cell = a.synthetic_hits;
    so.noise_sigma = a.synthetic_noise;
    so.seed = g.seed;
    ts = synthesize_training_set(reference_rebuffering_grid(spec), reference_adaptation_grid(spec), so);
    part.rebuffer = ts.rebuffer_sessions.size();
    part.adaptation = ts.adaptation_sessions.size();
    opt.dataset = "synthetic";
  } else {
    std::vector<Session> all;
    for (const std::string& path : a.data) {
      const Dataset ds = load_rescaled(path);
      all.insert(all.end(), ds.sessions.begin(), ds.sessions.end());
      opt.dataset += (opt.dataset.empty() ? "" : "+") + ds.name;
    }
    ts = partition_sessions(all, &part);
  }
  validate_training_set(ts);

  json report;
  std::optional<LambdaSelection> cv;
  std::vector<double> sweep_lambdas;
  if (!a.lambda_sweep.empty()) sweep_lambdas = parse_lambda_list(a.lambda_sweep);
  if (!a.cv_lambdas.empty() || !sweep_lambdas.empty()) {
    const std::vector<double> candidates = a.cv_lambdas.empty() ? sweep_lambdas : parse_lambda_list(a.cv_lambdas);
    cv = cross_validate_lambda(ts, spec, candidates, a.cv_split, g.seed, opt);
    opt.lambda = cv->best_lambda;
    report["cross_validation"] = {{"split_fraction", a.cv_split},
                                  {"candidates", cv->candidates},
                                  {"validation_loss", cv->validation_loss},
                                  {"best_lambda", cv->best_lambda}};
  }
  if (!sweep_lambdas.empty()) {
    const auto points = lambda_sweep(ts, spec, sweep_lambdas, opt);
    std::vector<double> losses;
    if (cv && cv->candidates == sweep_lambdas) losses = cv->validation_loss;
    emit(a.sweep_out.empty() ? "-" : a.sweep_out, sweep_table(points, losses.empty() ? nullptr : &losses));
  }
  if (!a.bin_sweep.empty()) {
    const auto points = bin_sweep(ts, spec, parse_list<int>(a.bin_sweep), opt.lambda, opt);
    emit(a.sweep_out.empty() ? "-" : a.sweep_out, sweep_table(points, nullptr));
  }

  KsqiModel model = train_ksqi(ts, spec, opt);
  model.provenance.mos_rescaled = a.synthetic_hits == 0;
  if (!a.out.empty()) emit(a.out, serialize_model(model));

  report["model_hash"] = model_hash(model);
  report["lambda"] = model.lambda;
  report["seed"] = g.seed;
  report["grid"] = {{"n_steps", spec.n_steps}, {"quality_max", spec.quality_max}, {"rebuffer_max", spec.rebuffer_max}};
  report["constraints"] = {{"rebuffering", constraint_names(model.s_constraints)},
                           {"adaptation", constraint_names(model.a_constraints)}};
  report["partition"] = {{"rebuffer", part.rebuffer},
                         {"adaptation", part.adaptation},
                         {"dropped_mixed", part.dropped_mixed},
                         {"dropped_eventless", part.dropped_eventless},
                         {"dropped_unlabeled", part.dropped_unlabeled}};
  const ModelProvenance& pv = model.provenance;
  report["solver"] = {{"rebuffering",
                       {{"primal_residual", pv.rebuffer_primal_residual},
                        {"dual_residual", pv.rebuffer_dual_residual},
                        {"iterations", pv.rebuffer_iterations}}},
                      {"adaptation",
                       {{"primal_residual", pv.adaptation_primal_residual},
                        {"dual_residual", pv.adaptation_dual_residual},
                        {"iterations", pv.adaptation_iterations}}}};
  report["feasibility_full_systems"] = {{"rebuffering", feasibility_json(model.s_grid, GridKind::Rebuffering, spec)},
                                        {"adaptation", feasibility_json(model.a_grid, GridKind::Adaptation, spec)}};
  if (!a.report.empty()) {
    emit(a.report, report.dump(2) + "\n");
  } else if (a.out.empty()) {
    std::cout << report.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string model, session, dataset, out;
  bool no_first_chunk_adaptation = false;
};

int run_predict(const PredictArgs& a) {
  if (a.session.empty() == a.dataset.empty()) throw ValidationError("predict needs exactly one of --session or --dataset");
  require_output_dir(a.out);
  const KsqiModel m = deserialize_model(read_text_file(a.model));
  PredictOptions opt;
  opt.first_chunk_adaptation = !a.no_first_chunk_adaptation;
  if (!a.session.empty()) {
    const PredictionTrace tr = session_qoe(m, load_session_file(a.session), opt);
    emit(a.out, prediction_document(m, tr, opt));
    return 0;
  }
  const Dataset ds = load_dataset_file(a.dataset);
  std::ostringstream csv;
  csv << "session,final_score\n";
  char buf[64];
  for (std::size_t k = 0; k < ds.sessions.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", session_qoe(m, ds.sessions[k], opt).final_score);
    csv << k << "," << buf << "\n";
  }
  emit(a.out, csv.str());
  return 0;
}

// ---------------------------------------------------------------- fit-baselines

struct FitArgs {
  std::vector<std::string> data;
  std::string out, only;
};

int run_fit_baselines(const FitArgs& a, const Global& g) {
  require_output_dir(a.out);
  Dataset pooled;
  for (const std::string& path : a.data) {
    const Dataset ds = load_rescaled(path);
    pooled.sessions.insert(pooled.sessions.end(), ds.sessions.begin(), ds.sessions.end());
  }
  std::vector<BaselineSpec> specs;
  if (a.only.empty()) {
    specs = standard_baselines();
  } else {
    for (const std::string& name : parse_list<std::string>(a.only)) specs.push_back(find_baseline(name));
  }
  std::vector<FittedBaseline> fitted;
  for (const BaselineSpec& spec : specs) fitted.push_back(fit_baseline(spec, pooled, g.seed));
  emit(a.out, serialize_registry(fitted));
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvalArgs {
  std::vector<std::string> models, data;
  std::string baselines, out_dir;
  double confidence = 0.95;
};

int run_evaluate(const EvalArgs& a, const Global& g) {
  if (a.models.empty() && a.baselines.empty()) throw ValidationError("evaluate needs --model or --baselines");
  if (!a.out_dir.empty() && !fs::is_directory(a.out_dir)) {
    throw ValidationError("output directory does not exist: " + a.out_dir);
  }
  struct Entry {
    std::string name;
    std::function<double(const Session&)> predict;
  };
  std::vector<Entry> entries;
  for (const std::string& path : a.models) {
    auto m = std::make_shared<KsqiModel>(deserialize_model(read_text_file(path)));
    const std::string name = a.models.size() == 1 ? "KSQI" : fs::path(path).stem().string();
    entries.push_back({name, [m](const Session& s) { return session_qoe(*m, s).final_score; }});
  }
  if (!a.baselines.empty()) {
    for (const FittedBaseline& f : parse_registry(read_text_file(a.baselines))) {
      auto fb = std::make_shared<FittedBaseline>(f);
      entries.push_back({f.spec.name, [fb](const Session& s) { return predict_baseline(*fb, s); }});
    }
  }
  std::vector<std::string> names, dataset_names;
  for (const Entry& e : entries) names.push_back(e.name);
  std::vector<std::vector<double>> mos;
  std::vector<std::vector<std::vector<double>>> preds(entries.size());
  for (const std::string& path : a.data) {
    const Dataset ds = load_rescaled(path);
    dataset_names.push_back(ds.name.empty() ? fs::path(path).stem().string() : ds.name);
    std::vector<double> m;
    for (std::size_t k = 0; k < ds.sessions.size(); ++k) {
      if (!ds.sessions[k].mos) {
        throw ValidationError(dataset_names.back() + ": session " + std::to_string(k) + " has no MOS label");
      }
      m.push_back(*ds.sessions[k].mos);
    }
    mos.push_back(std::move(m));
    for (std::size_t e = 0; e < entries.size(); ++e) {
      std::vector<double> p;
      for (const Session& s : ds.sessions) p.push_back(entries[e].predict(s));
      preds[e].push_back(std::move(p));
    }
  }
  const EvaluationReport r = evaluate_models(names, dataset_names, preds, mos, g.seed);
  const SignificanceMatrix sig = significance_matrix(names, r.residuals, a.confidence);
  const std::pair<const char*, Metric> tables[] = {{"plcc", Metric::Plcc}, {"srcc", Metric::Srcc},
                                                   {"krcc", Metric::Krcc}};
  if (a.out_dir.empty()) {
    for (const auto& [label, metric] : tables) std::cout << "# " << label << "\n" << report_csv(r, metric) << "\n";
    std::cout << "# significance\n" << significance_csv(sig);
  } else {
    for (const auto& [label, metric] : tables) {
      write_text_file((fs::path(a.out_dir) / (std::string(label) + ".csv")).string(), report_csv(r, metric));
    }
    write_text_file((fs::path(a.out_dir) / "significance.csv").string(), significance_csv(sig));
  }
  return 0;
}

// ---------------------------------------------------------------- synthesize

struct SynthArgs {
  std::string ladder, trace, objective = "ksqi", model, baselines, policy = "dp", out;
  PlayerConfig player;
  double startup = 0.0;
  bool serial = false;
};

int run_synthesize(const SynthArgs& a) {
  require_output_dir(a.out);
  const BitrateLadder ladder = parse_ladder(read_text_file(a.ladder));
  const NetworkTrace trace = parse_trace(read_text_file(a.trace));
  PlayerConfig cfg = a.player;
  if (a.startup > 0.0) cfg.startup_threshold = a.startup;

  std::unique_ptr<QoeObjective> qoe;
  if (a.objective == "ksqi") {
    if (a.model.empty()) throw ValidationError("--objective ksqi needs --model");
    qoe = std::make_unique<KsqiObjective>(deserialize_model(read_text_file(a.model)));
  } else if (a.objective == "bitrate-linear") {
    qoe = std::make_unique<BitrateLinearObjective>();
  } else if (a.objective.rfind("baseline:", 0) == 0) {
    if (a.baselines.empty()) throw ValidationError("--objective baseline:NAME needs --baselines");
    const std::string name = a.objective.substr(9);
    std::optional<FittedBaseline> chosen;
    for (const FittedBaseline& f : parse_registry(read_text_file(a.baselines))) {
      if (f.spec.name == name) chosen = f;
    }
    if (!chosen) throw ValidationError("baseline '" + name + "' not in registry");
    qoe = std::make_unique<BaselineObjective>(*chosen);
  } else {
    throw ValidationError("unknown objective '" + a.objective + "' (ksqi, bitrate-linear, baseline:NAME)");
  }

  SynthesisResult r;
  if (a.policy == "dp") {
    r = dp_optimal_session(ladder, trace, cfg, *qoe, a.serial ? Execution::Serial : Execution::Parallel);
  } else if (a.policy == "brute-force") {
    r = brute_force_optimal(ladder, trace, cfg, *qoe);
  } else if (a.policy == "greedy") {
    r = evaluate_choices(greedy_rate_matching(ladder, trace, cfg), ladder, trace, cfg, *qoe);
  } else if (a.policy.rfind("fixed:", 0) == 0) {
    int rep = 0;
    try {
      rep = std::stoi(a.policy.substr(6));
    } catch (const std::logic_error&) {
      throw ValidationError("bad policy '" + a.policy + "'");
    }
    r = evaluate_choices(fixed_quality(ladder, rep), ladder, trace, cfg, *qoe);
  } else {
    throw ValidationError("unknown policy '" + a.policy + "' (dp, brute-force, greedy, fixed:N)");
  }
  emit(a.out, synthesis_document(r, *qoe, cfg, ladder));
  return 0;
}

// ---------------------------------------------------------------- rank

struct RankArgs {
  std::string pairs, out, preference_out;
  double tol = 1e-10;
};

int run_rank(const RankArgs& a) {
  require_output_dir(a.out);
  require_output_dir(a.preference_out);
  const PairwiseMatrix pm = parse_pairwise_csv(read_text_file(a.pairs));
  RankingOptions opt;
  opt.tol = a.tol;
  const RankingResult rr = mle_ranking(pm, opt);
  emit(a.out, ranking_csv(rr));
  if (!a.preference_out.empty()) emit(a.preference_out, matrix_csv(rr.models, preference_probability(rr)));
  return 0;
}

// ---------------------------------------------------------------- constraints

struct ConstraintArgs {
  GridArgs grid;
  std::string kind = "rebuffering", only, out;
};

int run_constraints(const ConstraintArgs& a) {
  require_output_dir(a.out);
  const GridSpec spec = a.grid.spec();
  GridKind kind;
  if (a.kind == "rebuffering") {
    kind = GridKind::Rebuffering;
  } else if (a.kind == "adaptation") {
    kind = GridKind::Adaptation;
  } else {
    throw ValidationError("--kind must be rebuffering or adaptation");
  }
  ConstraintSet set = kind == GridKind::Rebuffering ? all_rebuffering_constraints() : all_adaptation_constraints();
  if (!a.only.empty()) set = parse_constraint_list(a.only);
  emit(a.out, export_triplets(build_constraints(kind, spec, set)));
  return 0;
}

void report_error(const Global& g, const char* kind, const std::string& message) {
  if (g.error_format == "json") {
    std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
  } else {
    std::cerr << "error (" << kind << "): " << message << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KSQI QoE toolkit: train, predict, evaluate, synthesize and rank"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--seed", g.seed, "Seed for every randomized step")->capture_default_str();
  app.add_option("--error-format", g.error_format, "Error output: text or json")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Fit the S and A grids");
  train->add_option("--data", ta.data, "Labeled dataset file(s)")->check(CLI::ExistingFile);
  train->add_option("--synthetic-hits", ta.synthetic_hits, "Train on synthetic sessions, this many per cell");
  train->add_option("--synthetic-noise", ta.synthetic_noise, "Gaussian MOS noise for synthetic sessions");
  train->add_option("--out", ta.out, "Model file to write");
  train->add_option("--report", ta.report, "Training report (JSON) to write");
  train->add_option("--lambda", ta.lambda, "Smoothness weight")->capture_default_str();
  train->add_option("--constraints", ta.constraints, "Only these constraint families, e.g. S1,S2");
  train->add_option("--cv-lambdas", ta.cv_lambdas, "Pick lambda by validation loss over a list or lo..hi range");
  train->add_option("--cv-split", ta.cv_split, "Training fraction for cross-validation")->capture_default_str();
  train->add_option("--lambda-sweep", ta.lambda_sweep, "Sweep lambda over lo..hi (decades) or a list");
  train->add_option("--bin-sweep", ta.bin_sweep, "Sweep N over a list, e.g. 5,10,20");
  train->add_option("--sweep-out", ta.sweep_out, "CSV for sweep output (stdout if omitted)");
  ta.grid.add(train);
  ta.solver.add(train);

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Score a session or every session of a dataset");
  predict->add_option("--model", pa.model, "Model file")->required()->check(CLI::ExistingFile);
  predict->add_option("--session", pa.session, "Session log")->check(CLI::ExistingFile);
  predict->add_option("--dataset", pa.dataset, "Dataset file")->check(CLI::ExistingFile);
  predict->add_option("--out", pa.out, "Output file (stdout if omitted)");
  predict->add_flag("--no-first-chunk-adaptation", pa.no_first_chunk_adaptation,
                    "Skip the adaptation term against the initial expectation on the first chunk");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit-baselines", "Fit the classic parametric models");
  fit->add_option("--data", fa.data, "Labeled dataset file(s)")->required()->check(CLI::ExistingFile);
  fit->add_option("--only", fa.only, "Comma-separated subset of baseline names");
  fit->add_option("--out", fa.out, "Registry file (stdout if omitted)");

  EvalArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "Correlation tables and significance matrix");
  evaluate->add_option("--model", ea.models, "KSQI model file(s)")->check(CLI::ExistingFile);
  evaluate->add_option("--baselines", ea.baselines, "Baseline registry")->check(CLI::ExistingFile);
  evaluate->add_option("--data", ea.data, "Labeled dataset file(s)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out-dir", ea.out_dir, "Directory for plcc/srcc/krcc/significance CSVs");
  evaluate->add_option("--confidence", ea.confidence, "F-test confidence")->capture_default_str();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synthesize", "Best-case session for a QoE model on a trace");
  synth->add_option("--ladder", sa.ladder, "Bitrate ladder (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--trace", sa.trace, "Throughput trace (timestamp_s throughput_bps)")
      ->required()
      ->check(CLI::ExistingFile);
  synth->add_option("--objective", sa.objective, "ksqi, bitrate-linear or baseline:NAME")->capture_default_str();
  synth->add_option("--model", sa.model, "KSQI model file")->check(CLI::ExistingFile);
  synth->add_option("--baselines", sa.baselines, "Baseline registry")->check(CLI::ExistingFile);
  synth->add_option("--policy", sa.policy, "dp, brute-force, greedy or fixed:N")->capture_default_str();
  synth->add_option("--buffer-capacity", sa.player.buffer_capacity, "Seconds")->capture_default_str();
  synth->add_option("--startup-threshold", sa.startup, "Seconds (default one segment)");
  synth->add_option("--buffer-quantum", sa.player.buffer_quantum, "DP discretization step")->capture_default_str();
  synth->add_flag("--serial", sa.serial, "Expand DP stages on one thread");
  synth->add_option("--out", sa.out, "Output file (stdout if omitted)");

  RankArgs ra;
  auto* rank = app.add_subcommand("rank", "Scale pairwise preferences into global scores");
  rank->add_option("--pairs", ra.pairs, "CSV of model_i,model_j,wins_i,trials")->required()->check(CLI::ExistingFile);
  rank->add_option("--tol", ra.tol, "Gradient tolerance")->capture_default_str();
  rank->add_option("--out", ra.out, "Ranking CSV (stdout if omitted)");
  rank->add_option("--preference-out", ra.preference_out, "Fitted preference probabilities CSV");

  ConstraintArgs ca;
  auto* cons = app.add_subcommand("constraints", "Export a constraint system as sparse triplets");
  ca.grid.add(cons);
  cons->add_option("--kind", ca.kind, "rebuffering or adaptation")->capture_default_str();
  cons->add_option("--only", ca.only, "Constraint families to include");
  cons->add_option("--out", ca.out, "Output file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error(g, "usage", e.what());
    return kExitValidation;
  }

  try {
    if (*train) return run_train(ta, g);
    if (*predict) return run_predict(pa);
    if (*fit) return run_fit_baselines(fa, g);
    if (*evaluate) return run_evaluate(ea, g);
    if (*synth) return run_synthesize(sa);
    if (*rank) return run_rank(ra);
    if (*cons) return run_constraints(ca);
  } catch (const ComputationError& e) {
    report_error(g, e.kind(), e.what());
    return kExitComputation;
  } catch (const Error& e) {
    report_error(g, e.kind(), e.what());
    return kExitValidation;
  }
  return 0;
}
