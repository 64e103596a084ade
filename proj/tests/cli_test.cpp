#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "json.hpp"
#include "ksqi/grid.hpp"
#include "ksqi/model.hpp"
#include "ksqi/predict.hpp"
#include "ksqi/robustness.hpp"
#include "ksqi/session.hpp"
#include "ksqi/synth.hpp"

namespace ksqi {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliRun {
  int code = 0;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(KSQI_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  CliRun r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ksqi_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    write_text_file(path(name), text);
    return path(name);
  }
  std::string train_model(const std::string& name) const {
    const CliRun r = run("--seed 5 train --synthetic-hits 1 --n-steps 5 --out " + path(name));
    EXPECT_EQ(r.code, 0) << r.out;
    return path(name);
  }

  fs::path dir_;
};

std::string ladder_json() {
  BitrateLadder l;
  l.segment_duration = 2.0;
  const double kbps[3] = {600.0, 1500.0, 3000.0}, quality[3] = {45.0, 68.0, 86.0};
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> jitter(0.85, 1.15);
  for (int r = 0; r < 3; ++r) {
    Representation rep;
    for (int s = 0; s < 5; ++s) {
      rep.segment_bytes.push_back(std::round(kbps[r] * 1000.0 * 2.0 / 8.0 * jitter(rng)));
      rep.quality.push_back(quality[r] + 4.0 * (jitter(rng) - 1.0));
    }
    l.representations.push_back(rep);
  }
  return serialize_ladder(l);
}

std::string trace_text() {
  std::ostringstream out;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.4e6, 3.2e6);
  for (int k = 0; k < 200; ++k) out << k * 0.5 << " " << u(rng) << "\n";
  return out.str();
}

TEST_F(Cli, TrainingIsReproducible) {
  const std::string a = path("a.json"), b = path("b.json");
  for (const std::string& out : {a, b}) {
    const CliRun r = run("--seed 3 train --synthetic-hits 2 --synthetic-noise 1.5 --n-steps 6 --out " + out +
                      " --report " + out + ".report");
    ASSERT_EQ(r.code, 0) << r.out;
  }
  EXPECT_EQ(read_text_file(a), read_text_file(b));
  EXPECT_EQ(read_text_file(a + ".report"), read_text_file(b + ".report"));
  const json report = json::parse(read_text_file(a + ".report"));
  EXPECT_EQ(report["feasibility_full_systems"]["rebuffering"]["violations"], 0);
  EXPECT_EQ(report["feasibility_full_systems"]["adaptation"]["violations"], 0);
  EXPECT_EQ(report["model_hash"], model_hash(deserialize_model(read_text_file(a))));
}

TEST_F(Cli, LambdaSweepWritesDeterministicTable) {
  const std::string args = "train --synthetic-hits 1 --n-steps 4 --lambda-sweep 0.01..100 --out " + path("m.json") +
                           " --report " + path("r.json") + " --sweep-out ";
  ASSERT_EQ(run(args + path("s1.csv")).code, 0);
  ASSERT_EQ(run(args + path("s2.csv")).code, 0);
  const std::string csv = read_text_file(path("s1.csv"));
  EXPECT_EQ(csv, read_text_file(path("s2.csv")));
  EXPECT_EQ(csv.rfind("lambda,n_steps,validation_loss,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  const json report = json::parse(read_text_file(path("r.json")));
  EXPECT_EQ(report["lambda"], report["cross_validation"]["best_lambda"]);
}

TEST_F(Cli, ConstantSessionPredictsItsQuality) {
  const std::string model = train_model("m.json");
  const std::string session = write(
      "s.json", R"({"initial_buffering_s": 0, "chunks": [{"quality": 80, "duration_s": 2},
                   {"quality": 80, "duration_s": 2}, {"quality": 80, "duration_s": 2}]})");
  const CliRun r = run("predict --model " + model + " --session " + session);
  ASSERT_EQ(r.code, 0) << r.out;
  const json doc = json::parse(r.out);
  EXPECT_NEAR(doc["final_score"].get<double>(), 80.0, 1e-6);
  for (const auto& q : doc["per_chunk_q"]) EXPECT_NEAR(q.get<double>(), 80.0, 1e-6);
}

TEST_F(Cli, EvaluateOnPerfectPredictions) {
  const std::string model = train_model("m.json");
  const KsqiModel m = deserialize_model(read_text_file(model));
  SyntheticOptions so;
  so.seed = 4;
  const TrainingSet ts = synthesize_training_set(m.s_grid, m.a_grid, so);
  Dataset ds;
  ds.name = "mirror";
  for (const auto* group : {&ts.rebuffer_sessions, &ts.adaptation_sessions}) {
    for (Session s : *group) {
      s.mos = session_qoe(m, s).final_score;
      ds.sessions.push_back(s);
    }
  }
  const std::string data = write("d.json", serialize_dataset(ds));
  const CliRun r = run("evaluate --model " + model + " --data " + data + " --out-dir " + dir_.string());
  ASSERT_EQ(r.code, 0) << r.out;
  for (const std::string table : {"plcc.csv", "srcc.csv"}) {
    std::istringstream in(read_text_file(path(table)));
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(row.rfind("KSQI,", 0), 0u) << row;
    EXPECT_NEAR(std::stod(row.substr(5)), 1.0, 1e-9) << table;
  }
  EXPECT_TRUE(fs::exists(path("krcc.csv")));
  EXPECT_TRUE(fs::exists(path("significance.csv")));
}

TEST_F(Cli, AllHalfPairsRankAtZero) {
  const std::string pairs = write("p.csv", "model_i,model_j,wins_i,trials\nA,B,5,10\nB,C,5,10\nA,C,5,10\n");
  const CliRun r = run("rank --pairs " + pairs + " --preference-out " + path("pref.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out, "rank,model,mu\n1,A,0\n2,B,0\n3,C,0\n# clipped cells: 0\n");
  EXPECT_EQ(read_text_file(path("pref.csv")), "model,A,B,C\nA,0.5,0.5,0.5\nB,0.5,0.5,0.5\nC,0.5,0.5,0.5\n");
}

TEST_F(Cli, DynamicProgrammingMatchesBruteForce) {
  const std::string ladder = write("ladder.json", ladder_json()), trace = write("trace.txt", trace_text());
  for (const std::string objective : {"bitrate-linear", "ksqi"}) {
    const std::string common = "synthesize --ladder " + ladder + " --trace " + trace + " --objective " + objective +
                               (objective == "ksqi" ? " --model " + train_model("m.json") : std::string());
    const CliRun dp = run(common + " --policy dp"), bf = run(common + " --policy brute-force");
    ASSERT_EQ(dp.code, 0) << dp.out;
    ASSERT_EQ(bf.code, 0) << bf.out;
    const json a = json::parse(dp.out), b = json::parse(bf.out);
    EXPECT_EQ(a["choices"], b["choices"]) << objective;
    EXPECT_NEAR(a["score"].get<double>(), b["score"].get<double>(), 1e-9) << objective;
    EXPECT_EQ(dp.out, run(common + " --policy dp --serial").out);
    const json g = json::parse(run(common + " --policy greedy").out);
    EXPECT_GE(a["score"].get<double>(), g["score"].get<double>() - 1e-9);
  }
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("rank --pairs " + path("missing.csv")).code, 2);
  EXPECT_EQ(run("rank --pairs " + write("p.csv", "a,b,x,10\n")).code, 2);
  EXPECT_EQ(run("rank --pairs " + write("q.csv", "a,b,5,10\nc,d,5,10\n")).code, 2);
  EXPECT_EQ(run("rank --pairs " + write("r.csv", "a,b,5,10\n") + " --out " + path("nodir/x.csv")).code, 2);

  const CliRun bad = run("--error-format json predict --model " + write("m.json", "{\"grid\": ") + " --session " +
                      write("s.json", "{}"));
  EXPECT_EQ(bad.code, 2);
  const json err = json::parse(bad.out);
  EXPECT_EQ(err["error"]["kind"], "parse");
  EXPECT_FALSE(err["error"]["message"].get<std::string>().empty());

  const std::string ladder = write("ladder.json", ladder_json());
  const CliRun exhausted = run("--error-format json synthesize --objective bitrate-linear --ladder " + ladder +
                            " --trace " + write("t.txt", "0 1000\n1 1000\n"));
  EXPECT_EQ(exhausted.code, 3) << exhausted.out;
  EXPECT_EQ(json::parse(exhausted.out)["error"]["kind"], "computation");
}

TEST_F(Cli, ConstraintExportMatchesLibrary) {
  const CliRun r = run("constraints --n-steps 4 --kind adaptation --out " + path("c.txt"));
  ASSERT_EQ(r.code, 0) << r.out;
  const GridSpec spec{4, 100.0, 10.0};
  EXPECT_EQ(read_text_file(path("c.txt")),
            export_triplets(build_constraints(GridKind::Adaptation, spec, all_adaptation_constraints())));
}

}  // namespace
}  // namespace ksqi
