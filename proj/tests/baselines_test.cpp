#include <random>

#include <gtest/gtest.h>

#include "ksqi/baselines.hpp"

namespace ksqi {
namespace {

Session make_session(const std::vector<double>& quality, double stall_at_two = 0.0) {
  Session s;
  for (double q : quality) s.chunks.push_back(Chunk{q, 0.0, 4.0, 500.0 + 40.0 * q, 40.0 - 0.3 * q});
  if (s.chunks.size() > 2) s.chunks[2].rebuffering_before = stall_at_two;
  return s;
}

Dataset random_dataset(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> q(10.0, 95.0), tau(0.0, 6.0), coin(0.0, 1.0);
  Dataset ds;
  ds.name = "random";
  for (std::size_t m = 0; m < n; ++m) {
    std::vector<double> qualities;
    const double base = q(rng);
    for (int c = 0; c < 6; ++c) qualities.push_back(coin(rng) < 0.6 ? base : q(rng));
    Session s = make_session(qualities, coin(rng) < 0.7 ? tau(rng) : 0.0);
    s.initial_buffering = coin(rng) < 0.5 ? tau(rng) / 2 : 0.0;
    s.mos = 0.0;
    ds.sessions.push_back(s);
  }
  return ds;
}

TEST(PredictBaseline, ZeroCoefficientsGiveZero) {
  const Session s = make_session({40, 60, 60, 80}, 2.0);
  for (const BaselineSpec& spec : standard_baselines()) {
    if (spec.presentation == PresentationTerm::IdentityVqa) continue;
    FittedBaseline f{spec, {}, {}};
    for (const std::string& name : spec.coefficient_names()) f.coefficients[name] = 0.0;
    EXPECT_EQ(predict_baseline(f, s), 0.0) << spec.name;
  }
}

TEST(PredictBaseline, HandArithmeticExamples) {
  FittedBaseline lin{{"linear", PresentationTerm::LinearVqa, RebufferTerm::Linear, SwitchingTerm::Linear},
                     {{"intercept", 0.0}, {"presentation", 1.0}, {"rebuffer", -1.0}, {"switching", -1.0}},
                     {}};
  Session s;
  s.chunks = {Chunk{75, 0, 4, {}, {}}, Chunk{70, 0, 4, {}, {}}, Chunk{65, 1.5, 4, {}, {}}};
  s.initial_buffering = 0.5;  // mean 70, tau_total 2, switches 10
  EXPECT_DOUBLE_EQ(predict_baseline(lin, s), 58.0);

  FittedBaseline ftw{find_baseline("FTW"), {{"alpha", 3.5}, {"beta", 0.15}, {"gamma", 1.5}}, {}};
  EXPECT_DOUBLE_EQ(predict_baseline(ftw, make_session({50, 50, 50})), 5.0);
  EXPECT_DOUBLE_EQ(predict_baseline(ftw, make_session({50, 50, 50}, 2.0)), 3.5 * std::exp(-0.3) + 1.5);
}

TEST(PredictBaseline, MissingFeatureNamesSpec) {
  Session s = make_session({50, 60, 70});
  s.chunks[1].bitrate_kbps.reset();
  FittedBaseline f{find_baseline("Liu2012"), {{"intercept", 0}, {"presentation", 1}, {"rebuffer", -1}}, {}};
  try {
    predict_baseline(f, s);
    FAIL() << "expected missing feature";
  } catch (const MissingFeatureError& e) {
    EXPECT_NE(std::string(e.what()).find("Liu2012"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bitrate_kbps"), std::string::npos);
  }
  s.chunks[1].qp.reset();
  EXPECT_THROW(baseline_features(find_baseline("Xue2014"), s), MissingFeatureError);
  EXPECT_NO_THROW(baseline_features(find_baseline("Bentaleb2016"), s));
}

TEST(FitBaseline, RecoversLinearGenerator) {
  Dataset ds = random_dataset(61, 80);
  for (const char* name : {"Mok2011", "Liu2012", "Xue2014", "Yin2015", "Spiteri2016", "Bentaleb2016", "SQI"}) {
    const BaselineSpec spec = find_baseline(name);
    FittedBaseline truth{spec, {}, {}};
    double v = 0.7;
    for (const std::string& c : spec.coefficient_names()) truth.coefficients[c] = (v = -1.3 * v + 0.4);
    for (Session& s : ds.sessions) s.mos = predict_baseline(truth, s);
    const FittedBaseline fit = fit_baseline(spec, ds);
    for (const auto& [c, value] : truth.coefficients) {
      EXPECT_NEAR(fit.coefficients.at(c), value, 1e-9 * std::max(1.0, std::abs(value))) << name << " " << c;
    }
    EXPECT_LE(fit.fit.mse, 1e-18);
  }
}

TEST(FitBaseline, RecoversExponentialGenerator) {
  Dataset ds = random_dataset(62, 60);
  FittedBaseline truth{find_baseline("FTW"), {{"alpha", 3.5}, {"beta", 0.15}, {"gamma", 1.5}}, {}};
  for (Session& s : ds.sessions) s.mos = predict_baseline(truth, s);
  const FittedBaseline fit = fit_baseline(truth.spec, ds, 7);
  for (const auto& [c, value] : truth.coefficients) EXPECT_NEAR(fit.coefficients.at(c), value, 1e-6) << c;
  const FittedBaseline again = fit_baseline(truth.spec, ds, 7);
  EXPECT_EQ(fit.coefficients, again.coefficients);
}

TEST(FitBaseline, ConstantMosAndDuplication) {
  Dataset ds = random_dataset(63, 40);
  for (Session& s : ds.sessions) s.mos = 42.0;
  const FittedBaseline f = fit_baseline(find_baseline("Yin2015"), ds);
  EXPECT_NEAR(f.coefficients.at("intercept"), 42.0, 1e-9);
  for (const char* c : {"presentation", "rebuffer", "switching"}) EXPECT_NEAR(f.coefficients.at(c), 0.0, 1e-9);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(60.0, 10.0);
  for (Session& s : ds.sessions) s.mos = g(rng);
  Dataset twice = ds;
  twice.sessions.insert(twice.sessions.end(), ds.sessions.begin(), ds.sessions.end());
  for (const BaselineSpec& spec : standard_baselines()) {
    const FittedBaseline a = fit_baseline(spec, ds), b = fit_baseline(spec, twice);
    for (const auto& [c, value] : a.coefficients) {
      EXPECT_NEAR(b.coefficients.at(c), value, 1e-8 * std::max(1.0, std::abs(value))) << spec.name << " " << c;
    }
  }
}

TEST(FitBaseline, RankDeficiencyNamesColumns) {
  Dataset ds = random_dataset(64, 20);
  for (Session& s : ds.sessions) {
    for (Chunk& c : s.chunks) c.rebuffering_before = 0.0;
    s.initial_buffering = 0.0;
    s.mos = 50.0;
  }
  try {
    fit_baseline(find_baseline("Bentaleb2016"), ds);
    FAIL() << "expected rank deficiency";
  } catch (const ComputationError& e) {
    EXPECT_NE(std::string(e.what()).find("rebuffer"), std::string::npos) << e.what();
  }
}

TEST(FitBaseline, NeverWorseThanZeroModelAndAdditive) {
  Dataset ds = random_dataset(65, 70);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(60.0, 15.0);
  for (Session& s : ds.sessions) s.mos = g(rng);
  for (const BaselineSpec& spec : standard_baselines()) {
    const FittedBaseline f = fit_baseline(spec, ds);
    EXPECT_LE(f.fit.mse, f.fit.zero_model_mse) << spec.name;
    if (spec.switching == SwitchingTerm::None) continue;
    FittedBaseline no_switch = f;
    no_switch.coefficients["switching"] = 0.0;
    const Session& s = ds.sessions[3];
    EXPECT_NEAR(predict_baseline(f, s) - predict_baseline(no_switch, s),
                f.coefficients.at("switching") * baseline_features(spec, s).switching, 1e-12)
        << spec.name;
  }
}

TEST(SqiBaseline, Examples) {
  const Session clean = make_session({30, 50, 70});
  EXPECT_DOUBLE_EQ(sqi_baseline(clean), 50.0);
  Session high = make_session({90, 90, 40}, 3.0), low = make_session({20, 20, 40}, 3.0);
  const double high_penalty = sqi_baseline(high) - (220.0 / 3.0);
  const double low_penalty = sqi_baseline(low) - (80.0 / 3.0);
  EXPECT_LT(high_penalty, low_penalty);
  EXPECT_LT(low_penalty, 0.0);
  Session zero = make_session({30, 50, 70}, 0.0);
  EXPECT_DOUBLE_EQ(sqi_baseline(zero), 50.0);
}

TEST(Registry, RoundTrip) {
  Dataset ds = random_dataset(66, 40);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(60.0, 15.0);
  for (Session& s : ds.sessions) s.mos = g(rng);
  std::vector<FittedBaseline> all;
  for (const BaselineSpec& spec : standard_baselines()) all.push_back(fit_baseline(spec, ds));
  const std::vector<FittedBaseline> back = parse_registry(serialize_registry(all));
  ASSERT_EQ(back.size(), all.size());
  for (std::size_t k = 0; k < all.size(); ++k) {
    EXPECT_EQ(back[k].spec, all[k].spec);
    EXPECT_EQ(back[k].coefficients, all[k].coefficients);
  }
  EXPECT_THROW(parse_registry("{\"format\": \"ksqi-baselines\", \"version\": 1, \"models\": [{\"name\": \"x\"}]}"),
               ParseError);
}

}  // namespace
}  // namespace ksqi
