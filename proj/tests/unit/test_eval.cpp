#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "mfrpinp/error.hpp"
#include "mfrpinp/eval/config.hpp"
#include "mfrpinp/eval/metrics.hpp"
#include "mfrpinp/io/csv.hpp"
#include "mfrpinp/rng.hpp"

using namespace mfrpinp;
using namespace mfrpinp::eval;

namespace {

const std::filesystem::path kData = MFRPINP_TEST_DATA;

std::vector<StateVector> random_rows(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<StateVector> v(n);
  for (auto& r : v)
    for (double& x : r) x = rng.uniform(lo, hi);
  return v;
}

learn::PredictionLog read_log(const std::filesystem::path& p) {
  std::ifstream in(p);
  return learn::read_predictions(in);
}

}  // namespace

TEST_CASE("rmse examples") {
  const std::vector<StateVector> y{{0.3, -1, 2, 0, 5, 1}};
  CHECK(rmse(y, y) == 0.0);
  CHECK(rmse(std::vector<StateVector>{{1, 1, 1, 1, 1, 1}},
             std::vector<StateVector>{{0, 0, 0, 0, 0, 0}}) ==
        doctest::Approx(std::sqrt(6.0)).epsilon(1e-15));
  CHECK(rmse(std::vector<StateVector>{{1, 0, 0, 0, 0, 0}, {0, 1, 0, 0, 0, 0}},
             std::vector<StateVector>{{}, {}}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(rmse(y, std::vector<StateVector>{}), ShapeError);
  CHECK_THROWS_AS(rmse(std::vector<StateVector>{}, std::vector<StateVector>{}), InvalidArgument);

  // heading errors across the branch cut are short
  const std::vector<StateVector> a{{0, 0, std::numbers::pi - 0.01, 0, 0, 0}};
  const std::vector<StateVector> b{{0, 0, -std::numbers::pi + 0.01, 0, 0, 0}};
  CHECK(rmse(a, b) == doctest::Approx(0.02).epsilon(1e-9));
}

TEST_CASE("rmse matches a direct recomputation") {
  Rng rng(3);
  const auto y = random_rows(rng, 50, -1, 1), m = random_rows(rng, 50, -1, 1);
  double s = 0.0;
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 6; ++j) s += (y[i][j] - m[i][j]) * (y[i][j] - m[i][j]);
  CHECK(rmse(y, m) == doctest::Approx(std::sqrt(s / 50)).epsilon(1e-13));
}

TEST_CASE("nll examples") {
  const std::vector<StateVector> y{{1, 2, 0.5, -1, 0, 3}, {0, 0, 0, 0, 0, 0}};
  const std::vector<StateVector> one(2, StateVector{1, 1, 1, 1, 1, 1});
  CHECK(nll(y, y, one) == doctest::Approx(3.0 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
  const double v = 1.0 / (2.0 * std::numbers::pi);
  const std::vector<StateVector> small(2, StateVector{v, v, v, v, v, v});
  CHECK(std::abs(nll(y, y, small)) < 1e-14);

  // shrinking the variance below the residual scale increases the NLL
  std::vector<StateVector> mu = y;
  for (auto& r : mu)
    for (double& x : r) x += 0.5;
  double last = -1e300;
  for (double s : {0.5, 0.3, 0.1, 0.03, 0.01}) {
    const std::vector<StateVector> var(2, StateVector{s * s, s * s, s * s, s * s, s * s, s * s});
    const double n = nll(y, mu, var);
    CHECK(n > last);
    last = n;
  }
  std::vector<StateVector> bad = one;
  bad[1][4] = 0.0;
  CHECK_THROWS_AS(nll(y, y, bad), NumericError);
}

TEST_CASE("nll matches a direct recomputation") {
  Rng rng(4);
  const auto y = random_rows(rng, 40, -1, 1), m = random_rows(rng, 40, -1, 1);
  const auto v = random_rows(rng, 40, 0.01, 2);
  double s = 0.0;
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      s += 0.5 * (std::log(2 * std::numbers::pi * v[i][j]) +
                  (y[i][j] - m[i][j]) * (y[i][j] - m[i][j]) / v[i][j]);
  CHECK(nll(y, m, v) == doctest::Approx(s / 40).epsilon(1e-13));
}

TEST_CASE("coverage and percentiles") {
  const std::vector<StateVector> y{{0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 0, 0}};
  const std::vector<StateVector> mu{{0.5, 2, 0, 0, 0, 0}, {1.5, 0, 0, 0, 0, 0}};
  const std::vector<StateVector> sig(2, StateVector{1, 1, 1, 1, 1, 1});
  const StateVector c = coverage(y, mu, sig);
  CHECK(c[0] == 0.5);
  CHECK(c[1] == 0.5);
  CHECK(c[2] == 1.0);

  std::vector<double> v;
  for (int i = 100; i >= 1; --i) v.push_back(i);
  CHECK(percentile(v, 50) == 50);
  CHECK(percentile(v, 99) == 99);
  CHECK(percentile(v, 100) == 100);
  CHECK(percentile({7.0}, 99) == 7.0);
  CHECK_THROWS_AS(percentile({}, 50), InvalidArgument);
  CHECK_THROWS_AS(percentile(v, 0), InvalidArgument);
  const Latency l = latency_summary(v);
  CHECK(l.p95 == 95);
  CHECK(l.max == 100);
}

TEST_CASE("golden file recomputation") {
  const learn::PredictionLog p = read_log(kData / "golden_predictions.csv");
  const ukf::FusionResult labels = ukf::read_fused((kData / "golden_labels.csv").string());
  REQUIRE(p.t.size() == 10);
  const MetricsReport r = evaluate(p, labels.t, labels.states);

  std::ifstream in(kData / "golden_expected.csv");
  io::CsvReader csv(in);
  std::map<std::string, double> expected;
  while (csv.next()) expected[std::string(csv.field(0))] = csv.number(1);
  CHECK(std::abs(r.rmse - expected.at("rmse")) < 1e-10);
  CHECK(std::abs(r.nll - expected.at("nll")) < 1e-10);
  for (std::size_t j = 0; j < 6; ++j)
    CHECK(r.coverage[j] == expected.at(std::string("coverage_") + learn::kStateColumns[j]));
  CHECK(r.samples == 10);
  CHECK(r.nll_raw == r.nll);  // no raw columns: raw sigma reads as the given sigma
}

TEST_CASE("evaluate on a labels file") {
  const learn::PredictionLog p = read_log(kData / "golden_predictions.csv");
  const ukf::FusionResult labels = ukf::read_fused((kData / "golden_labels.csv").string());

  SUBCASE("predictions equal to labels score zero") {
    learn::PredictionLog same = p;
    for (std::size_t i = 0; i < same.t.size(); ++i) same.mu[i] = labels.states[i].to_array();
    const MetricsReport r = evaluate(same, labels.t, labels.states);
    CHECK(r.rmse == 0.0);
    for (double c : r.coverage) CHECK(c == 1.0);
  }
  SUBCASE("tail keeps the last rows") {
    const MetricsReport r = evaluate(p, labels.t, labels.states, 0.2);
    CHECK(r.samples == 2);
    CHECK(r.skipped == 8);
    learn::PredictionLog last = p;
    for (auto* v : {&last.mu, &last.sigma}) v->erase(v->begin(), v->begin() + 8);
    last.t.erase(last.t.begin(), last.t.begin() + 8);
    CHECK(evaluate(last, labels.t, labels.states).rmse == r.rmse);
    CHECK_THROWS_AS(evaluate(p, labels.t, labels.states, 0.0), InvalidArgument);
  }
  SUBCASE("unmatched times are rejected") {
    learn::PredictionLog off = p;
    off.t[3] += 1e-3;
    CHECK_THROWS_AS(evaluate(off, labels.t, labels.states), ParseError);
  }
  SUBCASE("evaluation is repeatable to the byte") {
    MetricsReport a = evaluate(p, labels.t, labels.states);
    MetricsReport b = evaluate(p, labels.t, labels.states);
    CHECK(a.to_json() == b.to_json());
  }
  SUBCASE("predictions without sigma still give rmse") {
    learn::PredictionLog bare = p;
    bare.has_sigma = false;
    bare.sigma.clear();
    const MetricsReport r = evaluate(bare, labels.t, labels.states);
    CHECK(r.rmse == evaluate(p, labels.t, labels.states).rmse);
    CHECK(std::isnan(r.nll));
  }
}

TEST_CASE("reports and comparisons") {
  MetricsReport a;
  a.samples = 12;
  a.rmse = 0.25;
  a.nll = -1.5;
  a.nll_raw = std::numeric_limits<double>::quiet_NaN();
  a.coverage = {0.9, 0.8, 0.7, 0.6, 0.5, 1.0};
  a.has_latency = true;
  a.latency = {0.4, 0.5, 0.9, 1.2};
  a.dataset_hash = "abc";
  a.config_hash = "def";
  const MetricsReport back = MetricsReport::from_json(a.to_json());
  CHECK(back.to_json() == a.to_json());
  CHECK(std::isnan(back.nll_raw));
  CHECK(back.latency.p99 == 0.9);
  CHECK_THROWS_AS(MetricsReport::from_json("{\"rmse\": 1}"), ParseError);
  CHECK_THROWS_AS(MetricsReport::from_json("not json"), ParseError);

  const Comparison same = compare(a, a);
  for (std::size_t i = 0; i < same.metric.size(); ++i)
    if (!std::isnan(same.a[i])) CHECK(same.delta(i) == 0.0);
  MetricsReport b = a;
  b.rmse = 0.5;
  const Comparison c = compare(a, b);
  CHECK(c.metric[1] == "rmse");
  CHECK(c.delta(1) == 0.25);
  std::ostringstream csv;
  write_comparison_csv(c, csv);
  CHECK(csv.str().rfind("metric,a,b,delta\n", 0) == 0);
  CHECK(csv.str().find("rmse,0.25,0.5,0.25\n") != std::string::npos);
  b.dataset_hash = "xyz";
  CHECK_THROWS_AS(compare(a, b), InvalidArgument);
}

TEST_CASE("sha256 test vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("run config text") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());

  SUBCASE("canonical text round trips") {
    c.set("model.width", "48");
    c.set("sim.disturbance_sigma", "0.1, 0.1, 0.1, 1, 1, 1");
    c.set("sim.disturbance", "false");
    c.set("loop.alpha", "0.2");
    std::istringstream in(c.to_text());
    RunConfig d;
    d.apply(in);
    CHECK(d.to_text() == c.to_text());
    CHECK(d.hash() == c.hash());
    CHECK(d.loop.model.width == 48);
    CHECK(d.sim.disturbance.is_none() == false);
    CHECK(d.sim.disturbance.kind == sim::DisturbanceKind::none);
    CHECK(d.loop.alpha == 0.2);
    CHECK(c.hash() != RunConfig{}.hash());
  }
  SUBCASE("comments, blanks and defaults") {
    std::istringstream in("# a comment\n\nrun.seed = 9   # trailing\n  train.low_batch=8\n");
    c.apply(in);
    CHECK(c.seed == 9);
    CHECK(c.loop.train.low_batch == 8);
    CHECK(c.loop.train.high_batch == 32);
    CHECK(c.keys().size() == 69);
  }
  SUBCASE("unknown keys and bad values are rejected") {
    CHECK_THROWS_AS(c.set("model.widht", "3"), ConfigError);
    CHECK_THROWS_AS(c.set("model.width", "-3"), ConfigError);
    CHECK_THROWS_AS(c.set("loop.alpha", "0.1x"), ConfigError);
    CHECK_THROWS_AS(c.set("loop.concurrent", "yes"), ConfigError);
    CHECK_THROWS_AS(c.set("ukf.process_noise", "1,2,3"), ConfigError);
    CHECK_THROWS_AS(c.set("ukf.process_noise", "1,2,3,4,5,6,7"), ConfigError);
    std::istringstream in("run.seed = 1\nnot a pair\n");
    try {
      c.apply(in);
      FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("validation maps to config errors") {
    c.set("model.width", "0");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    RunConfig d;
    d.set("run.scenario", "spiral");
    CHECK_THROWS_AS(d.validate(), ConfigError);
  }
  SUBCASE("derived settings") {
    c.set("ukf.use_imu", "false");
    c.set("sim.noise_encoder", "0.1");
    const ukf::UkfConfig f = c.filter();
    CHECK_FALSE(f.use_imu);
    CHECK(f.wheel_speed_sigma ==
          ukf::UkfConfig::from_noise(c.sim.noise, c.physics).wheel_speed_sigma);
    const learn::LoopConfig l = c.loop_config();
    CHECK(l.warmup_sim.noise.encoder == 0.1);
    CHECK_FALSE(l.warmup_filter.use_imu);
    CHECK(c.profile().name == "figure-eight");
  }
}

TEST_CASE("manifest reproduces the config") {
  const auto dir = std::filesystem::temp_directory_path() / "mfrpinp_manifest_test";
  std::filesystem::remove_all(dir);
  RunConfig c;
  c.set("run.seed", "5");
  write_manifest(dir, c, {{"dataset", "00ff"}}, {"mfrpinp", "run"});
  RunConfig back;
  back.apply_file(dir / "config.txt");
  CHECK(back.hash() == c.hash());
  std::ifstream in(dir / "manifest.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j.at("config_hash") == c.hash());
  CHECK(j.at("seed") == 5);
  CHECK(j.at("inputs").at("dataset") == "00ff");
  std::filesystem::remove_all(dir);
}
