#include <cmath>

#include "anonle/errors.hpp"
#include "anonle/harness.hpp"
#include "doctest.h"

using namespace anonle;
using namespace anonle::harness;

TEST_CASE("two-point fit is the exact slope") {
  auto fit = scaling_fit({{64, 100}, {256, 200}});
  CHECK(fit.exponent == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fit.r2 == doctest::Approx(1.0));
}

TEST_CASE("constant series fits exponent zero") {
  auto fit = scaling_fit({{8, 5}, {16, 5}, {32, 5}});
  CHECK(fit.exponent == doctest::Approx(0.0));
}

TEST_CASE("fit recovers a power law") {
  std::vector<std::pair<double, double>> pts;
  for (double n : {10.0, 20.0, 40.0, 80.0}) pts.emplace_back(n, 3.0 * std::pow(n, 1.7));
  auto fit = scaling_fit(pts);
  CHECK(fit.exponent == doctest::Approx(1.7).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("fit rejects degenerate input") {
  CHECK_THROWS_AS(scaling_fit({{64, 100}}), InvalidParameter);
  CHECK_THROWS_AS(scaling_fit({{64, 100}, {128, 0}}), InvalidParameter);
  CHECK_THROWS_AS(scaling_fit({{-1, 100}, {128, 3}}), InvalidParameter);
  CHECK_THROWS_AS(scaling_fit({{64, 100}, {64, 200}}), InvalidParameter);
}

TEST_CASE("fit from CSV averages per size") {
  std::string csv = "n,messages\n64,90\n64,110\n256,200\n";
  auto fit = fit_csv(csv);
  CHECK(fit.exponent == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(fit_csv("n,bits\n1,2\n"), ParseError);
}

TEST_CASE("spec parsing and validation") {
  auto spec = parse_spec(R"(
[experiment]
protocol = known_n
family = regular4
sizes = 16, 32
trials = 3
seed_base = 10

[known_n]
c = 2
)");
  CHECK(spec.protocol == Protocol::known_n);
  CHECK(spec.sizes == std::vector<std::size_t>{16, 32});
  CHECK(spec.trials == 3);
  CHECK(spec.seed_base == 10);
  CHECK(spec.graph_seed == 10);
  CHECK(spec.c == 2);

  try {
    parse_spec("[experiment]\nsizes = 8\ntrials = 0\n");
    FAIL("trials=0 accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  try {
    parse_spec("[experiment]\nsizes = 8\n\n[known_n]\nbogus = 1\n");
    FAIL("unknown key accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
  }
  CHECK_THROWS_AS(parse_spec("[experiment]\nsizes = 8, x\n"), ParseError);
  CHECK_THROWS_AS(parse_spec("[experiment]\nprotocol = other\nsizes = 8\n"), ParseError);
  CHECK_THROWS_AS(parse_spec("[experiment\n"), ParseError);
  ExperimentSpec empty;
  CHECK_THROWS_AS(validate(empty), InvalidParameter);
}

TEST_CASE("experiments are reproducible row for row") {
  ExperimentSpec spec;
  spec.family = "cycle";
  spec.sizes = {8, 16};
  spec.trials = 4;
  spec.seed_base = 3;
  auto a = run_experiment(spec);
  spec.threads = 3;
  auto b = run_experiment(spec);
  CHECK(a.rows.size() == 8);
  CHECK(a.csv() == b.csv());
  CHECK(a.summary.dump() == b.summary.dump());
  CHECK(a.csv().rfind(std::string(kCsvHeader), 0) == 0);
  CHECK(a.summary["points"].size() == 2);
  CHECK(a.summary.contains("messages_fit"));
}

TEST_CASE("revocable sweep produces rows") {
  ExperimentSpec spec;
  spec.protocol = Protocol::revocable;
  spec.family = "cycle";
  spec.sizes = {4};
  spec.trials = 2;
  spec.r_scale = 0.002;
  spec.f_scale = 0.1;
  spec.max_k = 4;
  auto res = run_experiment(spec);
  CHECK(res.rows.size() == 2);
  CHECK(res.rows[0].messages > 0);
}

TEST_CASE("pumping demo preconditions and report") {
  CHECK_THROWS_AS(pumping_wheel_demo(8, 31, 1, 1), InvalidParameter);
  auto report = pumping_wheel_demo(4, 16, 3, 1);
  CHECK(report.trials == 3);
  CHECK(report.exactly_one + report.zero_leaders + report.multiple_leaders == 3);
  CHECK(report.params.n_known == 4);
}
