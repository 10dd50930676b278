#include "vpcube/vpcube.hpp"

#include <catch_amalgamated.hpp>

#include <fstream>
#include <random>
#include <set>

using namespace vpcube;
using Catch::Approx;

namespace {

PipelineOptions quick(std::uint64_t seed) {
  PipelineOptions o;
  o.seed = seed;
  o.samples = std::size_t{1} << 14;
  o.suite_points = 1000;
  return o;
}

const Target* find_target(const ExperimentReport& rep, const std::string& name) {
  for (const auto& t : rep.targets)
    if (t.name == name) return &t;
  return nullptr;
}

}  // namespace

TEST_CASE("target relations honour the tolerance", "[pipelines]") {
  ExperimentReport rep;
  CHECK(rep.target("a", 1.0, "<", 1.0, 0.0).pass == false);
  CHECK(rep.target("b", 1.0, "<", 1.0, 1e-3).pass == true);
  CHECK(rep.target("c", 0.5, ">", 1.0, 0.6).pass == true);
  CHECK(rep.target("d", std::nan(""), "<=", 1.0).pass == false);
  CHECK(rep.target_true("e", true).pass);
  CHECK_FALSE(rep.pass());
  CHECK(rep.failures().size() == 2);
  CHECK_THROWS_AS(rep.target("f", 1.0, "!=", 1.0), InvalidArgument);
  CHECK(rep.to_json().contains("targets"));
  CHECK_FALSE(rep.to_json().contains("runtime_seconds"));
}

TEST_CASE("csv output uses round-trip precision", "[pipelines]") {
  Table t{"x", {"a", "b", "c"}, {{1, 0.1, "s"}}};
  CHECK(t.to_csv() == "a,b,c\n1,0.10000000000000001,s\n");
}

TEST_CASE("log-log slope of a power law", "[pipelines]") {
  std::vector<double> x{0.1, 0.05, 0.025, 0.0125}, y;
  for (double v : x) y.push_back(3.0 * std::pow(v, 1.7));
  CHECK(loglog_slope(x, y) == Approx(1.7).epsilon(1e-12));
}

TEST_CASE("derivative integral of a ball translation scales like r^(d-1-p)", "[pipelines]") {
  std::vector<double> rl;
  for (double r = 0.08; rl.size() < 6; r /= 2) rl.push_back(r);
  ExperimentReport rep = scaling_experiment(make_point({0.3, 0.5, 0.5}), make_point({0.7, 0.5, 0.5}), {1.0, 4.0}, rl, quick(1));
  for (const auto& t : rep.targets) { INFO(t.name << " " << t.achieved); CHECK(t.pass); }
  double s1 = rep.achieved["slopes"]["p=1"]["slope"].get<double>();
  CHECK(s1 > 0.8);
  CHECK(s1 < 1.2);
  CHECK(rep.achieved["slopes"]["p=4"]["slope"].get<double>() < 0.0);
  CHECK_THROWS_AS(scaling_experiment(make_point({0.3, 0.5, 0.5}), make_point({0.7, 0.5, 0.5}), {1.0}, {0.3, 0.1}, quick(1)),
                  Infeasible);
}

TEST_CASE("crossing paths experiment logs a decreasing schedule", "[pipelines]") {
  ExperimentReport rep = translation_experiment({make_point({0.2, 0.2}), make_point({0.2, 0.8})},
                                                {make_point({0.8, 0.8}), make_point({0.6, 0.2})}, 0.05, 0.5, quick(2));
  for (const auto& t : rep.targets) { INFO(t.name << " " << t.achieved); CHECK(t.pass); }
  REQUIRE(rep.tables.size() == 2);
  const Table& sched = rep.tables[1];
  CHECK(sched.name == "schedule");
  CHECK(sched.rows.size() == 6);
  // each window's term shrinks with every halving of r_1
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t h = 1; h < 3; ++h)
      CHECK(sched.rows[2 * h + j][4].get<double>() < sched.rows[2 * (h - 1) + j][4].get<double>());
}

TEST_CASE("lusin pipeline with the identity permutation", "[pipelines]") {
  LusinResult res = lusin_pipeline(DyadicPermutation::identity(DyadicDecomposition(1, 2)), 0.1, 0.1, 0.5, quick(3));
  CHECK(res.report.pass());
  CHECK(res.report.program["op"] == "identity");
  CHECK(res.f(make_point({0.3, 0.4})) == make_point({0.3, 0.4}));
}

TEST_CASE("lusin pipeline matches the permutation on most of the cube", "[pipelines]") {
  auto [P, tag] = boustrophedon_cycle(1, 2);
  const double gamma = 0.2;
  LusinResult res = lusin_pipeline(P, 0.6, gamma, 0.5, quick(4));
  for (const auto& t : res.report.targets) { INFO(t.name << " " << t.achieved); CHECK(t.pass); }
  // f agrees with the permutation on the concentric cubes of fraction beta
  const double beta = res.report.parameters["beta"].get<double>();
  CHECK(beta > 1.0 - gamma);
  MapExpr Pm = as_map(P);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const DyadicDecomposition& dec = P.decomposition();
  const double hb = 0.5 * dec.side() * std::sqrt(beta);
  for (std::size_t i = 0; i < dec.size(); ++i)
    for (int k = 0; k < 200; ++k) {
      Point x = dec.center(i) + hb * make_point({U(rng), U(rng)});
      CHECK((res.f(x) - Pm(x)).norm() < 1e-9);
    }
}

TEST_CASE("tower sets under the permutation itself keep full mass", "[pipelines]") {
  auto [P, tag] = boustrophedon_cycle(1, 3);
  const double mu = 0.95;
  ExperimentReport rep = tower_tracking(as_map(P), P, mu, stratified(8192, 6), false);
  const double full = std::pow(mu * 0.5, 3);
  auto lam = rep.achieved["lambda_E"];
  REQUIRE(lam.size() == 8);
  for (const auto& v : lam) CHECK(v.get<double>() == Approx(full).epsilon(1e-12));
}

TEST_CASE("tower sets under the identity vanish after one step", "[pipelines]") {
  auto [P, tag] = boustrophedon_cycle(1, 3);
  ExperimentReport rep = tower_tracking(identity_map(3), P, 0.95, stratified(8192, 7), false);
  auto lam = rep.achieved["lambda_E"];
  CHECK(lam[0].get<double>() > 0.0);
  for (std::size_t k = 1; k < lam.size(); ++k) CHECK(lam[k].get<double>() == 0.0);
  CHECK_THROWS_AS(tower_tracking(identity_map(3), P, 0.9, stratified(8192, 7), false), InvalidArgument);
}

TEST_CASE("transitivity output follows the cycle", "[pipelines]") {
  TransitivityResult res = transitivity_pipeline(identity_map(3), 0.5, 1, 1.0, quick(8));
  const auto& rep = res.report;
  REQUIRE(find_target(rep, "orbit_dev"));
  CHECK(find_target(rep, "orbit_dev")->pass);
  CHECK(find_target(rep, "transitive_pairs_witnessed")->pass);
  CHECK(find_target(rep, "lp_deriv")->pass);
  CHECK(find_target(rep, "det_dev_analytic")->pass);
  CHECK(find_target(rep, "inverse_dev")->pass);
  // the orbit of each centre, iterated independently of the report
  const auto& dec = res.perm.decomposition();
  Point x = dec.center(res.cycle.cycle[0]);
  for (std::size_t k = 1; k <= res.cycle.cycle.size(); ++k) {
    x = res.g(x);
    CHECK((x - dec.center(res.cycle.cycle[k % res.cycle.cycle.size()])).norm() < 1e-9);
  }
}

TEST_CASE("tower sets of the lusin output keep more than half the cube", "[pipelines]") {
  auto [P, tag] = boustrophedon_cycle(1, 2);
  LusinResult res = lusin_pipeline(P, 0.6, 0.1, 0.5, quick(9));
  ExperimentReport tower = tower_tracking(res.f, P, 0.9, stratified(8192, 9), true);
  CHECK(tower.pass());
  CHECK(tower.achieved["lambda_EN"].get<double>() > 0.5 * tower.achieved["lambda_D1"].get<double>());
}

TEST_CASE("derivative mismatch map rotates the inner cubes by a half turn", "[pipelines]") {
  for (int d : {2, 3}) {
    Section7Map sm = section7_map(2, 0.8, d);
    Matrix DJ = Matrix::Identity(d, d);
    DJ(0, 0) = DJ(1, 1) = -1.0;
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double hb = 0.5 * sm.dec.side() * std::sqrt(0.8);
    for (std::size_t i = 0; i < sm.dec.size(); ++i)
      for (int k = 0; k < 50; ++k) {
        Point x(d);
        for (int a = 0; a < d; ++a) x(a) = U(rng);
        Point c = sm.dec.center(i);
        for (int a = 0; a < 2; ++a) x(a) = c(a) + hb * (2.0 * U(rng) - 1.0);
        Point y = sm.f(x);
        CHECK(y(0) == Approx(2.0 * c(0) - x(0)).margin(1e-12));
        CHECK(y(1) == Approx(2.0 * c(1) - x(1)).margin(1e-12));
        for (int a = 2; a < d; ++a) CHECK(y(a) == x(a));
        if (sm.f.seam_distance(x) > 1e-5) CHECK((sm.f.jacobian(x) - DJ).cwiseAbs().maxCoeff() < 1e-9);
      }
  }
}

TEST_CASE("derivative mismatch distance shrinks as beta grows", "[pipelines]") {
  ExperimentReport rep = section7_pipeline(0.3, 0.5, 3, {0.5, 0.8, 0.95, 0.99}, 2, quick(11));
  for (const auto& t : rep.targets) { INFO(t.name << " " << t.achieved); CHECK(t.pass); }
  const auto& rows = rep.tables[0].rows;
  REQUIRE(rows.size() == 4);
  for (std::size_t k = 1; k < rows.size(); ++k) CHECK(rows[k][2].get<double>() < rows[k - 1][2].get<double>());
}

TEST_CASE("sawtooth with equal pieces is the identity", "[pipelines]") {
  ExperimentReport rep = peetre_pipeline({4, 8}, {0.5, 0.75}, SawtoothRule{0.5, 1.0}, 1 << 14);
  for (const auto& row : rep.tables[0].rows) {
    CHECK(row[4].get<double>() == Approx(1.0).epsilon(1e-14));
    CHECK(row[5].get<double>() == Approx(1.0).epsilon(1e-12));
    CHECK(row[7].get<double>() < 1e-12);
  }
}

TEST_CASE("sawtooth closed form against exact piece sums", "[pipelines][property]") {
  for (int n : {3, 5, 10})
    for (double p : {0.25, 0.5, 0.9}) {
      const double a = 1.0 / (n * n), b = 1.0 / n - a;
      const double sum = n * (a * std::pow(b / a, p) + b * std::pow(a / b, p));
      CHECK(sawtooth_closed_form(n, a, p) == Approx(sum).epsilon(1e-12));
    }
  ExperimentReport rep = peetre_pipeline({4, 5, 8, 16}, {0.25, 0.5, 0.75}, SawtoothRule{1.0, 2.0}, 1 << 18);
  CHECK(rep.pass());
  CHECK_THROWS_AS(peetre_pipeline({4}, {0.5}, SawtoothRule{1.0, 0.0}), InvalidArgument);
}

TEST_CASE("emitted tables match the documented csv schema", "[pipelines]") {
  std::ifstream in(std::string(VPCUBE_SOURCE_DIR) + "/docs/csv_schema.json");
  REQUIRE(in);
  const Json schema = Json::parse(in)["tables"];
  std::vector<Table> tables;
  auto take = [&](const ExperimentReport& rep) { tables.insert(tables.end(), rep.tables.begin(), rep.tables.end()); };
  take(peetre_pipeline({4}, {0.5}, SawtoothRule{}, 1 << 12));
  take(scaling_experiment(make_point({0.3, 0.5, 0.5}), make_point({0.7, 0.5, 0.5}), {1.0}, {0.08, 0.04}, quick(12)));
  take(translation_experiment({make_point({0.2, 0.2}), make_point({0.2, 0.8})}, {make_point({0.8, 0.8}), make_point({0.6, 0.2})},
                              0.05, 0.5, quick(12)));
  auto [P, tag] = boustrophedon_cycle(1, 2);
  take(lusin_pipeline(P, 0.6, 0.2, 0.5, quick(12)).report);
  take(transitivity_pipeline(identity_map(3), 0.5, 1, 1.0, quick(12)).report);
  take(section7_pipeline(0.3, 0.5, 3, {0.5, 0.8}, 2, quick(12)));
  take(tower_tracking(as_map(P), P, 0.9, stratified(1024, 12), false));
  std::set<std::string> seen;
  for (const Table& t : tables) {
    INFO(t.name);
    REQUIRE(schema.contains(t.name));
    std::vector<std::string> documented;
    for (const auto& [k, v] : schema[t.name]["columns"].items()) documented.push_back(k);
    CHECK(std::set<std::string>(documented.begin(), documented.end()) == std::set<std::string>(t.columns.begin(), t.columns.end()));
    CHECK(documented.size() == t.columns.size());
    seen.insert(t.name);
  }
  CHECK(seen.size() == schema.size());
}
