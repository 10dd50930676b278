#include "vpcube/vpcube.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace vpcube;
using Catch::Approx;

namespace {

std::vector<PseudoRing> all_rings(const TranslationReport& rep) {
  std::vector<PseudoRing> out;
  for (const auto& w : rep.windows)
    for (const auto& e : w.family.ellipses) out.push_back(make_pseudo_ring(e, w.r));
  return out;
}

void check_rigid_balls(const MultiTranslation& mt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const auto& rep = mt.report;
  for (std::size_t i = 0; i < rep.P.size(); ++i) {
    CHECK((mt.map(rep.P[i]) - rep.Q[i]).norm() < 1e-9);
    for (int k = 0; k < 100; ++k) {
      Point v = random_unit_vector(rng, rep.d) * (rep.rho * U(rng));
      CHECK((mt.map(rep.P[i] + v) - (rep.Q[i] + v)).norm() < 1e-9);
    }
  }
}

}  // namespace

TEST_CASE("two translations in three dimensions", "[translation]") {
  std::vector<Point> P{make_point({0.2, 0.3, 0.4}), make_point({0.7, 0.6, 0.3})};
  std::vector<Point> Q{make_point({0.5, 0.6, 0.5}), make_point({0.4, 0.7, 0.6})};
  TranslationOptions opt;
  opt.seed = 1;
  MultiTranslation mt = multi_translation(P, Q, 0.05, 1.0, opt);
  const auto& rep = mt.report;
  CHECK(rep.case_name == "case1");
  CHECK_FALSE(rep.perturbed);
  REQUIRE(rep.windows.size() == 1);
  const double r = rep.windows[0].r;
  double step = std::max((Q[0] - P[0]).norm(), (Q[1] - P[1]).norm());
  CHECK(rep.max_step == Approx(step).epsilon(1e-15));
  CHECK(rep.sup_measured < step + 0.05);
  CHECK(rep.sup_measured <= step + 2.0 * r);
  CHECK(rep.norm_1p < 0.05);
  CHECK(rep.sup_pass());
  CHECK(rep.norm_pass());
  check_rigid_balls(mt, 2);

  // identity outside the pseudo-rings, volume preserving inside
  auto rings = all_rings(rep);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  int outside = 0;
  for (int k = 0; k < 5000; ++k) {
    Point x = make_point({U(rng), U(rng), U(rng)});
    bool in = false;
    for (const auto& pr : rings) in = in || pr.contains(x);
    if (!in) {
      ++outside;
      CHECK(mt.map(x) == x);
    }
  }
  CHECK(outside > 1000);
  for (const auto& pr : rings) {
    OrientedBox box = pr.bounding_box();
    for (int k = 0; k < 2000; ++k) {
      Point x = box.at(make_point({2 * U(rng) - 1, 2 * U(rng) - 1, 2 * U(rng) - 1}));
      CHECK(mt.map.jacobian(x).determinant() == Approx(1.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("disjoint segments in the plane stay in the single window case", "[translation]") {
  std::vector<Point> P{make_point({0.2, 0.2}), make_point({0.2, 0.7})};
  std::vector<Point> Q{make_point({0.4, 0.3}), make_point({0.6, 0.8})};
  MultiTranslation mt = multi_translation(P, Q, 0.05, 0.5);
  CHECK(mt.report.case_name == "case1");
  CHECK(mt.report.norm_pass());
  CHECK(mt.report.sup_pass());
  check_rigid_balls(mt, 4);
}

TEST_CASE("crossing segments in the plane use a radius schedule", "[translation]") {
  std::vector<Point> P{make_point({0.2, 0.2}), make_point({0.2, 0.8})};
  std::vector<Point> Q{make_point({0.8, 0.8}), make_point({0.6, 0.2})};
  const double p = 0.5;
  MultiTranslation mt = multi_translation(P, Q, 0.05, p);
  const auto& rep = mt.report;
  CHECK(rep.case_name == "case2");
  CHECK_FALSE(rep.perturbed);

  // crossing parameters from the 2x2 linear system
  Eigen::Matrix2d A;
  A.col(0) = Q[0] - P[0];
  A.col(1) = -(Q[1] - P[1]);
  Eigen::Vector2d t = A.colPivHouseholderQr().solve(P[1] - P[0]);
  REQUIRE(rep.event_times.size() == 2);
  CHECK(rep.event_times[0] == Approx(std::min(t(0), t(1))).epsilon(1e-12));
  CHECK(rep.event_times[1] == Approx(std::max(t(0), t(1))).epsilon(1e-12));
  REQUIRE(rep.windows.size() == 2);

  // schedule: 1 + c = 1 + 0.9 ((d-1)/p - 1)
  REQUIRE(rep.c.has_value());
  CHECK(1.0 + *rep.c == Approx(1.0 + 0.9 * (1.0 / p - 1.0)).epsilon(1e-12));
  REQUIRE(rep.exponents.size() == 2);
  CHECK(rep.exponents[0] == Approx(1.0 - p * (1.0 + *rep.c)).epsilon(1e-12));
  CHECK(rep.exponents[1] == Approx(1.0 - p).epsilon(1e-12));
  for (double e : rep.exponents) CHECK(e > 0.0);
  CHECK(rep.windows[1].r <= std::pow(rep.windows[0].r, *rep.c) * (1.0 + 1e-12));

  CHECK(rep.norm_pass());
  CHECK(rep.sup_measured < rep.max_step + 0.05);
  check_rigid_balls(mt, 5);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (const auto& pr : all_rings(rep)) {
    OrientedBox box = pr.bounding_box();
    for (int k = 0; k < 2000; ++k) {
      Point x = box.at(make_point({2 * U(rng) - 1, 2 * U(rng) - 1}));
      // product of the stage determinants; the composite matrix itself has
      // entries of order 1e4, so its determinant carries more rounding
      CHECK(detail::det_factored(mt.map.node(), x, false) == Approx(1.0).epsilon(1e-8));
      CHECK(mt.map.jacobian(x).determinant() == Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("simultaneous crossing triggers an endpoint perturbation", "[translation]") {
  std::vector<Point> P{make_point({0.2, 0.2}), make_point({0.2, 0.8})};
  std::vector<Point> Q{make_point({0.8, 0.8}), make_point({0.8, 0.2})};
  const double delta = 0.05;
  TranslationOptions opt;
  opt.seed = 7;
  MultiTranslation mt = multi_translation(P, Q, delta, 0.5, opt);
  const auto& rep = mt.report;
  CHECK(rep.perturbed);
  double moved = 0.0;
  for (std::size_t i = 0; i < 2; ++i) moved = std::max(moved, (rep.Q[i] - Q[i]).norm());
  CHECK(moved > 0.0);
  CHECK(moved <= 0.1 * delta);
  CHECK(rep.norm_pass());
  for (std::size_t i = 0; i < 2; ++i) CHECK((mt.map(P[i]) - rep.Q[i]).norm() < 1e-9);
}

TEST_CASE("translations need p below d minus one", "[translation]") {
  std::vector<Point> P2{make_point({0.3, 0.3})}, Q2{make_point({0.6, 0.6})};
  CHECK_THROWS_AS(multi_translation(P2, Q2, 0.05, 1.0), Infeasible);
  CHECK_THROWS_AS(multi_translation(P2, Q2, 0.05, 1.5), Infeasible);
  std::vector<Point> P3{make_point({0.3, 0.3, 0.3})}, Q3{make_point({0.6, 0.6, 0.6})};
  CHECK_THROWS_AS(multi_translation(P3, Q3, 0.05, 2.0), Infeasible);
  CHECK_NOTHROW(multi_translation(P3, Q3, 0.05, 1.9));
  CHECK_THROWS_AS(multi_translation(P3, Q3, 0.0, 1.0), InvalidArgument);
  std::vector<Point> Pb{make_point({0.0, 0.3, 0.3})};
  CHECK_THROWS_AS(multi_translation(Pb, Q3, 0.05, 1.0), InvalidArgument);
}

TEST_CASE("fixed points give the identity", "[translation]") {
  std::vector<Point> P{make_point({0.3, 0.3, 0.3}), make_point({0.6, 0.4, 0.5})};
  MultiTranslation mt = multi_translation(P, P, 0.05, 1.0);
  CHECK(mt.report.case_name == "identity");
  CHECK(mt.map(make_point({0.1, 0.2, 0.3})) == make_point({0.1, 0.2, 0.3}));
}

TEST_CASE("contact detection between moving segments", "[translation]") {
  std::vector<std::size_t> moving{0, 1};
  std::vector<detail::Contact> out;
  std::size_t culprit = 0;
  SECTION("transverse crossing") {
    std::vector<Point> P{make_point({0.1, 0.1}), make_point({0.1, 0.9})};
    std::vector<Point> Q{make_point({0.9, 0.9}), make_point({0.5, 0.1})};
    REQUIRE(detail::find_contacts(P, Q, moving, out, culprit));
    REQUIRE(out.size() == 1);
    // x = y on segment 0 meets (0.1 + 0.4 t, 0.9 - 0.8 t) at t = 2/3
    CHECK(out[0].tj == Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(out[0].ti == Approx((0.1 + 0.4 * 2.0 / 3.0 - 0.1) / 0.8).epsilon(1e-12));
  }
  SECTION("parallel segments do not touch") {
    std::vector<Point> P{make_point({0.1, 0.1}), make_point({0.1, 0.3})};
    std::vector<Point> Q{make_point({0.9, 0.1}), make_point({0.9, 0.3})};
    REQUIRE(detail::find_contacts(P, Q, moving, out, culprit));
    CHECK(out.empty());
  }
  SECTION("collinear overlap is degenerate") {
    std::vector<Point> P{make_point({0.1, 0.1}), make_point({0.3, 0.3})};
    std::vector<Point> Q{make_point({0.6, 0.6}), make_point({0.8, 0.8})};
    CHECK_FALSE(detail::find_contacts(P, Q, moving, out, culprit));
  }
  SECTION("equal crossing times are degenerate") {
    std::vector<Point> P{make_point({0.2, 0.2}), make_point({0.2, 0.8})};
    std::vector<Point> Q{make_point({0.8, 0.8}), make_point({0.8, 0.2})};
    CHECK_FALSE(detail::find_contacts(P, Q, moving, out, culprit));
  }
  SECTION("three dimensions only report shared endpoints") {
    std::vector<Point> P{make_point({0.2, 0.2, 0.5}), make_point({0.5, 0.5, 0.5})};
    std::vector<Point> Q{make_point({0.5, 0.5, 0.5}), make_point({0.8, 0.2, 0.5})};
    REQUIRE(detail::find_contacts(P, Q, moving, out, culprit));
    REQUIRE(out.size() == 1);
    CHECK(out[0].ti == 1.0);
    CHECK(out[0].tj == 0.0);
  }
}

TEST_CASE("uniform schedule exponent solves the geometric sum", "[translation]") {
  for (int m : {2, 3, 5})
    for (double target : {1.2, 1.5, 1.9}) {
      double c = detail::schedule_exponent(m, target);
      double s = 0.0, t = 1.0;
      for (int k = 0; k < m; ++k, t *= c) s += t;
      CHECK(s == Approx(target).epsilon(1e-12));
    }
  CHECK(detail::schedule_exponent(2, 3.0) == 1.0);
}

TEST_CASE("translation reports are deterministic", "[translation]") {
  std::vector<Point> P{make_point({0.2, 0.2}), make_point({0.2, 0.8})};
  std::vector<Point> Q{make_point({0.8, 0.8}), make_point({0.6, 0.2})};
  TranslationOptions opt;
  opt.seed = 9;
  auto a = multi_translation(P, Q, 0.05, 0.5, opt).report.to_json().dump();
  auto b = multi_translation(P, Q, 0.05, 0.5, opt).report.to_json().dump();
  CHECK(a == b);
}
