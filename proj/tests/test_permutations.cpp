#include "vpcube/vpcube.hpp"

#include <catch_amalgamated.hpp>

#include <random>
#include <set>

using namespace vpcube;
using Catch::Approx;

namespace {

Point random_interior(std::mt19937_64& rng, int d) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Point x(d);
  for (int a = 0; a < d; ++a) x(a) = U(rng);
  return x;
}

}  // namespace

TEST_CASE("identity permutation is the identity map", "[permutations]") {
  DyadicDecomposition dec(2, 3);
  MapExpr f = as_map(DyadicPermutation::identity(dec));
  std::mt19937_64 rng(1);
  for (int k = 0; k < 200; ++k) {
    Point x = random_interior(rng, 3);
    CHECK(f(x) == x);
  }
  PermDistance dist = perm_map_distance(DyadicPermutation::identity(dec), identity_map(3), stratified(4096, 1), 5);
  CHECK(dist.sup == 0.0);
  CHECK(dist.weak == 0.0);
}

TEST_CASE("swapping two cubes shifts points by half a side", "[permutations]") {
  DyadicDecomposition dec(1, 2);
  DyadicPermutation P(dec, {1, 0, 2, 3});
  MapExpr f = as_map(P);
  CHECK((f(make_point({0.1, 0.2})) - make_point({0.6, 0.2})).norm() < 1e-15);
  CHECK((f(make_point({0.9, 0.3})) - make_point({0.4, 0.3})).norm() < 1e-15);
  CHECK(f(make_point({0.3, 0.7})) == make_point({0.3, 0.7}));
  CHECK(P.max_shift() == 0.5);
  CHECK(f.jacobian(make_point({0.1, 0.2})).determinant() == 1.0);
  CHECK_THROWS_AS(DyadicPermutation(dec, {0, 0, 2, 3}), InvalidArgument);
  CHECK_THROWS_AS(DyadicPermutation(dec, {0, 1, 2}), InvalidArgument);
}

TEST_CASE("permutation composed with its inverse is the identity", "[permutations][property]") {
  Rng rng = substream(3, 0);
  std::mt19937_64 prng(3);
  for (auto [m, d] : {std::pair{1, 2}, std::pair{2, 2}, std::pair{2, 3}, std::pair{1, 4}}) {
    DyadicPermutation P = random_permutation(DyadicDecomposition(m, d), rng);
    DyadicPermutation Q = P.inverse();
    for (std::size_t i = 0; i < P.size(); ++i) {
      CHECK(Q[P[i]] == i);
      CHECK(P[Q[i]] == i);
    }
    MapExpr f = as_map(P), g = invert(f);
    for (int k = 0; k < 200; ++k) {
      Point x = random_interior(prng, d);
      CHECK((g(f(x)) - x).norm() < 1e-15);
    }
    PermDistance self = perm_map_distance(P, f, stratified(4096, 2), 4);
    CHECK(self.sup == 0.0);
    CHECK(self.weak == 0.0);
  }
}

TEST_CASE("permutation maps preserve the measure of boxes", "[permutations][property]") {
  Rng rng = substream(5, 0);
  std::mt19937_64 prng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  DyadicPermutation P = random_permutation(DyadicDecomposition(2, 2), rng);
  MapExpr finv = invert(as_map(P));
  for (int k = 0; k < 10; ++k) {
    Point lo = make_point({0.8 * U(prng), 0.8 * U(prng)});
    Point half = make_point({0.02 + 0.08 * U(prng), 0.02 + 0.08 * U(prng)});
    OrientedBox box{lo + half, Matrix::Identity(2, 2), half};
    Integral m = preimage_measure(finv, box, stratified(40000, static_cast<std::uint64_t>(k)));
    CHECK(std::abs(m.value - box.volume()) < 3.0 * m.stderr_ + 1e-4);
  }
}

TEST_CASE("boustrophedon cycle of order one in the plane", "[permutations]") {
  auto [P, tag] = boustrophedon_cycle(1, 2);
  REQUIRE(P.size() == 4);
  CHECK(tag.cycle.size() == 4);
  CHECK(is_cyclic(P));
  MapExpr f = as_map(P);
  Point x = make_point({0.3141, 0.2718});
  Point y = x;
  for (int k = 0; k < 4; ++k) {
    y = f(y);
    if (k < 3) CHECK((y - x).norm() > 0.1);
  }
  CHECK((y - x).norm() < 1e-12);
}

TEST_CASE("boustrophedon cycles visit every cube with unit steps", "[permutations][property]") {
  std::mt19937_64 rng(7);
  for (auto [m, d] : {std::pair{1, 2}, std::pair{2, 2}, std::pair{3, 2}, std::pair{1, 3}, std::pair{2, 3}, std::pair{1, 4}}) {
    auto [P, tag] = boustrophedon_cycle(m, d);
    const DyadicDecomposition& dec = P.decomposition();
    const double step = std::ldexp(1.0, -m);
    REQUIRE(tag.cycle.size() == dec.size());
    CHECK(std::set<std::size_t>(tag.cycle.begin(), tag.cycle.end()).size() == dec.size());
    CHECK(is_cyclic(P));
    CHECK(cycle_of(P).cycle.size() == dec.size());
    // consecutive cubes share a face
    for (std::size_t i = 0; i < dec.size(); ++i) {
      Point s = P.shift(i);
      CHECK(s.norm() == step);
      CHECK((s.array() != 0.0).count() == 1);
    }
    // orbit of a centre visits all centres
    MapExpr f = as_map(P);
    std::set<std::size_t> seen;
    Point c = dec.center(0);
    for (std::size_t k = 0; k < dec.size(); ++k) {
      seen.insert(dec.index_of(c));
      c = f(c);
    }
    CHECK(seen.size() == dec.size());
    CHECK((c - dec.center(0)).norm() == 0.0);
    // N-th power returns generic interior points
    for (int t = 0; t < 20; ++t) {
      Point x = random_interior(rng, d), y = x;
      for (std::size_t k = 0; k < dec.size(); ++k) y = f(y);
      CHECK((y - x).norm() < 1e-12);
    }
    if (m * d <= 6) {
      double sup = sup_distance(f, identity_map(d), std::min(24 / d, 8)).value;
      CHECK(sup == Approx(step).epsilon(1e-12));
    }
  }
}

TEST_CASE("distance from the order three cycle to the identity", "[permutations]") {
  auto [P, tag] = boustrophedon_cycle(3, 2);
  PermDistance dist = perm_map_distance(P, identity_map(2), stratified(16384, 3), 7);
  CHECK(dist.sup == Approx(0.125).epsilon(1e-12));
  CHECK(dist.weak <= dist.sup + 1e-4);
  CHECK(dist.weak == Approx(0.125).margin(2e-4));
}

TEST_CASE("single cycle detection", "[permutations]") {
  DyadicDecomposition dec(1, 2);
  DyadicPermutation swap(dec, {1, 0, 3, 2});
  CHECK_FALSE(is_cyclic(swap));
  CHECK_THROWS_AS(cycle_of(swap), InvalidArgument);
  CHECK(is_cyclic(DyadicPermutation(dec, {1, 2, 3, 0})));
}
