#include "vpcube/vpcube.hpp"

#include <catch_amalgamated.hpp>

#include <random>
#include <set>

using namespace vpcube;

namespace {

void collect_ops(const Json& j, std::set<std::string>& ops) {
  if (j.is_object()) {
    if (j.contains("op") && j["op"].is_string()) ops.insert(j["op"].get<std::string>());
    for (const auto& [k, v] : j.items()) collect_ops(v, ops);
  } else if (j.is_array()) {
    for (const auto& v : j) collect_ops(v, ops);
  }
}

std::vector<MapExpr> sample_maps() {
  Ellipse e2(make_point({0.5, 0.5}), make_point({0.6, 0.8}), make_point({-0.8, 0.6}), 0.25, 0.6);
  Ellipse e3(make_point({0.5, 0.5, 0.5}), make_point({1.0, 0.0, 0.0}), make_point({0.0, 0.6, 0.8}), 0.2, 1.0);
  Ellipse e3b(make_point({0.3, 0.3, 0.7}), make_point({0.0, 1.0, 0.0}), make_point({0.0, 0.0, 1.0}), 0.1, 0.8);
  auto [P, tag] = boustrophedon_cycle(1, 2);
  std::vector<MapExpr> maps{
      identity_map(3),
      translation_map(make_point({0.1, -0.2})),
      rotation_map(2, 0.5, std::make_shared<ConstantAngle>(0.7)),
      MapExpr(std::make_shared<nodes::Framed>(make_point({0.5, 0.5}), e2.frame(),
                                              rotation_map(2, 0.5, std::make_shared<ConstantAngle>(0.3)).node())),
      ring_rotation(e2, 0.08),
      ring_rotation(e3, 0.05, 0.5),
      ball_rotation(make_point({0.5, 0.5, 0.5}), 0.2, make_point({1.0, 0.0, 0.0}), make_point({0.0, 1.0, 0.0})),
      ball_translation(e3, 0.06),
      cube_dilatation(make_cube(make_point({0.5, 0.5}), 0.4), 0.3, 0.6),
      dyadic_dilatation(DyadicDecomposition(1, 3), 3, 0.4, 0.7),
      sawtooth_product(5, 1.0 / 25.0, 2),
      lift(ring_rotation(e2, 0.08), 3),
      as_map(P),
      invert(ball_translation(e2, 0.05)),
      compose_all({ring_rotation(e2, 0.08), as_map(P), cube_dilatation(make_cube(make_point({0.5, 0.5}), 0.5), 0.5, 0.8)}),
      disjoint_union(3, {{ball_translation(e3b, 0.04), Support::of_ring(make_pseudo_ring(e3b, 0.04))},
                         {ball_rotation(make_point({0.75, 0.75, 0.25}), 0.1, make_point({1.0, 0.0, 0.0}),
                                        make_point({0.0, 0.0, 1.0})),
                          Support::of_ball(make_point({0.75, 0.75, 0.25}), 0.1)}}),
  };
  return maps;
}

}  // namespace

TEST_CASE("every program round-trips through json", "[serialization][property]") {
  std::set<std::string> ops;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (const MapExpr& f : sample_maps()) {
    const Json prog = f.program();
    collect_ops(prog, ops);
    const std::string text = prog.dump();
    MapExpr g = map_from_program(Json::parse(text));
    CHECK(g.program().dump() == text);
    REQUIRE(g.dim() == f.dim());
    for (int k = 0; k < 200; ++k) {
      Point x(f.dim());
      for (int a = 0; a < f.dim(); ++a) x(a) = U(rng);
      CHECK((g(x) - f(x)).norm() == 0.0);
      if (f.has_jacobian()) CHECK((g.jacobian(x) - f.jacobian(x)).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  for (const char* op : {"identity", "translation", "rotation", "framed", "compose", "union", "cube_dilatation",
                         "dyadic_dilatation", "sawtooth", "lift", "ring_rotation", "ball_rotation", "ball_translation",
                         "inverse", "dyadic_permutation"}) {
    INFO(op);
    CHECK(ops.count(op) == 1);
  }
}

TEST_CASE("replay documents reproduce the map", "[serialization]") {
  Ellipse e(make_point({0.5, 0.5}), make_point({1.0, 0.0}), make_point({0.0, 1.0}), 0.25, 0.5);
  MapExpr f = ball_translation(e, 0.07);
  Json doc = replay_document(f, 42, "unit");
  CHECK(doc["seed"] == 42);
  CHECK(doc["dimension"] == 2);
  MapExpr g = map_from_document(Json::parse(doc.dump()));
  CHECK(g.program() == f.program());
  CHECK(map_from_document(f.program()).program() == f.program());
  Json bad = doc;
  bad["schema_version"] = 99;
  CHECK_THROWS_AS(map_from_document(bad), InvalidArgument);
  bad = doc;
  bad["extra"] = 1;
  CHECK_THROWS_AS(map_from_document(bad), InvalidArgument);
}

TEST_CASE("malformed programs are rejected", "[serialization]") {
  CHECK_THROWS_AS(map_from_program(Json{{"op", "identity"}}), InvalidArgument);
  CHECK_THROWS_AS(map_from_program(Json{{"op", "identity"}, {"d", 2}, {"colour", "red"}}), InvalidArgument);
  CHECK_THROWS_AS(map_from_program(Json{{"op", "warp"}, {"d", 2}}), InvalidArgument);
  CHECK_THROWS_AS(map_from_program(Json::array()), InvalidArgument);
  CHECK_THROWS_AS(map_from_program(Json{{"op", "dyadic_permutation"}, {"m", 1}, {"d", 2}, {"perm", {0, 0, 1, 2}}}),
                  InvalidArgument);

  Ellipse e(make_point({0.5, 0.5}), make_point({1.0, 0.0}), make_point({0.0, 1.0}), 0.25, 0.5);
  Json prog = ring_rotation(e, 0.05).program();
  prog["ellipse"]["b"] = 1.5;
  CHECK_THROWS_AS(map_from_program(prog), InvalidArgument);
  prog["ellipse"]["b"] = 0.0;
  CHECK_THROWS_AS(map_from_program(prog), InvalidArgument);
}

TEST_CASE("declared supports follow the program tree", "[serialization]") {
  Ellipse e(make_point({0.5, 0.5}), make_point({1.0, 0.0}), make_point({0.0, 1.0}), 0.25, 0.5);
  CHECK(declared_supports(identity_map(2).program())->empty());
  auto s = declared_supports(ring_rotation(e, 0.05).program());
  REQUIRE(s);
  REQUIRE(s->size() == 1);
  CHECK(s->front().contains(make_point({0.75, 0.5})));
  CHECK_FALSE(s->front().contains(make_point({0.5, 0.5})));
  CHECK_FALSE(declared_supports(sawtooth(4, 0.1).program()).has_value());
}
