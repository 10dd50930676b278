#pragma once

#include "vpcube/pipelines.hpp"

#include <initializer_list>
#include <string>
#include <vector>

namespace vpcube {

inline constexpr int kProgramSchemaVersion = 1;

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<const char*> required, std::initializer_list<const char*> optional,
                       const std::string& where) {
  require(j.is_object(), where + ": expected an object");
  for (const char* k : required) require(j.contains(k), where + ": missing key '" + k + "'");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* r : required) known = known || k == r;
    for (const char* o : optional) known = known || k == o;
    require(known, where + ": unknown key '" + k + "'");
  }
}

inline double number(const Json& j, const char* key, const std::string& where) {
  require(j.at(key).is_number(), where + ": '" + key + "' must be a number");
  double v = j.at(key).get<double>();
  require(std::isfinite(v), where + ": '" + key + "' must be finite");
  return v;
}

inline int integer(const Json& j, const char* key, const std::string& where) {
  require(j.at(key).is_number_integer(), where + ": '" + key + "' must be an integer");
  return j.at(key).get<int>();
}

inline Matrix frame_from_json(const Json& j, int d) {
  require(j.is_array() && static_cast<int>(j.size()) == d, "frame: expected d column vectors");
  Matrix M(d, d);
  for (int k = 0; k < d; ++k) {
    Point c = point_from_json(j[static_cast<std::size_t>(k)]);
    require(c.size() == d, "frame: column dimension mismatch");
    M.col(k) = c;
  }
  require((M.transpose() * M - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-9, "frame: columns must be orthonormal");
  return M;
}

inline std::shared_ptr<const AngleProfile> angle_from_json(const Json& j) {
  require(j.is_object() && j.contains("kind"), "angle: expected an object with 'kind'");
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "constant") {
    check_keys(j, {"kind", "theta"}, {}, "angle");
    return std::make_shared<ConstantAngle>(number(j, "theta", "angle"));
  }
  if (kind == "tube") {
    check_keys(j, {"kind", "R", "r", "mu", "sign"}, {}, "angle");
    return std::make_shared<TubeAngle>(number(j, "R", "angle"), number(j, "r", "angle"), number(j, "mu", "angle"),
                                       number(j, "sign", "angle"));
  }
  throw InvalidArgument("angle: kind '" + kind + "' cannot be replayed");
}

inline Support support_from_json(const Json& j) {
  require(j.is_object() && j.contains("kind"), "support: expected an object with 'kind'");
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "ring") {
    check_keys(j, {"kind", "ellipse", "r"}, {}, "support");
    return Support::of_ring(make_pseudo_ring(ellipse_from_json(j["ellipse"]), number(j, "r", "support")));
  }
  if (kind == "ball") {
    check_keys(j, {"kind", "center", "radius"}, {}, "support");
    double rad = number(j, "radius", "support");
    require(rad > 0.0, "support: radius must be positive");
    return Support::of_ball(point_from_json(j["center"]), rad);
  }
  throw InvalidArgument("support: unknown kind '" + kind + "'");
}

}  // namespace detail

/// Rebuilds a map from its program (as produced by MapExpr::program()).
inline MapExpr map_from_program(const Json& j) {
  using namespace detail;
  require(j.is_object() && j.contains("op") && j["op"].is_string(), "program: every node needs a string 'op'");
  const std::string op = j["op"].get<std::string>();
  const std::string where = "program node '" + op + "'";
  if (op == "identity") {
    check_keys(j, {"op", "d"}, {}, where);
    return identity_map(integer(j, "d", where));
  }
  if (op == "translation") {
    check_keys(j, {"op", "shift"}, {}, where);
    return translation_map(point_from_json(j["shift"]));
  }
  if (op == "rotation") {
    check_keys(j, {"op", "d", "b", "angle"}, {}, where);
    return rotation_map(integer(j, "d", where), number(j, "b", where), angle_from_json(j["angle"]));
  }
  if (op == "framed") {
    check_keys(j, {"op", "center", "frame", "inner"}, {}, where);
    Point c = point_from_json(j["center"]);
    MapExpr inner = map_from_program(j["inner"]);
    require(inner.dim() == c.size(), where + ": dimension mismatch");
    return MapExpr(std::make_shared<nodes::Framed>(c, frame_from_json(j["frame"], static_cast<int>(c.size())), inner.node()));
  }
  if (op == "compose") {
    check_keys(j, {"op", "stages"}, {}, where);
    require(j["stages"].is_array() && !j["stages"].empty(), where + ": 'stages' must be a non-empty array");
    std::vector<NodePtr> st;
    for (const auto& s : j["stages"]) st.push_back(map_from_program(s).node());
    return MapExpr(std::make_shared<nodes::Compose>(std::move(st)));
  }
  if (op == "union") {
    check_keys(j, {"op", "d", "pieces"}, {}, where);
    const int d = integer(j, "d", where);
    std::vector<std::pair<MapExpr, Support>> pieces;
    for (const auto& pc : j["pieces"]) {
      check_keys(pc, {"map", "support"}, {}, where + " piece");
      pieces.emplace_back(map_from_program(pc["map"]), support_from_json(pc["support"]));
      require(pieces.back().first.dim() == d, where + ": piece dimension mismatch");
    }
    return disjoint_union(d, pieces);
  }
  if (op == "cube_dilatation") {
    check_keys(j, {"op", "center", "half_side", "r", "s"}, {}, where);
    double hs = number(j, "half_side", where);
    require(hs > 0.0, where + ": half_side must be positive");
    return cube_dilatation(Cube{point_from_json(j["center"]), hs}, number(j, "r", where), number(j, "s", where));
  }
  if (op == "dyadic_dilatation") {
    check_keys(j, {"op", "m", "k", "d", "r", "s"}, {}, where);
    return dyadic_dilatation(DyadicDecomposition(integer(j, "m", where), integer(j, "k", where)), integer(j, "d", where),
                             number(j, "r", where), number(j, "s", where));
  }
  if (op == "sawtooth") {
    check_keys(j, {"op", "n", "a", "d"}, {}, where);
    return sawtooth_product(integer(j, "n", where), number(j, "a", where), integer(j, "d", where));
  }
  if (op == "lift") {
    check_keys(j, {"op", "d", "inner"}, {}, where);
    return lift(map_from_program(j["inner"]), integer(j, "d", where));
  }
  if (op == "ring_rotation") {
    check_keys(j, {"op", "ellipse", "r", "mu"}, {}, where);
    return ring_rotation(ellipse_from_json(j["ellipse"]), number(j, "r", where), number(j, "mu", where));
  }
  if (op == "ball_rotation") {
    check_keys(j, {"op", "center", "s", "u1", "u2", "mu"}, {}, where);
    return ball_rotation(point_from_json(j["center"]), number(j, "s", where), point_from_json(j["u1"]), point_from_json(j["u2"]),
                         number(j, "mu", where));
  }
  if (op == "ball_translation") {
    check_keys(j, {"op", "ellipse", "r", "mu"}, {}, where);
    return ball_translation(ellipse_from_json(j["ellipse"]), number(j, "r", where), number(j, "mu", where));
  }
  if (op == "inverse") {
    check_keys(j, {"op", "of"}, {}, where);
    return invert(map_from_program(j["of"]));
  }
  if (op == "dyadic_permutation") {
    check_keys(j, {"op", "m", "d", "perm"}, {}, where);
    require(j["perm"].is_array(), where + ": 'perm' must be an array");
    std::vector<std::size_t> perm;
    for (const auto& v : j["perm"]) {
      require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0), where + ": indices must be >= 0");
      perm.push_back(v.get<std::size_t>());
    }
    return as_map(DyadicPermutation(DyadicDecomposition(integer(j, "m", where), integer(j, "d", where)), std::move(perm)));
  }
  throw InvalidArgument("program: unknown op '" + op + "'");
}

/// Regions outside of which the program's map is the identity, when the
/// program says so (ring/ball maps and unions or compositions of them).
inline std::optional<std::vector<Support>> declared_supports(const Json& j) {
  const std::string op = j.value("op", "");
  if (op == "identity") return std::vector<Support>{};
  if (op == "ring_rotation" || op == "ball_translation")
    return std::vector<Support>{Support::of_ring(make_pseudo_ring(ellipse_from_json(j["ellipse"]), j["r"].get<double>()))};
  if (op == "ball_rotation")
    return std::vector<Support>{Support::of_ball(point_from_json(j["center"]), j["s"].get<double>())};
  if (op == "inverse") return declared_supports(j["of"]);
  if (op == "union") {
    std::vector<Support> out;
    for (const auto& pc : j["pieces"]) out.push_back(detail::support_from_json(pc["support"]));
    return out;
  }
  if (op == "compose") {
    std::vector<Support> out;
    for (const auto& s : j["stages"]) {
      auto sub = declared_supports(s);
      if (!sub) return std::nullopt;
      out.insert(out.end(), sub->begin(), sub->end());
    }
    return out;
  }
  return std::nullopt;
}

/// Replay file: the map program plus what is needed to re-run its checks.
inline Json replay_document(const MapExpr& f, std::uint64_t seed, const std::string& experiment) {
  return Json{{"schema_version", kProgramSchemaVersion}, {"experiment", experiment}, {"seed", seed}, {"dimension", f.dim()},
              {"program", f.program()}};
}

/// Accepts either a bare program or a replay document.
inline MapExpr map_from_document(const Json& j) {
  if (j.is_object() && j.contains("program")) {
    detail::check_keys(j, {"program"}, {"schema_version", "experiment", "seed", "dimension"}, "replay document");
    if (j.contains("schema_version"))
      require(j["schema_version"] == kProgramSchemaVersion, "replay document: unsupported schema_version");
    return map_from_program(j["program"]);
  }
  return map_from_program(j);
}

}  // namespace vpcube
