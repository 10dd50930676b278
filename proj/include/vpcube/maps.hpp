#pragma once

#include "vpcube/geometry.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace vpcube {

using Json = nlohmann::ordered_json;

inline Json to_json(const Point& x) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) a.push_back(x(i));
  return a;
}

inline Point point_from_json(const Json& j) {
  require(j.is_array() && !j.empty() && j.size() <= static_cast<std::size_t>(kMaxDim), "expected a point array");
  Point x(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_number(), "point coordinates must be numbers");
    x(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  require(all_finite(x), "point coordinates must be finite");
  return x;
}

// ---------------------------------------------------------------------------
// Bump h_mu

/// C^infinity step: pi on (-inf, 1-mu], 0 on [1, inf), strictly decreasing
/// in between via the exponential blend.
class Bump {
 public:
  explicit Bump(double mu) : mu_(mu) { require(mu > 0.0 && mu < 1.0, "bump parameter mu must be in (0,1)"); }

  double mu() const { return mu_; }

  double operator()(double t) const {
    if (t <= 1.0 - mu_) return kPi;
    if (t >= 1.0) return 0.0;
    double u = exponent(t);
    if (u > 700.0) return 0.0;
    if (u < -700.0) return kPi;
    return kPi / (1.0 + std::exp(u));
  }

  double derivative(double t) const {
    if (t <= 1.0 - mu_ || t >= 1.0) return 0.0;
    double u = exponent(t);
    if (std::abs(u) > 700.0) return 0.0;
    double a = 1.0 - t - mu_;
    double b = t - 1.0;
    double du = mu_ / (a * a) + mu_ / (b * b);
    double ch = std::cosh(0.5 * u);
    return -kPi * du / (4.0 * ch * ch);
  }

  /// sup |h'| (attained at the midpoint t = 1 - mu/2).
  double derivative_bound() const { return 2.0 * kPi / mu_; }

 private:
  // h = pi / (1 + e^u), u = mu/(1-t-mu) - mu/(t-1).
  double exponent(double t) const { return mu_ / (1.0 - t - mu_) - mu_ / (t - 1.0); }

  double mu_;
};

inline Bump bump(double mu) { return Bump(mu); }

// ---------------------------------------------------------------------------
// Angle fields alpha(x) = Z(x1^2 + (x2/b)^2, xbar)

struct AngleValue {
  double value = 0.0;
  double d_rho = 0.0;  ///< dZ/drho
  Point d_xbar;        ///< dZ/dxbar_i, size d-2
};

class AngleProfile {
 public:
  virtual ~AngleProfile() = default;
  virtual AngleValue eval(double rho, const Point& xbar) const = 0;
  virtual std::shared_ptr<const AngleProfile> negated() const = 0;
  virtual Json program() const = 0;
};

class ConstantAngle final : public AngleProfile {
 public:
  explicit ConstantAngle(double theta) : theta_(theta) {}
  AngleValue eval(double, const Point& xbar) const override {
    return {theta_, 0.0, Point::Zero(xbar.size())};
  }
  std::shared_ptr<const AngleProfile> negated() const override { return std::make_shared<ConstantAngle>(-theta_); }
  Json program() const override { return Json{{"kind", "constant"}, {"theta", theta_}}; }

 private:
  double theta_;
};

/// Z = sign * h_mu(((sqrt(rho) - R)^2 + |xbar|^2) / r^2): pi on PR_{r/2}-like
/// core, 0 outside the tube of level r. R = 0 gives a ball of radius r.
class TubeAngle final : public AngleProfile {
 public:
  TubeAngle(double R, double r, double mu, double sign) : R_(R), r_(r), h_(mu), sign_(sign) {
    require(R >= 0.0, "tube angle: R must be >= 0");
    require(r > 0.0, "tube angle: r must be positive");
    require(sign == 1.0 || sign == -1.0, "tube angle: sign must be +-1");
  }

  AngleValue eval(double rho, const Point& xbar) const override {
    AngleValue out{0.0, 0.0, Point::Zero(xbar.size())};
    double s = std::sqrt(rho);
    double q = ((s - R_) * (s - R_) + xbar.squaredNorm()) / (r_ * r_);
    if (q >= 1.0) return out;
    out.value = sign_ * h_(q);
    double hp = h_.derivative(q);
    if (hp == 0.0) return out;
    double radial = R_ == 0.0 ? 1.0 : (s > 0.0 ? (s - R_) / s : 0.0);
    out.d_rho = sign_ * hp * radial / (r_ * r_);
    out.d_xbar = (sign_ * hp * 2.0 / (r_ * r_)) * xbar;
    return out;
  }

  std::shared_ptr<const AngleProfile> negated() const override {
    return std::make_shared<TubeAngle>(R_, r_, h_.mu(), -sign_);
  }
  Json program() const override {
    return Json{{"kind", "tube"}, {"R", R_}, {"r", r_}, {"mu", h_.mu()}, {"sign", sign_}};
  }

 private:
  double R_;
  double r_;
  Bump h_;
  double sign_;
};

/// Arbitrary user profile (not serializable into a replayable program).
class FunctionAngle final : public AngleProfile {
 public:
  using Fn = std::function<AngleValue(double, const Point&)>;
  explicit FunctionAngle(Fn fn, double sign = 1.0) : fn_(std::move(fn)), sign_(sign) {}
  AngleValue eval(double rho, const Point& xbar) const override {
    AngleValue v = fn_(rho, xbar);
    v.value *= sign_;
    v.d_rho *= sign_;
    v.d_xbar *= sign_;
    return v;
  }
  std::shared_ptr<const AngleProfile> negated() const override { return std::make_shared<FunctionAngle>(fn_, -sign_); }
  Json program() const override { return Json{{"kind", "function"}}; }

 private:
  Fn fn_;
  double sign_;
};

// ---------------------------------------------------------------------------
// Map nodes

class MapNode;
using NodePtr = std::shared_ptr<const MapNode>;

class MapNode {
 public:
  virtual ~MapNode() = default;
  virtual int dim() const = 0;
  virtual Point eval(const Point& x) const = 0;
  virtual bool has_jacobian() const { return true; }
  virtual Matrix jacobian(const Point& x) const = 0;
  virtual NodePtr inverse() const { return nullptr; }
  /// True only where the map is known to be exactly the identity.
  virtual bool identity_at(const Point&) const { return false; }
  /// Distance (lower estimate) from x to the set where the map is not smooth.
  virtual double seam_distance(const Point&) const { return kInf; }
  virtual Json program() const = 0;
};

/// Immutable, shareable handle to an evaluable map of R^d.
class MapExpr {
 public:
  MapExpr() = default;
  explicit MapExpr(NodePtr node) : node_(std::move(node)) {}

  int dim() const { return node_->dim(); }
  Point operator()(const Point& x) const { return node_->eval(x); }
  bool has_jacobian() const { return node_->has_jacobian(); }
  Matrix jacobian(const Point& x) const {
    if (!node_->has_jacobian()) throw InvalidArgument("map has no analytic Jacobian");
    return node_->jacobian(x);
  }
  bool invertible() const { return node_->inverse() != nullptr; }
  bool identity_at(const Point& x) const { return node_->identity_at(x); }
  double seam_distance(const Point& x) const { return node_->seam_distance(x); }
  Json program() const { return node_->program(); }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

namespace nodes {

class Identity final : public MapNode {
 public:
  explicit Identity(int d) : d_(d) { check_dimension(d); }
  int dim() const override { return d_; }
  Point eval(const Point& x) const override { return x; }
  Matrix jacobian(const Point&) const override { return Matrix::Identity(d_, d_); }
  NodePtr inverse() const override { return std::make_shared<Identity>(d_); }
  bool identity_at(const Point&) const override { return true; }
  Json program() const override { return Json{{"op", "identity"}, {"d", d_}}; }

 private:
  int d_;
};

class Translation final : public MapNode {
 public:
  explicit Translation(Point shift) : shift_(std::move(shift)) {}
  int dim() const override { return static_cast<int>(shift_.size()); }
  Point eval(const Point& x) const override { return x + shift_; }
  Matrix jacobian(const Point&) const override { return Matrix::Identity(dim(), dim()); }
  NodePtr inverse() const override { return std::make_shared<Translation>(-shift_); }
  Json program() const override { return Json{{"op", "translation"}, {"shift", to_json(shift_)}}; }

 private:
  Point shift_;
};

/// F_b^alpha(x) = (x1 cos a - x2 sin a / b, b x1 sin a + x2 cos a, xbar).
class Rotation final : public MapNode {
 public:
  Rotation(int d, double b, std::shared_ptr<const AngleProfile> angle) : d_(d), b_(b), angle_(std::move(angle)) {
    require(d >= 2 && d <= kMaxDim, "rotation map: dimension must be in [2, kMaxDim]");
    require(b > 0.0 && b <= 1.0, "rotation map: b must be in (0,1]");
  }

  int dim() const override { return d_; }

  AngleValue angle_at(const Point& x) const {
    double rho = x(0) * x(0) + (x(1) / b_) * (x(1) / b_);
    return angle_->eval(rho, x.tail(d_ - 2));
  }

  Point eval(const Point& x) const override {
    double a = angle_at(x).value;
    if (a == 0.0) return x;
    double c = std::cos(a), s = std::sin(a);
    Point y = x;
    y(0) = x(0) * c - x(1) * s / b_;
    y(1) = b_ * x(0) * s + x(1) * c;
    return y;
  }

  Matrix jacobian(const Point& x) const override {
    AngleValue av = angle_at(x);
    Matrix J = Matrix::Identity(d_, d_);
    if (av.value == 0.0 && av.d_rho == 0.0 && (av.d_xbar.size() == 0 || av.d_xbar.isZero(0.0))) return J;
    double c = std::cos(av.value), s = std::sin(av.value);
    // gradient of alpha
    Point ga(d_);
    ga(0) = av.d_rho * 2.0 * x(0);
    ga(1) = av.d_rho * 2.0 * x(1) / (b_ * b_);
    for (int i = 2; i < d_; ++i) ga(i) = av.d_xbar(i - 2);
    double k1 = -x(0) * s - x(1) * c / b_;  // dF1/dalpha
    double k2 = b_ * x(0) * c - x(1) * s;   // dF2/dalpha
    for (int k = 0; k < d_; ++k) {
      J(0, k) = k1 * ga(k);
      J(1, k) = k2 * ga(k);
    }
    J(0, 0) += c;
    J(0, 1) += -s / b_;
    J(1, 0) += b_ * s;
    J(1, 1) += c;
    return J;
  }

  NodePtr inverse() const override { return std::make_shared<Rotation>(d_, b_, angle_->negated()); }
  bool identity_at(const Point& x) const override { return angle_at(x).value == 0.0; }
  Json program() const override { return Json{{"op", "rotation"}, {"d", d_}, {"b", b_}, {"angle", angle_->program()}}; }

 private:
  int d_;
  double b_;
  std::shared_ptr<const AngleProfile> angle_;
};

/// x -> c + M inner(M^T (x - c)) for an orthonormal frame M. Exact identity
/// wherever the inner map is.
class Framed final : public MapNode {
 public:
  Framed(Point center, Matrix frame, NodePtr inner, Json label = nullptr)
      : center_(std::move(center)), frame_(std::move(frame)), inner_(std::move(inner)), label_(std::move(label)) {}

  int dim() const override { return static_cast<int>(center_.size()); }
  Point local(const Point& x) const { return frame_.transpose() * (x - center_); }

  Point eval(const Point& x) const override {
    Point y = local(x);
    if (inner_->identity_at(y)) return x;
    return center_ + frame_ * inner_->eval(y);
  }
  Matrix jacobian(const Point& x) const override {
    Point y = local(x);
    if (inner_->identity_at(y)) return Matrix::Identity(dim(), dim());
    return frame_ * inner_->jacobian(y) * frame_.transpose();
  }
  bool has_jacobian() const override { return inner_->has_jacobian(); }
  NodePtr inverse() const override {
    NodePtr inv = inner_->inverse();
    if (!inv) return nullptr;
    Json lab = label_.is_null() ? Json(nullptr) : Json{{"op", "inverse"}, {"of", label_}};
    return std::make_shared<Framed>(center_, frame_, inv, lab);
  }
  bool identity_at(const Point& x) const override { return inner_->identity_at(local(x)); }
  double seam_distance(const Point& x) const override { return inner_->seam_distance(local(x)); }
  Json program() const override {
    if (!label_.is_null()) return label_;
    Json fr = Json::array();
    for (int k = 0; k < dim(); ++k) fr.push_back(to_json(frame_.col(k)));
    return Json{{"op", "framed"}, {"center", to_json(center_)}, {"frame", fr}, {"inner", inner_->program()}};
  }

 private:
  Point center_;
  Matrix frame_;
  NodePtr inner_;
  Json label_;
};

/// Stages applied first to last.
class Compose final : public MapNode {
 public:
  explicit Compose(std::vector<NodePtr> stages, Json label = nullptr) : stages_(std::move(stages)), label_(std::move(label)) {
    require(!stages_.empty(), "compose: need at least one stage");
    for (const auto& s : stages_) require(s->dim() == stages_.front()->dim(), "compose: dimension mismatch");
  }
  const std::vector<NodePtr>& stages() const { return stages_; }

  int dim() const override { return stages_.front()->dim(); }
  Point eval(const Point& x) const override {
    Point y = x;
    for (const auto& s : stages_) y = s->eval(y);
    return y;
  }
  bool has_jacobian() const override {
    return std::all_of(stages_.begin(), stages_.end(), [](const NodePtr& s) { return s->has_jacobian(); });
  }
  Matrix jacobian(const Point& x) const override {
    Point y = x;
    Matrix J = Matrix::Identity(dim(), dim());
    for (const auto& s : stages_) {
      if (!s->identity_at(y)) J = s->jacobian(y) * J;
      y = s->eval(y);
    }
    return J;
  }
  NodePtr inverse() const override {
    std::vector<NodePtr> inv;
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
      NodePtr i = (*it)->inverse();
      if (!i) return nullptr;
      inv.push_back(std::move(i));
    }
    Json lab = label_.is_null() ? Json(nullptr) : Json{{"op", "inverse"}, {"of", label_}};
    return std::make_shared<Compose>(std::move(inv), lab);
  }
  bool identity_at(const Point& x) const override {
    Point y = x;
    for (const auto& s : stages_) {
      if (!s->identity_at(y)) return false;
    }
    return true;
  }
  /// Seam distance of each stage pulled back through the prefix Jacobian.
  double seam_distance(const Point& x) const override {
    Point y = x;
    Matrix J = Matrix::Identity(dim(), dim());
    double best = kInf;
    const bool jac = has_jacobian();
    for (const auto& s : stages_) {
      double sd = s->seam_distance(y);
      if (sd < kInf) {
        double scale = jac ? std::max(1.0, J.norm()) : 1.0;
        best = std::min(best, sd / scale);
      }
      if (jac && !s->identity_at(y)) J = s->jacobian(y) * J;
      y = s->eval(y);
    }
    return best;
  }
  Json program() const override {
    if (!label_.is_null()) return label_;
    Json st = Json::array();
    for (const auto& s : stages_) st.push_back(s->program());
    return Json{{"op", "compose"}, {"stages", st}};
  }

 private:
  std::vector<NodePtr> stages_;
  Json label_;
};

}  // namespace nodes

// ---------------------------------------------------------------------------
// Supports and disjoint unions

/// Region outside of which a piece of a union is the identity.
struct Support {
  enum class Kind { ring, ball };
  Kind kind = Kind::ball;
  PseudoRing ring;
  Ball ball;

  static Support of_ring(const PseudoRing& pr) { return Support{Kind::ring, pr, Ball{}}; }
  static Support of_ball(const Point& c, double radius) { return Support{Kind::ball, PseudoRing{}, Ball{c, radius}}; }

  bool contains(const Point& x) const { return kind == Kind::ring ? ring.contains(x) : ball.contains(x); }
  OrientedBox bounding_box() const {
    if (kind == Kind::ring) return ring.bounding_box();
    const int d = static_cast<int>(ball.center.size());
    return OrientedBox{ball.center, Matrix::Identity(d, d), Point::Constant(d, ball.radius)};
  }
};

Json to_json(const Ellipse& e);
Json to_json(const Support& s);

namespace nodes {

/// Maps with pairwise disjoint supports; identity off their union.
class Union final : public MapNode {
 public:
  Union(int d, std::vector<std::pair<NodePtr, Support>> pieces) : d_(d), pieces_(std::move(pieces)) {}
  int dim() const override { return d_; }
  const std::vector<std::pair<NodePtr, Support>>& pieces() const { return pieces_; }

  const MapNode* piece_at(const Point& x) const {
    for (const auto& [node, sup] : pieces_)
      if (sup.contains(x)) return node.get();
    return nullptr;
  }
  Point eval(const Point& x) const override {
    const MapNode* p = piece_at(x);
    return p ? p->eval(x) : x;
  }
  bool has_jacobian() const override {
    return std::all_of(pieces_.begin(), pieces_.end(), [](const auto& pc) { return pc.first->has_jacobian(); });
  }
  Matrix jacobian(const Point& x) const override {
    const MapNode* p = piece_at(x);
    return p ? p->jacobian(x) : Matrix::Identity(d_, d_);
  }
  NodePtr inverse() const override {
    std::vector<std::pair<NodePtr, Support>> inv;
    for (const auto& [node, sup] : pieces_) {
      NodePtr i = node->inverse();
      if (!i) return nullptr;
      inv.emplace_back(std::move(i), sup);
    }
    return std::make_shared<Union>(d_, std::move(inv));
  }
  bool identity_at(const Point& x) const override {
    const MapNode* p = piece_at(x);
    return !p || p->identity_at(x);
  }
  double seam_distance(const Point& x) const override {
    const MapNode* p = piece_at(x);
    return p ? p->seam_distance(x) : kInf;
  }
  Json program() const override {
    Json pcs = Json::array();
    for (const auto& [node, sup] : pieces_) pcs.push_back(Json{{"map", node->program()}, {"support", vpcube::to_json(sup)}});
    return Json{{"op", "union"}, {"d", d_}, {"pieces", pcs}};
  }

 private:
  int d_;
  std::vector<std::pair<NodePtr, Support>> pieces_;
};

/// Unit-cube formula T^{r,s} on [-1,1]^d; identity outside the cube.
struct DilatationFormula {
  int d;
  double r, s;
  double inner_radius;  // r^{1/d}
  double k;             // (s/r)^{1/d}
  double A;             // (1-s)/(1-r)

  DilatationFormula(int dim, double r_, double s_)
      : d(dim), r(r_), s(s_), inner_radius(std::pow(r_, 1.0 / dim)), k(std::pow(s_ / r_, 1.0 / dim)), A((1.0 - s_) / (1.0 - r_)) {}

  double lambda(double n) const { return std::pow(A * std::pow(n, d) + 1.0 - A, 1.0 / d); }

  Point eval(const Point& z) const {
    double n = z.cwiseAbs().maxCoeff();
    if (n >= 1.0 || r == s) return z;
    if (n <= inner_radius) return k * z;
    return (lambda(n) / n) * z;
  }

  Matrix jacobian(const Point& z) const {
    double n = z.cwiseAbs().maxCoeff();
    if (n >= 1.0 || r == s) return Matrix::Identity(d, d);
    if (n <= inner_radius) return k * Matrix::Identity(d, d);
    Eigen::Index top = 0;
    z.cwiseAbs().maxCoeff(&top);
    double lam = lambda(n);
    double g = lam / n;
    double lam_p = A * std::pow(n, d - 1) * std::pow(lam, 1 - d);
    double gp = (lam_p * n - lam) / (n * n);
    double sign = z(top) >= 0.0 ? 1.0 : -1.0;
    Matrix J = g * Matrix::Identity(d, d);
    for (int j = 0; j < d; ++j) J(j, top) += z(j) * gp * sign;
    return J;
  }

  /// Distance (in z units) to the inner-cube boundary, the outer boundary, and
  /// the sup-norm ridges of the annular region.
  double seam_distance(const Point& z) const {
    Point a = z.cwiseAbs();
    double n = a.maxCoeff();
    double dist = std::min(std::abs(n - inner_radius), std::abs(1.0 - n));
    if (n > inner_radius && n < 1.0 && d > 1) {
      std::sort(a.data(), a.data() + a.size(), std::greater<>());
      dist = std::min(dist, (a(0) - a(1)) / std::sqrt(2.0));
    }
    return dist;
  }
};

class CubeDilatation final : public MapNode {
 public:
  CubeDilatation(Cube cube, double r, double s) : cube_(std::move(cube)), f_(cube_.dim(), r, s) {
    require(r > 0.0 && r < 1.0 && s > 0.0 && s < 1.0, "cube dilatation: r and s must be in (0,1)");
  }
  int dim() const override { return cube_.dim(); }
  Point eval(const Point& x) const override {
    Point z = (x - cube_.center) / cube_.half_side;
    if (z.cwiseAbs().maxCoeff() >= 1.0) return x;
    return cube_.center + cube_.half_side * f_.eval(z);
  }
  Matrix jacobian(const Point& x) const override { return f_.jacobian((x - cube_.center) / cube_.half_side); }
  NodePtr inverse() const override { return std::make_shared<CubeDilatation>(cube_, f_.s, f_.r); }
  bool identity_at(const Point& x) const override {
    return f_.r == f_.s || ((x - cube_.center) / cube_.half_side).cwiseAbs().maxCoeff() >= 1.0;
  }
  double seam_distance(const Point& x) const override {
    return cube_.half_side * f_.seam_distance((x - cube_.center) / cube_.half_side);
  }
  Json program() const override {
    return Json{{"op", "cube_dilatation"}, {"center", to_json(cube_.center)}, {"half_side", cube_.half_side}, {"r", f_.r}, {"s", f_.s}};
  }

 private:
  Cube cube_;
  DilatationFormula f_;
};

/// T^{sigma_i, r, s} on every cube of a dyadic decomposition of I^k, acting
/// on the first k coordinates of R^d (k = decomposition dimension).
class DyadicDilatation final : public MapNode {
 public:
  DyadicDilatation(DyadicDecomposition dec, int d, double r, double s) : dec_(std::move(dec)), d_(d), f_(dec_.dim(), r, s) {
    require(r > 0.0 && r < 1.0 && s > 0.0 && s < 1.0, "dyadic dilatation: r and s must be in (0,1)");
    require(d >= dec_.dim(), "dyadic dilatation: ambient dimension too small");
  }
  int dim() const override { return d_; }

  bool outside(const Point& x) const {
    for (int i = 0; i < dec_.dim(); ++i)
      if (x(i) < 0.0 || x(i) > 1.0) return true;
    return false;
  }
  Cube cube_of(const Point& x) const { return dec_.cube(dec_.index_of(x.head(dec_.dim()))); }

  Point eval(const Point& x) const override {
    if (outside(x)) return x;
    Cube c = cube_of(x);
    Point z = (x.head(dec_.dim()) - c.center) / c.half_side;
    Point y = x;
    y.head(dec_.dim()) = c.center + c.half_side * f_.eval(z);
    return y;
  }
  Matrix jacobian(const Point& x) const override {
    Matrix J = Matrix::Identity(d_, d_);
    if (outside(x)) return J;
    Cube c = cube_of(x);
    J.topLeftCorner(dec_.dim(), dec_.dim()) = f_.jacobian((x.head(dec_.dim()) - c.center) / c.half_side);
    return J;
  }
  NodePtr inverse() const override { return std::make_shared<DyadicDilatation>(dec_, d_, f_.s, f_.r); }
  bool identity_at(const Point& x) const override { return f_.r == f_.s || outside(x); }
  double seam_distance(const Point& x) const override {
    if (outside(x)) return kInf;
    Cube c = cube_of(x);
    return c.half_side * f_.seam_distance((x.head(dec_.dim()) - c.center) / c.half_side);
  }
  Json program() const override {
    return Json{{"op", "dyadic_dilatation"}, {"m", dec_.order()}, {"k", dec_.dim()}, {"d", d_}, {"r", f_.r}, {"s", f_.s}};
  }

 private:
  DyadicDecomposition dec_;
  int d_;
  DilatationFormula f_;
};

/// f_n applied to every coordinate; identity for coordinates outside [0,1].
class Sawtooth final : public MapNode {
 public:
  Sawtooth(int n, double a, int d) : n_(n), a_(a), b_(1.0 / n - a), d_(d) {
    require(n >= 1, "sawtooth: n must be >= 1");
    require(a > 0.0 && a < 1.0 / n, "sawtooth: a must be in (0, 1/n)");
    check_dimension(d);
  }
  int dim() const override { return d_; }
  double a() const { return a_; }
  double b() const { return b_; }

  double scalar(double x) const {
    if (x < 0.0 || x > 1.0) return x;
    double k = std::min(std::floor(x * n_), static_cast<double>(n_ - 1));
    double base = k / n_;
    double u = x - base;
    if (u <= a_) return base + (b_ / a_) * u;
    return base + (a_ / b_) * (u - 1.0 / n_) + 1.0 / n_;
  }
  double scalar_derivative(double x) const {
    if (x < 0.0 || x > 1.0) return 1.0;
    double k = std::min(std::floor(x * n_), static_cast<double>(n_ - 1));
    return (x - k / n_) <= a_ ? b_ / a_ : a_ / b_;
  }
  double scalar_seam(double x) const {
    double t = x * n_;
    double cell = std::abs(t - std::round(t)) / n_;
    double k = std::floor(t);
    double kink = std::abs(x - (k / n_ + a_));
    return std::min(cell, kink);
  }

  Point eval(const Point& x) const override {
    Point y(d_);
    for (int i = 0; i < d_; ++i) y(i) = scalar(x(i));
    return y;
  }
  Matrix jacobian(const Point& x) const override {
    Matrix J = Matrix::Zero(d_, d_);
    for (int i = 0; i < d_; ++i) J(i, i) = scalar_derivative(x(i));
    return J;
  }
  NodePtr inverse() const override { return std::make_shared<Sawtooth>(n_, b_, d_); }
  double seam_distance(const Point& x) const override {
    double best = kInf;
    for (int i = 0; i < d_; ++i) best = std::min(best, scalar_seam(x(i)));
    return best;
  }
  Json program() const override { return Json{{"op", "sawtooth"}, {"n", n_}, {"a", a_}, {"d", d_}}; }

 private:
  int n_;
  double a_, b_;
  int d_;
};

/// (x_1..x_k, rest) -> (inner(x_1..x_k), rest).
class Lift final : public MapNode {
 public:
  Lift(NodePtr inner, int d) : inner_(std::move(inner)), d_(d) {
    require(d >= inner_->dim(), "lift: target dimension smaller than inner map");
    check_dimension(d);
  }
  int dim() const override { return d_; }
  int k() const { return inner_->dim(); }
  Point eval(const Point& x) const override {
    Point y = x;
    y.head(k()) = inner_->eval(x.head(k()));
    return y;
  }
  bool has_jacobian() const override { return inner_->has_jacobian(); }
  Matrix jacobian(const Point& x) const override {
    Matrix J = Matrix::Identity(d_, d_);
    J.topLeftCorner(k(), k()) = inner_->jacobian(x.head(k()));
    return J;
  }
  NodePtr inverse() const override {
    NodePtr inv = inner_->inverse();
    return inv ? std::make_shared<Lift>(inv, d_) : nullptr;
  }
  bool identity_at(const Point& x) const override { return inner_->identity_at(x.head(k())); }
  double seam_distance(const Point& x) const override { return inner_->seam_distance(x.head(k())); }
  Json program() const override { return Json{{"op", "lift"}, {"d", d_}, {"inner", inner_->program()}}; }

 private:
  NodePtr inner_;
  int d_;
};

}  // namespace nodes

// ---------------------------------------------------------------------------
// JSON for geometry

inline Json to_json(const Ellipse& e) {
  return Json{{"center", to_json(e.center())}, {"u1", to_json(e.u1())}, {"u2", to_json(e.u2())}, {"R", e.R()}, {"b", e.b()}};
}

inline Ellipse ellipse_from_json(const Json& j) {
  require(j.is_object(), "ellipse must be an object");
  for (const char* key : {"center", "u1", "u2", "R", "b"}) require(j.contains(key), std::string("ellipse missing key ") + key);
  for (const auto& [k, v] : j.items())
    require(k == "center" || k == "u1" || k == "u2" || k == "R" || k == "b", "ellipse: unknown key " + k);
  return Ellipse(point_from_json(j["center"]), point_from_json(j["u1"]), point_from_json(j["u2"]), j["R"].get<double>(),
                 j["b"].get<double>());
}

inline Json to_json(const PseudoRing& pr) { return Json{{"ellipse", to_json(pr.ellipse)}, {"r", pr.r}}; }

inline Json to_json(const Cube& c) { return Json{{"center", to_json(c.center)}, {"half_side", c.half_side}}; }

inline Json to_json(const Support& s) {
  if (s.kind == Support::Kind::ring) return Json{{"kind", "ring"}, {"ellipse", to_json(s.ring.ellipse)}, {"r", s.ring.r}};
  return Json{{"kind", "ball"}, {"center", to_json(s.ball.center)}, {"radius", s.ball.radius}};
}

// ---------------------------------------------------------------------------
// Constructors

inline MapExpr identity_map(int d) { return MapExpr(std::make_shared<nodes::Identity>(d)); }
inline MapExpr translation_map(const Point& shift) { return MapExpr(std::make_shared<nodes::Translation>(shift)); }

/// F_b^alpha with alpha = Z(x1^2 + (x2/b)^2, xbar); inverse is F_b^{-alpha}.
inline MapExpr rotation_map(int d, double b, std::shared_ptr<const AngleProfile> angle) {
  return MapExpr(std::make_shared<nodes::Rotation>(d, b, std::move(angle)));
}

inline constexpr double kDefaultMu = 0.75;

/// Identity outside PR^E_r, rotation by pi about the centre of E in its
/// plane on PR^E_{r/2}.
inline MapExpr ring_rotation(const Ellipse& e, double r, double mu = kDefaultMu) {
  require(r > 0.0, "ring_rotation: r must be positive");
  auto inner = std::make_shared<nodes::Rotation>(e.dim(), e.b(), std::make_shared<TubeAngle>(e.R(), r, mu, 1.0));
  Json label{{"op", "ring_rotation"}, {"ellipse", to_json(e)}, {"r", r}, {"mu", mu}};
  return MapExpr(std::make_shared<nodes::Framed>(e.center(), e.frame(), inner, label));
}

/// Identity outside B(A, s), rotation by pi in the plane (u1, u2) about A on B(A, s/2).
inline MapExpr ball_rotation(const Point& A, double s, const Point& u1, const Point& u2, double mu = kDefaultMu) {
  require(s > 0.0, "ball_rotation: s must be positive");
  require(std::abs(u1.norm() - 1.0) < 1e-9 && std::abs(u2.norm() - 1.0) < 1e-9 && std::abs(u1.dot(u2)) < 1e-9,
          "ball_rotation: plane vectors must be orthonormal");
  const int d = static_cast<int>(A.size());
  auto inner = std::make_shared<nodes::Rotation>(d, 1.0, std::make_shared<TubeAngle>(0.0, s, mu, 1.0));
  Json label{{"op", "ball_rotation"}, {"center", to_json(A)}, {"s", s}, {"u1", to_json(u1)}, {"u2", to_json(u2)}, {"mu", mu}};
  return MapExpr(std::make_shared<nodes::Framed>(A, orthonormal_frame(u1, u2), inner, label));
}

/// H = G o F: ring rotation of E followed by the pi-rotation of the ball
/// B(Q, b r / 2). Translates B(P, b r / 4) onto B(Q, b r / 4).
inline MapExpr ball_translation(const Ellipse& e, double r, double mu = kDefaultMu) {
  MapExpr F = ring_rotation(e, r, mu);
  MapExpr G = ball_rotation(e.vertex_q(), 0.5 * e.b() * r, e.u1(), e.u2(), mu);
  Json label{{"op", "ball_translation"}, {"ellipse", to_json(e)}, {"r", r}, {"mu", mu}};
  return MapExpr(std::make_shared<nodes::Compose>(std::vector<NodePtr>{F.node(), G.node()}, label));
}

/// Radius of the ball that ball_translation(e, r) moves rigidly.
inline double translated_ball_radius(const Ellipse& e, double r) { return 0.25 * e.b() * r; }

/// T^{sigma,r,s}: dilatation of sigma^r onto sigma^s fixing the boundary of sigma.
inline MapExpr cube_dilatation(const Cube& cube, double r, double s) {
  return MapExpr(std::make_shared<nodes::CubeDilatation>(cube, r, s));
}

/// Entrywise bound on |dT_i/dx_j| outside sigma^r for T^{sigma,r,s}.
inline double dilatation_entry_bound(double r, double s, int d) {
  double k = std::pow(s / r, 1.0 / d);
  return r < s ? k : (1.0 - s) * r / ((1.0 - r) * s) * k;
}

inline MapExpr dyadic_dilatation(const DyadicDecomposition& dec, int d, double r, double s) {
  return MapExpr(std::make_shared<nodes::DyadicDilatation>(dec, d, r, s));
}

inline MapExpr sawtooth(int n, double a) { return MapExpr(std::make_shared<nodes::Sawtooth>(n, a, 1)); }
inline MapExpr sawtooth_product(int n, double a, int d) { return MapExpr(std::make_shared<nodes::Sawtooth>(n, a, d)); }

inline MapExpr lift(const MapExpr& inner, int d) { return MapExpr(std::make_shared<nodes::Lift>(inner.node(), d)); }

inline MapExpr disjoint_union(int d, const std::vector<std::pair<MapExpr, Support>>& pieces) {
  std::vector<std::pair<NodePtr, Support>> ps;
  ps.reserve(pieces.size());
  for (const auto& [m, s] : pieces) ps.emplace_back(m.node(), s);
  return MapExpr(std::make_shared<nodes::Union>(d, std::move(ps)));
}

/// compose(f, g) = g o f (f is applied first).
inline MapExpr compose(const MapExpr& f, const MapExpr& g) {
  require(f.dim() == g.dim(), "compose: dimension mismatch");
  std::vector<NodePtr> stages;
  for (const MapExpr* m : {&f, &g}) {
    auto c = std::dynamic_pointer_cast<const nodes::Compose>(m->node());
    if (c && m->program().value("op", "") == "compose")
      stages.insert(stages.end(), c->stages().begin(), c->stages().end());
    else
      stages.push_back(m->node());
  }
  return MapExpr(std::make_shared<nodes::Compose>(std::move(stages)));
}

/// Applies the maps first to last.
inline MapExpr compose_all(const std::vector<MapExpr>& maps) {
  require(!maps.empty(), "compose_all: empty list");
  MapExpr out = maps.front();
  for (std::size_t i = 1; i < maps.size(); ++i) out = compose(out, maps[i]);
  return out;
}

inline MapExpr invert(const MapExpr& f) {
  NodePtr inv = f.node()->inverse();
  if (!inv) throw InvalidArgument("invert: map has no inverse");
  return MapExpr(inv);
}

// ---------------------------------------------------------------------------
// Finite differences

inline constexpr double kFdStep = 1e-6;

struct FdJacobian {
  Matrix J;
  bool near_seam = false;
};

/// Central differences with step h; one-sided within h of the boundary of
/// I^d. near_seam flags x within 10 h of the map's non-smooth set.
inline FdJacobian jacobian_fd(const MapExpr& f, const Point& x, double h = kFdStep) {
  const int d = f.dim();
  FdJacobian out{Matrix(d, d), f.seam_distance(x) < 10.0 * h};
  for (int j = 0; j < d; ++j) {
    Point xp = x, xm = x;
    double span = 2.0 * h;
    if (x(j) - h < 0.0) {
      xp(j) += h;
      span = h;
    } else if (x(j) + h > 1.0) {
      xm(j) -= h;
      span = h;
    } else {
      xp(j) += h;
      xm(j) -= h;
    }
    out.J.col(j) = (f(xp) - f(xm)) / span;
  }
  return out;
}

/// Richardson combination (4 J(h/2) - J(h)) / 3 of central differences.
/// Cancels the h^2 term, which dominates the determinant error where the
/// map bends sharply (thin tubes).
inline FdJacobian jacobian_fd_richardson(const MapExpr& f, const Point& x, double h = kFdStep) {
  FdJacobian coarse = jacobian_fd(f, x, h);
  FdJacobian fine = jacobian_fd(f, x, 0.5 * h);
  return FdJacobian{(4.0 * fine.J - coarse.J) / 3.0, coarse.near_seam};
}

// ---------------------------------------------------------------------------
// Pairs

/// A map together with a matrix field that need not be its derivative.
struct MapPair {
  MapExpr map;
  std::function<Matrix(const Point&)> field;
};

inline MapPair derivative_pair(const MapExpr& f) {
  return MapPair{f, [f](const Point& x) { return f.has_jacobian() ? f.jacobian(x) : jacobian_fd(f, x).J; }};
}

}  // namespace vpcube
