#pragma once

#include "vpcube/core.hpp"

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

namespace vpcube {

/// Volume of the unit ball in R^n.
inline double unit_ball_volume(int n) {
  return std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

/// Completes orthonormal (u1, u2) to an orthonormal basis of R^d. Columns
/// of the result are the basis vectors, u1 and u2 first.
inline Matrix orthonormal_frame(const Point& u1, const Point& u2) {
  const int d = static_cast<int>(u1.size());
  Matrix frame = Matrix::Zero(d, d);
  frame.col(0) = u1;
  frame.col(1) = u2;
  int filled = 2;
  for (int axis = 0; axis < d && filled < d; ++axis) {
    Point v = unit_vector(d, axis);
    for (int k = 0; k < filled; ++k) v -= frame.col(k).dot(v) * frame.col(k);
    double n = v.norm();
    if (n > 1e-6) frame.col(filled++) = v / n;
  }
  // Second pass of Gram-Schmidt against accumulated rounding.
  for (int k = 2; k < d; ++k) {
    Point v = frame.col(k);
    for (int j = 0; j < k; ++j) v -= frame.col(j).dot(v) * frame.col(j);
    frame.col(k) = v / v.norm();
  }
  return frame;
}

/// A unit vector orthogonal to u (for d >= 2), drawn at random when d >= 3.
inline Point random_orthogonal(Rng& rng, const Point& u) {
  const int d = static_cast<int>(u.size());
  if (d == 2) return make_point({-u(1), u(0)});
  for (;;) {
    Point v = random_unit_vector(rng, d);
    v -= u.dot(v) * u;
    double n = v.norm();
    if (n > 1e-3) return v / n;
  }
}

// ---------------------------------------------------------------------------
// Cubes

/// Axis-parallel cube.
struct Cube {
  Point center;
  double half_side = 0.0;

  int dim() const { return static_cast<int>(center.size()); }
  double side() const { return 2.0 * half_side; }
  double volume() const { return std::pow(side(), dim()); }
  double diameter() const { return side() * std::sqrt(static_cast<double>(dim())); }

  /// Sup-norm of (x - center) in units of half_side.
  double normalized_radius(const Point& x) const {
    return (x - center).cwiseAbs().maxCoeff() / half_side;
  }
  bool contains(const Point& x) const { return normalized_radius(x) <= 1.0; }
  bool contains_interior(const Point& x) const { return normalized_radius(x) < 1.0; }
};

inline Cube make_cube(const Point& center, double half_side) {
  require(half_side > 0.0, "cube half_side must be positive");
  require(all_finite(center), "cube center must be finite");
  return Cube{center, half_side};
}

/// Concentric cube sigma^t with lambda(sigma^t) = t * lambda(sigma).
struct InnerCube {
  Cube parent;
  double fraction = 1.0;

  double half_side() const { return parent.half_side * std::pow(fraction, 1.0 / parent.dim()); }
  Cube cube() const { return Cube{parent.center, half_side()}; }
  double volume() const { return fraction * parent.volume(); }
};

inline InnerCube inner_cube(const Cube& parent, double t) {
  require(t > 0.0 && t < 1.0, "inner cube fraction must be in (0,1)");
  return InnerCube{parent, t};
}

struct Ball {
  Point center;
  double radius = 0.0;
  bool contains(const Point& x) const { return (x - center).norm() <= radius; }
};

/// Box with orthonormal axes; used as a sampling region.
struct OrientedBox {
  Point center;
  Matrix frame;  // columns: axes
  Point half_extents;

  int dim() const { return static_cast<int>(center.size()); }
  double volume() const { return (2.0 * half_extents).prod(); }
  /// Maps z in [-1,1]^d to the box.
  Point at(const Point& z) const { return center + frame * half_extents.cwiseProduct(z); }
  bool contains(const Point& x) const {
    Point y = frame.transpose() * (x - center);
    for (int i = 0; i < dim(); ++i)
      if (std::abs(y(i)) > half_extents(i)) return false;
    return true;
  }
};

inline OrientedBox unit_cube_box(int d) {
  return OrientedBox{Point::Constant(d, 0.5), Matrix::Identity(d, d), Point::Constant(d, 0.5)};
}

// ---------------------------------------------------------------------------
// Ellipses and pseudo-rings

/// Ellipse x1^2 + (x2/b)^2 = R^2, x_i = 0 (i >= 3) in the frame
/// (u1, u2, ...) centred at `center`. Its vertices are center -+ R u1.
class Ellipse {
 public:
  Ellipse() = default;
  Ellipse(Point center, Point u1, Point u2, double R, double b)
      : center_(std::move(center)), u1_(std::move(u1)), u2_(std::move(u2)), R_(R), b_(b) {
    const int d = static_cast<int>(center_.size());
    require(d >= 2 && d <= kMaxDim, "ellipse dimension must be in [2, kMaxDim]");
    require(u1_.size() == d && u2_.size() == d, "ellipse frame vectors must match the dimension");
    require(std::abs(u1_.norm() - 1.0) < 1e-9 && std::abs(u2_.norm() - 1.0) < 1e-9,
            "ellipse frame vectors must be unit vectors");
    require(std::abs(u1_.dot(u2_)) < 1e-9, "ellipse frame vectors must be orthogonal");
    require(R_ > 0.0 && std::isfinite(R_), "ellipse radius R must be positive");
    require(b_ > 0.0 && b_ <= 1.0, "ellipse ratio b must be in (0,1]");
    frame_ = orthonormal_frame(u1_, u2_);
  }

  /// The ellipse with vertices P (at -R u1) and Q (at +R u1).
  static Ellipse through_vertices(const Point& P, const Point& Q, const Point& u2, double b) {
    Point diff = Q - P;
    double len = diff.norm();
    require(len > 0.0, "ellipse vertices must be distinct");
    return Ellipse(0.5 * (P + Q), diff / len, u2, 0.5 * len, b);
  }

  int dim() const { return static_cast<int>(center_.size()); }
  const Point& center() const { return center_; }
  const Point& u1() const { return u1_; }
  const Point& u2() const { return u2_; }
  double R() const { return R_; }
  double b() const { return b_; }
  const Matrix& frame() const { return frame_; }

  Point vertex_p() const { return center_ - R_ * u1_; }
  Point vertex_q() const { return center_ + R_ * u1_; }

  Point to_local(const Point& x) const { return frame_.transpose() * (x - center_); }
  Point to_world(const Point& y) const { return center_ + frame_ * y; }

  Point point_at(double theta) const {
    return center_ + R_ * std::cos(theta) * u1_ + b_ * R_ * std::sin(theta) * u2_;
  }

  std::vector<Point> discretize(int n) const {
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) pts.push_back(point_at(2.0 * kPi * k / n));
    return pts;
  }

 private:
  Point center_;
  Point u1_;
  Point u2_;
  double R_ = 1.0;
  double b_ = 1.0;
  Matrix frame_;
};

/// Squared pseudo-ring "radius" of a point given in ellipse-local coordinates.
inline double pseudo_ring_level(const Point& y, double R, double b) {
  double xi = std::sqrt(y(0) * y(0) + (y(1) / b) * (y(1) / b));
  double q = (xi - R) * (xi - R);
  for (Eigen::Index i = 2; i < y.size(); ++i) q += y(i) * y(i);
  return q;
}

struct PseudoRing {
  Ellipse ellipse;
  double r = 0.0;

  int dim() const { return ellipse.dim(); }

  bool contains(const Point& x) const {
    return pseudo_ring_level(ellipse.to_local(x), ellipse.R(), ellipse.b()) <= r * r;
  }

  /// 2 pi R b omega_{d-1} r^{d-1}; valid for R > r.
  double volume() const {
    require(ellipse.R() > r, "pseudo-ring volume formula requires R > r");
    const int d = dim();
    return 2.0 * kPi * ellipse.R() * ellipse.b() * unit_ball_volume(d - 1) * std::pow(r, d - 1);
  }

  /// Tight box in the ellipse frame: |y1| <= R+r, |y2| <= b(R+r), |y_i| <= r.
  OrientedBox bounding_box() const {
    const int d = dim();
    Point h(d);
    h(0) = ellipse.R() + r;
    h(1) = ellipse.b() * (ellipse.R() + r);
    for (int i = 2; i < d; ++i) h(i) = r;
    return OrientedBox{ellipse.center(), ellipse.frame(), h};
  }
};

inline PseudoRing make_pseudo_ring(const Ellipse& e, double r) {
  require(r > 0.0 && std::isfinite(r), "pseudo-ring radius r must be positive");
  return PseudoRing{e, r};
}

inline bool pseudo_ring_contains(const PseudoRing& pr, const Point& x) { return pr.contains(x); }
inline double pseudo_ring_volume(const PseudoRing& pr) { return pr.volume(); }

/// Minimum distance between two point clouds.
inline double cloud_distance(std::span<const Point> a, std::span<const Point> b) {
  double best = kInf;
  for (const auto& p : a)
    for (const auto& q : b) best = std::min(best, (p - q).squaredNorm());
  return std::sqrt(best);
}

inline double cloud_point_distance(std::span<const Point> a, const Point& x) {
  double best = kInf;
  for (const auto& p : a) best = std::min(best, (p - x).squaredNorm());
  return std::sqrt(best);
}

inline double point_segment_distance(const Point& x, const Point& p, const Point& q) {
  Point v = q - p;
  double vv = v.squaredNorm();
  double t = vv > 0.0 ? std::clamp((x - p).dot(v) / vv, 0.0, 1.0) : 0.0;
  return (p + t * v - x).norm();
}

/// Distance between the segments [p1, q1] and [p2, q2].
inline double segment_distance(const Point& p1, const Point& q1, const Point& p2, const Point& q2) {
  Point d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
  double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double c = d1.dot(r), b = d1.dot(d2);
  double denom = a * e - b * b;
  double s = denom > 1e-14 * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
  double t = e > 0.0 ? (b * s + f) / e : 0.0;
  if (t < 0.0) {
    t = 0.0;
    s = a > 0.0 ? std::clamp(-c / a, 0.0, 1.0) : 0.0;
  } else if (t > 1.0) {
    t = 1.0;
    s = a > 0.0 ? std::clamp((b - c) / a, 0.0, 1.0) : 0.0;
  }
  double dist = (p1 + s * d1 - p2 - t * d2).norm();
  // endpoint candidates cover the parallel case
  return std::min({dist, point_segment_distance(p1, p2, q2), point_segment_distance(q1, p2, q2),
                   point_segment_distance(p2, p1, q1), point_segment_distance(q2, p1, q1)});
}

// ---------------------------------------------------------------------------
// Dyadic decompositions

/// The 2^{md} open dyadic cubes ]k/2^m,(k+1)/2^m[ of order m, indexed
/// lexicographically with axis 0 varying fastest.
class DyadicDecomposition {
 public:
  DyadicDecomposition() = default;
  DyadicDecomposition(int m, int d) : m_(m), d_(d) {
    require(m >= 1, "dyadic order m must be >= 1");
    check_dimension(d);
    require(static_cast<long long>(m) * d <= 30, "dyadic decomposition too large (m*d > 30)");
    per_axis_ = std::size_t{1} << m;
    count_ = std::size_t{1} << (m * d);
  }

  int order() const { return m_; }
  int dim() const { return d_; }
  std::size_t per_axis() const { return per_axis_; }
  std::size_t size() const { return count_; }
  double side() const { return 1.0 / static_cast<double>(per_axis_); }

  std::vector<std::size_t> multi_index(std::size_t i) const {
    std::vector<std::size_t> k(static_cast<std::size_t>(d_));
    for (int a = 0; a < d_; ++a) {
      k[static_cast<std::size_t>(a)] = i % per_axis_;
      i /= per_axis_;
    }
    return k;
  }

  std::size_t linear_index(std::span<const std::size_t> k) const {
    std::size_t i = 0;
    for (int a = d_ - 1; a >= 0; --a) i = i * per_axis_ + k[static_cast<std::size_t>(a)];
    return i;
  }

  Point center(std::size_t i) const {
    auto k = multi_index(i);
    Point c(d_);
    for (int a = 0; a < d_; ++a) c(a) = (static_cast<double>(k[static_cast<std::size_t>(a)]) + 0.5) * side();
    return c;
  }

  Cube cube(std::size_t i) const { return Cube{center(i), 0.5 * side()}; }

  /// Index of the lexicographically smallest closed cube containing x
  /// (x is clamped into I^d).
  std::size_t index_of(const Point& x) const {
    std::size_t i = 0;
    const double n = static_cast<double>(per_axis_);
    for (int a = d_ - 1; a >= 0; --a) {
      double k = std::ceil(x(a) * n) - 1.0;
      k = std::clamp(k, 0.0, n - 1.0);
      i = i * per_axis_ + static_cast<std::size_t>(k);
    }
    return i;
  }

  /// Distance from x to the grid skeleton (faces of all cubes).
  double skeleton_distance(const Point& x) const {
    double best = kInf;
    const double n = static_cast<double>(per_axis_);
    for (int a = 0; a < d_; ++a) {
      double t = x(a) * n;
      best = std::min(best, std::abs(t - std::round(t)) / n);
    }
    return best;
  }

 private:
  int m_ = 1;
  int d_ = 2;
  std::size_t per_axis_ = 2;
  std::size_t count_ = 4;
};

inline DyadicDecomposition dyadic_decomposition(int m, int d) { return DyadicDecomposition(m, d); }

// ---------------------------------------------------------------------------
// Disjoint ellipse families

struct EllipseFamilyOptions {
  int samples = 512;               ///< points per discretized curve
  int attempts = 16;               ///< random frames tried per b (d >= 3)
  int b_halvings = 12;             ///< b = 1, 1/2, ... tried in turn
  double boundary_margin = 1e-9;   ///< curves must stay this far inside I^d
  std::vector<Point> obstacles;    ///< points the curves must avoid
};

struct EllipseFamily {
  std::vector<Ellipse> ellipses;
  double clearance = kInf;        ///< lower bound on curve-curve (and twice curve-obstacle) distances
  double boundary_distance = kInf;///< min distance of the curves to the boundary of I^d
  double spacing = 0.0;           ///< max chord length of the discretizations
  double b = 1.0;
};

namespace detail {

/// Exact distance of an ellipse to the boundary of I^d: along axis a the
/// curve spans c_a +- R sqrt(u1_a^2 + b^2 u2_a^2).
inline double ellipse_boundary_distance(const Ellipse& e) {
  double best = kInf;
  for (int a = 0; a < e.dim(); ++a) {
    double w = e.R() * std::hypot(e.u1()(a), e.b() * e.u2()(a));
    best = std::min({best, e.center()(a) - w, 1.0 - e.center()(a) - w});
  }
  return best;
}

/// Clearance is a lower bound on the true curve distances: the larger of the
/// discretized distance minus the chord spacing and the major-axis segment
/// distance minus the minor half-axes (each curve lies within b R of it).
inline EllipseFamily evaluate_family(std::vector<Ellipse> ellipses, const EllipseFamilyOptions& opt) {
  EllipseFamily fam;
  std::vector<std::vector<Point>> curves;
  curves.reserve(ellipses.size());
  for (const auto& e : ellipses) {
    curves.push_back(e.discretize(opt.samples));
    fam.spacing = std::max(fam.spacing, 2.0 * kPi * e.R() / opt.samples);
    fam.boundary_distance = std::min(fam.boundary_distance, ellipse_boundary_distance(e));
  }
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const Ellipse& ei = ellipses[i];
    const double wi = ei.b() * ei.R();
    for (std::size_t j = i + 1; j < curves.size(); ++j) {
      const Ellipse& ej = ellipses[j];
      double seg = segment_distance(ei.vertex_p(), ei.vertex_q(), ej.vertex_p(), ej.vertex_q()) - wi - ej.b() * ej.R();
      double disc = cloud_distance(curves[i], curves[j]) - fam.spacing;
      fam.clearance = std::min(fam.clearance, std::max(seg, disc));
    }
    for (const auto& o : opt.obstacles) {
      double seg = point_segment_distance(o, ei.vertex_p(), ei.vertex_q()) - wi;
      double disc = cloud_point_distance(curves[i], o) - 0.5 * fam.spacing;
      fam.clearance = std::min(fam.clearance, 2.0 * std::max(seg, disc));
    }
  }
  fam.ellipses = std::move(ellipses);
  return fam;
}

/// Largest usable tube radius scale of a family (0 when unusable).
inline double family_score(const EllipseFamily& fam, double margin) {
  if (fam.boundary_distance <= margin || fam.clearance <= 0.0) return 0.0;
  return std::min(fam.clearance, fam.boundary_distance);
}

}  // namespace detail

/// Ellipses E_i with vertices P_i, Q_i, pairwise disjoint and interior to
/// I^d. For d >= 3 the plane of each ellipse is spanned by (Q_i - P_i) and a
/// random orthogonal direction (best of `attempts` draws); in d = 2 the
/// plane is fixed and b is halved until the curves separate.
/// Throws Infeasible when no candidate achieves positive clearance.
inline EllipseFamily build_disjoint_ellipses(std::span<const Point> P, std::span<const Point> Q, Rng& rng,
                                             const EllipseFamilyOptions& opt = {}) {
  require(P.size() == Q.size(), "build_disjoint_ellipses: P and Q must have equal length");
  require(!P.empty(), "build_disjoint_ellipses: need at least one pair");
  const int d = static_cast<int>(P[0].size());
  require(d >= 2, "build_disjoint_ellipses: dimension must be >= 2");
  for (std::size_t i = 0; i < P.size(); ++i) {
    require(P[i].size() == d && Q[i].size() == d, "build_disjoint_ellipses: mixed dimensions");
    require((P[i] - Q[i]).norm() > 0.0, "build_disjoint_ellipses: P_i must differ from Q_i");
    require(in_open_unit_cube(P[i]) && in_open_unit_cube(Q[i]), "build_disjoint_ellipses: points must be interior");
  }

  // Objective b * score is proportional to the radius b r / 4 of the ball
  // that the resulting translation moves rigidly.
  EllipseFamily best;
  double best_objective = 0.0;
  double b = 1.0;
  for (int bh = 0; bh <= opt.b_halvings; ++bh, b *= 0.5) {
    const int tries = d == 2 ? 1 : opt.attempts;
    for (int t = 0; t < tries; ++t) {
      std::vector<Ellipse> es;
      es.reserve(P.size());
      for (std::size_t i = 0; i < P.size(); ++i) {
        Point u1 = (Q[i] - P[i]).normalized();
        es.push_back(Ellipse::through_vertices(P[i], Q[i], random_orthogonal(rng, u1), b));
      }
      EllipseFamily fam = detail::evaluate_family(std::move(es), opt);
      fam.b = b;
      double objective = b * detail::family_score(fam, opt.boundary_margin);
      if (objective > best_objective) {
        best = std::move(fam);
        best_objective = objective;
      }
    }
    // In d >= 3 the random plane does the separating; b only shrinks on failure.
    if (d >= 3 && best_objective > 0.0) break;
  }
  if (best_objective <= 0.0)
    throw Infeasible("build_disjoint_ellipses: no disjoint interior ellipse family found (degenerate input)");
  return best;
}

}  // namespace vpcube
