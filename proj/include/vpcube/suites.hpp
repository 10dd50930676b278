#pragma once

#include "vpcube/norms.hpp"

#include <string>
#include <vector>

namespace vpcube {

/// Outcome of one invariant check over sampled points.
struct SuiteResult {
  std::string name;
  bool pass = false;
  Json detail;
};

struct SuiteOptions {
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  double det_tol = 1e-8;      ///< analytic |det J - 1|
  double det_tol_fd = 1e-4;   ///< finite-difference |det J - 1|
  double inverse_tol = 1e-10;
  /// Half of the points are drawn from these boxes (where the map moves
  /// points), the rest uniformly from I^d.
  std::vector<OrientedBox> focus;
};

/// Random points of I^d, half of them from the focus boxes when given.
inline std::vector<Point> suite_points(int d, const SuiteOptions& opt, std::uint64_t stream) {
  Rng rng = substream(opt.seed, 0x5375697465ULL + stream);
  std::vector<Point> pts;
  pts.reserve(opt.n);
  while (pts.size() < opt.n) {
    Point x(d);
    if (!opt.focus.empty() && pts.size() % 2 == 1) {
      const auto& box = opt.focus[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(opt.focus.size())) % opt.focus.size()];
      Point z(d);
      for (int a = 0; a < d; ++a) z(a) = uniform(rng, -1.0, 1.0);
      x = box.at(z);
      if (!in_open_unit_cube(x)) continue;
    } else {
      for (int a = 0; a < d; ++a) x(a) = uniform01(rng);
    }
    pts.push_back(x);
  }
  return pts;
}

namespace detail {

/// det J at x, factored along compositions and unions:
/// det J(g o f)(x) = det Jg(f(x)) det Jf(x). Each elementary factor is
/// evaluated on its own (analytically, or by extrapolated central
/// differences), which keeps the check meaningful where the composite is
/// steep: entries ~1e4 make det of the assembled product cancel to ~1e-7.
inline double det_factored(const NodePtr& n, const Point& x, bool fd) {
  if (const auto* c = dynamic_cast<const nodes::Compose*>(n.get())) {
    double det = 1.0;
    Point y = x;
    for (const auto& s : c->stages()) {
      if (!s->identity_at(y)) det *= det_factored(s, y, fd);
      y = s->eval(y);
    }
    return det;
  }
  if (const auto* u = dynamic_cast<const nodes::Union*>(n.get())) {
    for (const auto& [piece, sup] : u->pieces())
      if (sup.contains(x)) return det_factored(piece, x, fd);
    return 1.0;
  }
  return fd ? jacobian_fd_richardson(MapExpr(n), x).J.determinant() : n->jacobian(x).determinant();
}

}  // namespace detail

/// |det J - 1| at random non-seam points, analytic (when available) and by
/// extrapolated central differences, both taken factor by factor. The
/// deviation of the assembled composite Jacobian is reported alongside.
inline SuiteResult det_suite(const MapExpr& f, const SuiteOptions& opt = {}) {
  const int d = f.dim();
  const double gap = 10.0 * kFdStep;
  double dev_a = 0.0, dev_c = 0.0, dev_fd = 0.0;
  std::size_t used = 0, skipped = 0;
  for (const Point& x : suite_points(d, opt, 1)) {
    if (f.seam_distance(x) < gap) {
      ++skipped;
      continue;
    }
    ++used;
    if (f.has_jacobian()) {
      dev_a = std::max(dev_a, std::abs(detail::det_factored(f.node(), x, false) - 1.0));
      dev_c = std::max(dev_c, std::abs(f.jacobian(x).determinant() - 1.0));
    }
    dev_fd = std::max(dev_fd, std::abs(detail::det_factored(f.node(), x, true) - 1.0));
  }
  SuiteResult r{"det", dev_fd <= opt.det_tol_fd && (!f.has_jacobian() || dev_a <= opt.det_tol), Json::object()};
  const bool a = f.has_jacobian();
  r.detail = Json{{"points", used},
                  {"skipped_seam", skipped},
                  {"max_dev_analytic", a ? Json(dev_a) : Json(nullptr)},
                  {"max_dev_analytic_composite", a ? Json(dev_c) : Json(nullptr)},
                  {"tol_analytic", opt.det_tol},
                  {"max_dev_fd", dev_fd},
                  {"tol_fd", opt.det_tol_fd}};
  return r;
}

/// max |f^{-1}(f(x)) - x| and |f(f^{-1}(x)) - x|.
inline SuiteResult inverse_suite(const MapExpr& f, const SuiteOptions& opt = {}) {
  if (!f.invertible()) return SuiteResult{"inverse", false, Json{{"error", "map has no inverse"}}};
  MapExpr g = invert(f);
  double dev = 0.0;
  for (const Point& x : suite_points(f.dim(), opt, 2)) {
    dev = std::max(dev, (g(f(x)) - x).norm());
    dev = std::max(dev, (f(g(x)) - x).norm());
  }
  return SuiteResult{"inverse", dev <= opt.inverse_tol, Json{{"max_dev", dev}, {"tol", opt.inverse_tol}}};
}

/// f(x) == x (bitwise) at every sampled point outside the supports.
inline SuiteResult support_suite(const MapExpr& f, const std::vector<Support>& supports, const SuiteOptions& opt = {}) {
  std::size_t outside = 0, moved = 0;
  for (const Point& x : suite_points(f.dim(), opt, 3)) {
    bool in = false;
    for (const auto& s : supports) in = in || s.contains(x);
    if (in) continue;
    ++outside;
    Point y = f(x);
    if (!(y.array() == x.array()).all()) ++moved;
  }
  return SuiteResult{"support", moved == 0, Json{{"points_outside", outside}, {"moved", moved}}};
}

/// For random axis-aligned boxes B, the measure of f(B) (the fraction of
/// uniform y with f^{-1}(y) in B) equals the volume of B within 3 standard
/// errors.
inline SuiteResult pushforward_suite(const MapExpr& f, int n_boxes, const Sampler& s, std::uint64_t seed) {
  if (!f.invertible()) return SuiteResult{"pushforward", false, Json{{"error", "map has no inverse"}}};
  const int d = f.dim();
  MapExpr g = invert(f);
  Rng rng = substream(seed, 0x707573685fULL);
  int failures = 0;
  double worst_z = 0.0;
  for (int k = 0; k < n_boxes; ++k) {
    Point lo(d), hi(d);
    for (int a = 0; a < d; ++a) {
      double u = uniform01(rng), v = uniform01(rng);
      lo(a) = std::min(u, v);
      hi(a) = std::max(u, v);
    }
    OrientedBox box{0.5 * (lo + hi), Matrix::Identity(d, d), 0.5 * (hi - lo)};
    Sampler sk = s;
    sk.seed = s.seed + static_cast<std::uint64_t>(k);
    Integral I = preimage_measure(g, box, sk);
    double diff = std::abs(I.value - box.volume());
    double z = I.stderr_ > 0.0 ? diff / I.stderr_ : (diff <= 1e-12 ? 0.0 : kInf);
    worst_z = std::max(worst_z, z);
    if (z > 3.0) ++failures;
  }
  return SuiteResult{"pushforward", failures == 0, Json{{"boxes", n_boxes}, {"failures", failures}, {"worst_z", worst_z}}};
}

/// max entrywise |J| over sampled non-seam points, compared with `bound`
/// when one is given (bound <= 0: report only).
inline SuiteResult bounds_suite(const MapExpr& f, double bound, const SuiteOptions& opt = {}) {
  double m = 0.0;
  for (const Point& x : suite_points(f.dim(), opt, 4)) {
    if (f.seam_distance(x) < 10.0 * kFdStep) continue;
    Matrix J = f.has_jacobian() ? f.jacobian(x) : jacobian_fd(f, x).J;
    m = std::max(m, J.cwiseAbs().maxCoeff());
  }
  bool pass = std::isfinite(m) && (bound <= 0.0 || m <= bound * (1.0 + 1e-12));
  return SuiteResult{"bounds", pass, Json{{"max_entry", m}, {"bound", bound > 0.0 ? Json(bound) : Json(nullptr)}}};
}

}  // namespace vpcube
