#pragma once

#include "vpcube/maps.hpp"

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace vpcube {

// ---------------------------------------------------------------------------
// Samplers

/// Deterministic sample design. stratified: `replicates` independent
/// jittered passes over a k^d cell grid (k^d * replicates <= n); the spread
/// of the per-pass estimates gives the standard error. grid: one pass over
/// cell centres, no error estimate.
struct Sampler {
  enum class Kind { stratified, grid };
  Kind kind = Kind::stratified;
  std::size_t n = std::size_t{1} << 16;
  std::uint64_t seed = 0;
  int replicates = 16;

  int passes() const { return kind == Kind::grid ? 1 : std::max(2, replicates); }
};

inline Sampler stratified(std::size_t n, std::uint64_t seed) { return Sampler{Sampler::Kind::stratified, n, seed, 16}; }
inline Sampler tensor_grid(std::size_t n) { return Sampler{Sampler::Kind::grid, n, 0, 1}; }

inline const char* to_string(Sampler::Kind k) { return k == Sampler::Kind::grid ? "grid" : "stratified"; }

/// Largest k with k^d <= cells (k >= 1).
inline std::size_t cells_per_axis(std::size_t cells, int d) {
  std::size_t k = 1;
  auto pow_d = [d](std::size_t v) {
    std::size_t r = 1;
    for (int i = 0; i < d; ++i) r *= v;
    return r;
  };
  while (pow_d(k + 1) <= cells) ++k;
  return k;
}

/// Union of oriented boxes (empty = the unit cube). Integrals over a union
/// weight every sample by 1 / (number of boxes containing it), so the
/// estimate is unbiased for the integral over the union.
struct Region {
  std::vector<OrientedBox> boxes;

  static Region unit_cube() { return {}; }
  bool is_unit_cube() const { return boxes.empty(); }
};

struct Integral {
  double value = 0.0;
  double stderr_ = 0.0;
};

/// Calls visit(x, weight, pass) for every sample point x; the weights of
/// one pass sum (in expectation of the integrand) to the region's measure.
/// `accept(x)` false redraws the jitter inside the same cell (seams).
template <class Accept, class Visit>
void for_each_sample(const Sampler& s, int d, std::uint64_t stream, const Region& region, Accept&& accept, Visit&& visit) {
  check_dimension(d);
  require(s.n >= 1, "sampler: n must be >= 1");
  const int passes = s.passes();
  std::vector<OrientedBox> boxes = region.boxes;
  if (region.is_unit_cube()) boxes.push_back(OrientedBox{Point::Constant(d, 0.5), Matrix::Identity(d, d), Point::Constant(d, 0.5)});
  const bool weighted = boxes.size() > 1;
  const std::size_t per_box = std::max<std::size_t>(1, s.n / (boxes.size() * static_cast<std::size_t>(passes)));
  const std::size_t k = cells_per_axis(per_box, d);
  std::size_t cells = 1;
  for (int i = 0; i < d; ++i) cells *= k;

  for (int pass = 0; pass < passes; ++pass) {
    Rng rng = substream(s.seed, stream * 4096 + static_cast<std::uint64_t>(pass));
    for (const auto& box : boxes) {
      const double w0 = box.volume() / static_cast<double>(cells);
      for (std::size_t c = 0; c < cells; ++c) {
        std::size_t rest = c;
        Point cell(d);
        for (int a = 0; a < d; ++a) {
          cell(a) = static_cast<double>(rest % k);
          rest /= k;
        }
        Point x(d);
        for (int attempt = 0; attempt < 16; ++attempt) {
          Point u(d);
          for (int a = 0; a < d; ++a) {
            double j = s.kind == Sampler::Kind::grid ? 0.5 : uniform01(rng);
            u(a) = (cell(a) + j) / static_cast<double>(k);
          }
          x = box.at(2.0 * u - Point::Ones(d));
          if (s.kind == Sampler::Kind::grid || accept(x)) break;
        }
        double w = w0;
        if (weighted) {
          int count = 0;
          for (const auto& b : boxes) count += b.contains(x) ? 1 : 0;
          w /= std::max(count, 1);
        }
        visit(x, w, pass);
      }
    }
  }
}

/// Mean and standard error over passes.
inline Integral summarize(const std::vector<CompensatedSum>& per_pass) {
  const double n = static_cast<double>(per_pass.size());
  CompensatedSum total;
  for (const auto& v : per_pass) total.add(v.value());
  Integral out;
  out.value = total.value() / n;
  if (per_pass.size() > 1) {
    CompensatedSum ss;
    for (const auto& v : per_pass) ss.add((v.value() - out.value) * (v.value() - out.value));
    out.stderr_ = std::sqrt(ss.value() / (n - 1.0) / n);
  }
  return out;
}

[[noreturn]] inline void non_finite_error(const char* what, const Point& x) {
  std::ostringstream os;
  os << what << ": non-finite value at x = (";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ")";
  throw Error(os.str());
}

/// Integrals of |g_e|^p over the region (restricted to I^d) for each of the
/// n_out components filled by g(x, out).
template <class G, class Accept>
std::vector<Integral> integrate_powers(G&& g, int n_out, int d, double p, const Sampler& s, const Region& region,
                                       Accept&& accept, std::uint64_t stream = 0) {
  require(p > 0.0 && std::isfinite(p), "p must be positive and finite");
  const int passes = s.passes();
  std::vector<std::vector<CompensatedSum>> acc(static_cast<std::size_t>(n_out), std::vector<CompensatedSum>(static_cast<std::size_t>(passes)));
  std::vector<double> out(static_cast<std::size_t>(n_out));
  for_each_sample(s, d, stream, region, accept, [&](const Point& x, double w, int pass) {
    if (distance_to_unit_boundary(x) < 0.0) return;
    g(x, std::span<double>(out));
    for (int e = 0; e < n_out; ++e) {
      double v = out[static_cast<std::size_t>(e)];
      if (!std::isfinite(v)) non_finite_error("integrand", x);
      if (v != 0.0) acc[static_cast<std::size_t>(e)][static_cast<std::size_t>(pass)].add(w * std::pow(std::abs(v), p));
    }
  });
  std::vector<Integral> res;
  res.reserve(acc.size());
  for (const auto& a : acc) res.push_back(summarize(a));
  return res;
}

inline auto accept_all() {
  return [](const Point&) { return true; };
}

// ---------------------------------------------------------------------------
// L^p quasi-norms

struct LpEstimate {
  double norm = 0.0;             ///< (int |f|^p)^{1/p}
  double norm_stderr = 0.0;      ///< delta-method error of norm
  double integral = 0.0;         ///< int |f|^p
  double integral_stderr = 0.0;
};

inline LpEstimate lp_from_integral(const Integral& I, double p) {
  LpEstimate e;
  e.integral = I.value;
  e.integral_stderr = I.stderr_;
  e.norm = I.value > 0.0 ? std::pow(I.value, 1.0 / p) : 0.0;
  e.norm_stderr = I.value > 0.0 ? std::pow(I.value, 1.0 / p - 1.0) * I.stderr_ / p : 0.0;
  return e;
}

/// L^p quasi-norm of a scalar field over I^d (or a region inside it).
template <class F>
LpEstimate lp_quasi_norm(F&& field, int d, double p, const Sampler& s, const Region& region = Region::unit_cube()) {
  auto I = integrate_powers([&](const Point& x, std::span<double> out) { out[0] = field(x); }, 1, d, p, s, region, accept_all());
  return lp_from_integral(I[0], p);
}

/// Entrywise L^p estimates of a d x d matrix field; `seam(x)` returns the
/// distance to the non-smooth set, points closer than `seam_gap` are redrawn.
template <class F, class Seam>
std::vector<LpEstimate> lp_matrix_entries(F&& field, int d, double p, const Sampler& s, const Region& region, Seam&& seam,
                                          double seam_gap) {
  auto I = integrate_powers(
      [&](const Point& x, std::span<double> out) {
        Matrix M = field(x);
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(i * d + j)] = M(i, j);
      },
      d * d, d, p, s, region, [&](const Point& x) { return seam(x) >= seam_gap; }, 1);
  std::vector<LpEstimate> res;
  for (const auto& i : I) res.push_back(lp_from_integral(i, p));
  return res;
}

// ---------------------------------------------------------------------------
// Sup distance

struct SupEstimate {
  double value = 0.0;   ///< lower bound on the true sup
  double resolution = 0.0;  ///< grid cell side
  Point argmax;
};

/// max |f(x) - g(x)| over the 2^{grid_order d} cell centres of I^d, then a
/// local pattern search around the ten largest values.
inline SupEstimate sup_distance(const MapExpr& f, const MapExpr& g, int grid_order) {
  require(f.dim() == g.dim(), "sup_distance: dimension mismatch");
  const int d = f.dim();
  require(grid_order >= 1 && grid_order * d <= 24, "sup_distance: grid_order * d must be in [1, 24]");
  const std::size_t k = std::size_t{1} << grid_order;
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= k;
  const double h = 1.0 / static_cast<double>(k);
  auto dist = [&](const Point& x) { return (f(x) - g(x)).norm(); };

  std::vector<std::pair<double, Point>> top;
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rest = c;
    Point x(d);
    for (int a = 0; a < d; ++a) {
      x(a) = (static_cast<double>(rest % k) + 0.5) * h;
      rest /= k;
    }
    double v = dist(x);
    if (!std::isfinite(v)) non_finite_error("sup_distance", x);
    if (top.size() < 10 || v > top.back().first) {
      top.emplace_back(v, x);
      std::stable_sort(top.begin(), top.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      if (top.size() > 10) top.pop_back();
    }
  }

  SupEstimate best{top.front().first, h, top.front().second};
  std::size_t neighbours = 1;
  for (int i = 0; i < d; ++i) neighbours *= 3;
  for (auto [v, x] : top) {
    double step = 0.5 * h;
    for (int it = 0; it < 60 && step > 1e-12; ++it) {
      bool moved = false;
      for (std::size_t nb = 0; nb < neighbours; ++nb) {
        std::size_t rest = nb;
        Point y = x;
        for (int a = 0; a < d; ++a) {
          y(a) = std::clamp(y(a) + (static_cast<double>(rest % 3) - 1.0) * step, 0.0, 1.0);
          rest /= 3;
        }
        double w = dist(y);
        if (w > v) {
          v = w;
          x = y;
          moved = true;
        }
      }
      if (!moved) step *= 0.5;
    }
    if (v > best.value) best = SupEstimate{v, h, x};
  }
  return best;
}

// ---------------------------------------------------------------------------
// Weak metric and disagreement

/// rho(f,g) = inf{delta : measure{|f-g| >= delta} < delta}, by bisection on
/// [0, sqrt(d)] against the empirical distribution of |f-g|.
inline double weak_metric(const MapExpr& f, const MapExpr& g, const Sampler& s, double tol = 1e-4) {
  require(f.dim() == g.dim(), "weak_metric: dimension mismatch");
  const int d = f.dim();
  std::vector<std::pair<double, double>> samples;  // (distance, weight)
  double total = 0.0;
  for_each_sample(s, d, 2, Region::unit_cube(), accept_all(), [&](const Point& x, double w, int) {
    samples.emplace_back((f(x) - g(x)).norm(), w);
    total += w;
  });
  auto exceed = [&](double delta) {
    CompensatedSum m;
    for (const auto& [v, w] : samples)
      if (v >= delta) m.add(w);
    return m.value() / total;
  };
  double lo = 0.0, hi = std::sqrt(static_cast<double>(d));
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    if (exceed(mid) < mid)
      hi = mid;
    else
      lo = mid;
  }
  // f = g up to rounding: the exceedance set of any delta > 0 is empty.
  if (exceed(std::numeric_limits<double>::min()) == 0.0) return 0.0;
  return hi;
}

/// Measure of {x : |f(x) - g(x)| > tol}, with standard error.
inline Integral disagreement_measure(const MapExpr& f, const MapExpr& g, const Sampler& s, double tol = 1e-9) {
  require(f.dim() == g.dim(), "disagreement_measure: dimension mismatch");
  require(tol > 0.0, "disagreement_measure: tol must be positive");
  auto I = integrate_powers([&](const Point& x, std::span<double> out) { out[0] = (f(x) - g(x)).norm() > tol ? 1.0 : 0.0; },
                            1, f.dim(), 1.0, s, Region::unit_cube(), accept_all(), 3);
  return I[0];
}

/// Measure of f^{-1}(box) estimated as the fraction of uniform y whose
/// preimage lies in the box; equals the box volume for measure preserving f.
inline Integral preimage_measure(const MapExpr& f_inverse, const OrientedBox& box, const Sampler& s) {
  auto I = integrate_powers([&](const Point& y, std::span<double> out) { out[0] = box.contains(f_inverse(y)) ? 1.0 : 0.0; },
                            1, f_inverse.dim(), 1.0, s, Region::unit_cube(), accept_all(), 4);
  return I[0];
}

// ---------------------------------------------------------------------------
// Sobolev-type distance

struct NormReport {
  double sup_est = 0.0;
  int sup_grid_order = 0;
  double lp_map = 0.0;    ///< max_i ||f_i - g_i||_p
  double lp_deriv = 0.0;  ///< max_{i,j} ||(Df - Dg)_{ij}||_p
  double p = 1.0;
  double mc_stderr = 0.0; ///< standard error of lp_deriv
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;

  double combined() const { return std::max(sup_est, lp_deriv); }

  Json to_json() const {
    return Json{{"sup_est", sup_est}, {"sup_grid_order", sup_grid_order}, {"lp_map", lp_map}, {"lp_deriv", lp_deriv},
                {"combined", combined()}, {"p", p}, {"mc_stderr", mc_stderr}, {"n_samples", n_samples}, {"seed", seed}};
  }
  static std::vector<std::string> csv_columns() {
    return {"sup_est", "sup_grid_order", "lp_map", "lp_deriv", "combined", "p", "mc_stderr", "n_samples", "seed"};
  }
  std::vector<Json> csv_values() const {
    return {sup_est, sup_grid_order, lp_map, lp_deriv, combined(), p, mc_stderr, n_samples, seed};
  }
};

inline std::size_t samples_used(const Sampler& s, int d, const Region& region = Region::unit_cube()) {
  std::size_t nb = region.is_unit_cube() ? 1 : region.boxes.size();
  std::size_t per_box = std::max<std::size_t>(1, s.n / (nb * static_cast<std::size_t>(s.passes())));
  std::size_t k = cells_per_axis(per_box, d), cells = 1;
  for (int i = 0; i < d; ++i) cells *= k;
  return cells * nb * static_cast<std::size_t>(s.passes());
}

struct SobolevOptions {
  int grid_order = 6;
  Region region;  ///< where f and g may differ (default: all of I^d)
};

/// ||f-g||_inf, max_i ||f_i-g_i||_p and max_{ij} ||(F-G)_{ij}||_p with
/// F, G the pairs' matrix fields.
inline NormReport sobolev_distance(const MapPair& f, const MapPair& g, double p, const Sampler& s,
                                   const SobolevOptions& opt = {}) {
  const int d = f.map.dim();
  require(g.map.dim() == d, "sobolev_distance: dimension mismatch");
  NormReport rep;
  rep.p = p;
  rep.seed = s.seed;
  rep.sup_grid_order = opt.grid_order;
  rep.sup_est = sup_distance(f.map, g.map, opt.grid_order).value;
  const double gap = 10.0 * kFdStep;
  auto I = integrate_powers(
      [&](const Point& x, std::span<double> out) {
        Point dv = f.map(x) - g.map(x);
        Matrix dm = f.field(x) - g.field(x);
        for (int i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] = dv(i);
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(d + i * d + j)] = dm(i, j);
      },
      d + d * d, d, p, s, opt.region,
      [&](const Point& x) { return f.map.seam_distance(x) >= gap && g.map.seam_distance(x) >= gap; }, 5);
  for (int i = 0; i < d; ++i) rep.lp_map = std::max(rep.lp_map, lp_from_integral(I[static_cast<std::size_t>(i)], p).norm);
  for (int e = d; e < d + d * d; ++e) {
    LpEstimate est = lp_from_integral(I[static_cast<std::size_t>(e)], p);
    if (est.norm >= rep.lp_deriv) {
      rep.lp_deriv = est.norm;
      rep.mc_stderr = est.norm_stderr;
    }
  }
  rep.n_samples = samples_used(s, d, opt.region);
  return rep;
}

inline NormReport sobolev_distance(const MapExpr& f, const MapExpr& g, double p, const Sampler& s,
                                   const SobolevOptions& opt = {}) {
  return sobolev_distance(derivative_pair(f), derivative_pair(g), p, s, opt);
}

}  // namespace vpcube
