#pragma once

#include "vpcube/norms.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace vpcube {

struct TranslationOptions {
  std::uint64_t seed = 0;
  std::size_t mc_samples = std::size_t{1} << 15;  ///< samples for the measured (1,p) norm
  double mu = kDefaultMu;
  int max_halvings = 40;
  double schedule_margin = 0.9;
  int max_perturbations = 20;
  EllipseFamilyOptions ellipses;
};

/// One time window [t0, t1] of the subdivided motion and its ellipse family.
struct TranslationWindow {
  double t0 = 0.0, t1 = 1.0;
  EllipseFamily family;
  double r_max = 0.0;
  double r = 0.0;
};

struct TranslationReport {
  std::string case_name;  ///< "identity", "case1" or "case2"
  bool perturbed = false;
  int d = 0;
  double delta = 0.0, p = 1.0;
  std::vector<Point> P, Q;  ///< Q after any perturbation
  std::vector<double> event_times;
  std::vector<TranslationWindow> windows;
  std::optional<double> c;                  ///< uniform schedule exponent (m >= 2)
  std::vector<double> exponents;            ///< d - 1 - p E_j
  std::vector<double> terms;                ///< r_j^{exponent_j}
  int halvings = 0;
  double rho = 0.0;         ///< radius of the balls translated rigidly
  double max_step = 0.0;    ///< max_i |P_i - Q_i|
  double sup_bound = 0.0;   ///< sum_j (max_i |segment_ij| + 2 r_j)
  double sup_measured = 0.0;
  double lp_map = 0.0, lp_deriv = 0.0, lp_deriv_stderr = 0.0;
  double norm_1p = 0.0;     ///< max(lp_map, lp_deriv)
  std::size_t n_samples = 0;

  bool sup_pass() const { return sup_measured < max_step + delta && (case_name != "case1" || sup_bound < max_step + delta); }
  bool norm_pass() const { return norm_1p < delta; }

  std::vector<double> radii() const {
    std::vector<double> r;
    for (const auto& w : windows) r.push_back(w.r);
    return r;
  }

  Json to_json() const {
    Json wins = Json::array();
    for (const auto& w : windows) {
      Json es = Json::array();
      for (const auto& e : w.family.ellipses) es.push_back(vpcube::to_json(e));
      wins.push_back(Json{{"t0", w.t0}, {"t1", w.t1}, {"r", w.r}, {"r_max", w.r_max}, {"b", w.family.b},
                          {"clearance", w.family.clearance}, {"ellipses", es}});
    }
    Json pj = Json::array(), qj = Json::array();
    for (const auto& x : P) pj.push_back(vpcube::to_json(x));
    for (const auto& x : Q) qj.push_back(vpcube::to_json(x));
    return Json{{"case", case_name}, {"perturbed", perturbed}, {"d", d}, {"delta", delta}, {"p", p}, {"P", pj}, {"Q", qj},
                {"event_times", event_times}, {"windows", wins}, {"c", c ? Json(*c) : Json(nullptr)},
                {"exponents", exponents}, {"terms", terms}, {"halvings", halvings}, {"rho", rho}, {"max_step", max_step},
                {"sup_bound", sup_bound}, {"sup_measured", sup_measured}, {"lp_map", lp_map}, {"lp_deriv", lp_deriv},
                {"lp_deriv_stderr", lp_deriv_stderr}, {"norm_1p", norm_1p}, {"n_samples", n_samples},
                {"sup_pass", sup_pass()}, {"norm_pass", norm_pass()}};
  }
};

struct MultiTranslation {
  MapExpr map;
  TranslationReport report;
};

namespace detail {

inline double orient2(const Point& a, const Point& b, const Point& c) {
  return (b(0) - a(0)) * (c(1) - a(1)) - (b(1) - a(1)) * (c(0) - a(0));
}

struct Contact {
  std::size_t i, j;
  double ti, tj;
};

/// Contacts between moving segments. In d = 2 any common point; in d >= 3
/// only shared endpoints (random planes separate everything else). Returns
/// false when a contact is degenerate (same time on both segments, or a
/// collinear overlap).
inline bool find_contacts(const std::vector<Point>& P, const std::vector<Point>& Q, const std::vector<std::size_t>& moving,
                          std::vector<Contact>& out, std::size_t& culprit) {
  const int d = static_cast<int>(P.front().size());
  const double eps = 1e-12;
  out.clear();
  for (std::size_t a = 0; a < moving.size(); ++a) {
    for (std::size_t b = a + 1; b < moving.size(); ++b) {
      const std::size_t i = moving[a], j = moving[b];
      culprit = j;
      if (d >= 3) {
        if ((Q[i] - P[j]).norm() < eps) out.push_back({i, j, 1.0, 0.0});
        if ((P[i] - Q[j]).norm() < eps) out.push_back({i, j, 0.0, 1.0});
        continue;
      }
      const Point &p1 = P[i], &q1 = Q[i], &p2 = P[j], &q2 = Q[j];
      const double l1 = (q1 - p1).squaredNorm(), l2 = (q2 - p2).squaredNorm();
      double o1 = orient2(p1, q1, p2), o2 = orient2(p1, q1, q2);
      double o3 = orient2(p2, q2, p1), o4 = orient2(p2, q2, q1);
      const double tol1 = eps * l1, tol2 = eps * l2;
      if (std::abs(o1) <= tol1 && std::abs(o2) <= tol1) {
        // collinear: overlap of the parameter intervals along segment i
        double s0 = (p2 - p1).dot(q1 - p1) / l1, s1 = (q2 - p1).dot(q1 - p1) / l1;
        double lo = std::min(s0, s1), hi = std::max(s0, s1);
        if (hi < -eps || lo > 1.0 + eps) continue;
        if (std::abs(hi - lo) > eps && std::min(hi, 1.0) - std::max(lo, 0.0) > eps) return false;  // overlap
        // touching at a single point
        double ti = std::clamp(std::abs(hi) < 2 * eps ? 0.0 : 1.0, 0.0, 1.0);
        Point X = p1 + ti * (q1 - p1);
        double tj = (X - p2).dot(q2 - p2) / l2;
        if (std::abs(ti - tj) < 1e-9) return false;
        out.push_back({i, j, ti, tj});
        continue;
      }
      auto sgn = [](double v, double tol) { return v > tol ? 1 : (v < -tol ? -1 : 0); };
      int s1 = sgn(o1, tol1), s2 = sgn(o2, tol1), s3 = sgn(o3, tol2), s4 = sgn(o4, tol2);
      if (s1 * s2 > 0 || s3 * s4 > 0) continue;  // no common point
      if (o3 == o4 || o1 == o2) continue;
      // intersection parameters from the oriented areas
      double ti = o3 / (o3 - o4);
      double tj = o1 / (o1 - o2);
      ti = std::clamp(ti, 0.0, 1.0);
      tj = std::clamp(tj, 0.0, 1.0);
      if (std::abs(ti - tj) < 1e-9) return false;
      out.push_back({i, j, ti, tj});
    }
  }
  return true;
}

/// Uniform c in (0, 1] with 1 + c + ... + c^{m-1} = target (c = 1 when the
/// target is at least m).
inline double schedule_exponent(int m, double target) {
  auto E = [m](double c) {
    double s = 0.0, t = 1.0;
    for (int k = 0; k < m; ++k, t *= c) s += t;
    return s;
  };
  if (E(1.0) <= target) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (E(mid) < target ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace detail

/// Volume preserving map of I^d that translates a small ball around each P_i
/// onto the ball around Q_i, with ||F - Id||_inf < max|P_i - Q_i| + delta and
/// measured ||F - Id||_{1,p} < delta. Requires 0 < p < d - 1.
inline MultiTranslation multi_translation(std::vector<Point> P, std::vector<Point> Q, double delta, double p,
                                          const TranslationOptions& opt = {}) {
  require(!P.empty() && P.size() == Q.size(), "multi_translation: P and Q must be non-empty and of equal length");
  const int d = static_cast<int>(P.front().size());
  require(d >= 2 && d <= kMaxDim, "multi_translation: dimension must be in [2, kMaxDim]");
  require(delta > 0.0, "multi_translation: delta must be positive");
  for (std::size_t i = 0; i < P.size(); ++i) {
    require(P[i].size() == d && Q[i].size() == d, "multi_translation: mixed dimensions");
    require(in_open_unit_cube(P[i]) && in_open_unit_cube(Q[i]), "multi_translation: points must be interior to I^d");
    for (std::size_t j = 0; j < i; ++j) {
      require((P[i] - P[j]).norm() > 0.0, "multi_translation: the P_i must be pairwise distinct");
      require((Q[i] - Q[j]).norm() > 0.0, "multi_translation: the Q_i must be pairwise distinct");
    }
  }
  if (!(p > 0.0 && p < d - 1))
    throw Infeasible("multi_translation: requires 0 < p < d-1 (got p = " + std::to_string(p) + ", d = " +
                     std::to_string(d) + "); for p >= d-1 the (1,p) norm of a translation cannot be made small");

  TranslationReport rep;
  rep.d = d;
  rep.delta = delta;
  rep.p = p;

  std::vector<std::size_t> moving;
  std::vector<Point> obstacles = opt.ellipses.obstacles;
  for (std::size_t i = 0; i < P.size(); ++i) {
    if ((P[i] - Q[i]).norm() > 0.0)
      moving.push_back(i);
    else
      obstacles.push_back(P[i]);
  }
  if (moving.empty()) {
    rep.case_name = "identity";
    rep.P = P;
    rep.Q = Q;
    return {identity_map(d), rep};
  }

  // Contacts, with endpoint perturbation on degenerate coincidences.
  Rng prng = substream(opt.seed, 0x7065727475ULL);
  std::vector<detail::Contact> contacts;
  for (int attempt = 0;; ++attempt) {
    std::size_t culprit = 0;
    if (detail::find_contacts(P, Q, moving, contacts, culprit)) break;
    if (attempt >= opt.max_perturbations)
      throw Infeasible("multi_translation: segments keep coinciding at equal times after " +
                       std::to_string(opt.max_perturbations) + " endpoint perturbations");
    // Best of a few candidates at |shift| in [delta/20, delta/10]: the one
    // whose contact times are furthest apart (thin windows force tiny radii).
    double best_gap = -1.0;
    Point best = Q[culprit];
    for (int k = 0; k < 32; ++k) {
      Point cand = Q[culprit] + (0.05 * delta * (1.0 + uniform01(prng))) * random_unit_vector(prng, d);
      bool ok = in_open_unit_cube(cand) && (cand - P[culprit]).norm() > 0.0;
      for (std::size_t j = 0; j < Q.size() && ok; ++j) ok = j == culprit || (cand - Q[j]).norm() > 0.0;
      if (!ok) continue;
      std::vector<Point> Qc = Q;
      Qc[culprit] = cand;
      std::vector<detail::Contact> cc;
      std::size_t cul = 0;
      double gap = 0.0;
      if (detail::find_contacts(P, Qc, moving, cc, cul)) {
        std::set<double> ev;
        for (const auto& c : cc) {
          ev.insert(c.ti);
          ev.insert(c.tj);
        }
        gap = 1.0;
        for (auto it = ev.begin(); it != ev.end() && std::next(it) != ev.end(); ++it) gap = std::min(gap, *std::next(it) - *it);
      }
      if (gap > best_gap) {
        best_gap = gap;
        best = cand;
      }
    }
    Q[culprit] = best;
    rep.perturbed = true;
  }
  rep.P = P;
  rep.Q = Q;
  for (std::size_t i : moving) rep.max_step = std::max(rep.max_step, (Q[i] - P[i]).norm());

  std::set<double> events;
  for (const auto& c : contacts) {
    events.insert(c.ti);
    events.insert(c.tj);
  }
  rep.event_times.assign(events.begin(), events.end());
  std::vector<double> cuts{0.0};
  for (auto it = events.begin(); it != events.end() && std::next(it) != events.end(); ++it)
    cuts.push_back(0.5 * (*it + *std::next(it)));
  cuts.push_back(1.0);
  const int m = static_cast<int>(cuts.size()) - 1;
  rep.case_name = m == 1 ? "case1" : "case2";

  // Ellipse families per window.
  Rng erng = substream(opt.seed, 0x656c6c6970ULL);
  EllipseFamilyOptions eopt = opt.ellipses;
  eopt.obstacles = obstacles;
  for (int j = 0; j < m; ++j) {
    TranslationWindow w;
    w.t0 = cuts[static_cast<std::size_t>(j)];
    w.t1 = cuts[static_cast<std::size_t>(j) + 1];
    std::vector<Point> A, B;
    for (std::size_t i : moving) {
      A.push_back(P[i] + w.t0 * (Q[i] - P[i]));
      B.push_back(P[i] + w.t1 * (Q[i] - P[i]));
    }
    w.family = build_disjoint_ellipses(A, B, erng, eopt);
    double Rmin = kInf;
    for (const auto& e : w.family.ellipses) Rmin = std::min(Rmin, e.R());
    w.r_max = std::min({0.45 * w.family.clearance, 0.45 * w.family.boundary_distance, 0.5 * Rmin});
    rep.windows.push_back(std::move(w));
  }

  // Radii schedule r_{j+1} = r_j^c.
  double c = 1.0;
  if (m >= 2) {
    c = detail::schedule_exponent(m, 1.0 + opt.schedule_margin * ((d - 1) / p - 1.0));
    rep.c = c;
  }
  auto E = [&](int j) {  // j is 1-based
    double s = 0.0, t = 1.0;
    for (int k = 0; k <= m - j; ++k, t *= c) s += t;
    return s;
  };
  for (int j = 1; j <= m; ++j) rep.exponents.push_back(d - 1 - p * E(j));

  double r1 = kInf;
  for (int j = 0; j < m; ++j)
    r1 = std::min(r1, std::pow(rep.windows[static_cast<std::size_t>(j)].r_max, 1.0 / std::pow(c, j)));

  const Sampler sampler = stratified(opt.mc_samples, opt.seed);
  for (int h = 0; h <= opt.max_halvings; ++h, r1 *= 0.5) {
    rep.halvings = h;
    double rsum = 0.0;
    rep.sup_bound = 0.0;
    rep.rho = kInf;
    rep.terms.clear();
    std::vector<MapExpr> stages;
    Region region;
    for (int j = 0; j < m; ++j) {
      auto& w = rep.windows[static_cast<std::size_t>(j)];
      w.r = std::min(std::pow(r1, std::pow(c, j)), w.r_max);
      rsum += w.r;
      rep.terms.push_back(std::pow(w.r, rep.exponents[static_cast<std::size_t>(j)]));
      double longest = 0.0;
      std::vector<std::pair<MapExpr, Support>> pieces;
      for (const auto& e : w.family.ellipses) {
        pieces.emplace_back(ball_translation(e, w.r, opt.mu), Support::of_ring(make_pseudo_ring(e, w.r)));
        region.boxes.push_back(make_pseudo_ring(e, w.r).bounding_box());
        longest = std::max(longest, 2.0 * e.R());
        rep.rho = std::min(rep.rho, translated_ball_radius(e, w.r));
      }
      rep.sup_bound += longest + 2.0 * w.r;
      stages.push_back(disjoint_union(d, pieces));
    }
    if (2.0 * rsum >= delta) continue;
    MapExpr F = compose_all(stages);

    double sup = 0.0;
    for (std::size_t i : moving) sup = std::max(sup, (F(P[i]) - P[i]).norm());
    auto I = integrate_powers(
        [&](const Point& x, std::span<double> out) {
          Point y = F(x);
          sup = std::max(sup, (y - x).norm());
          Matrix J = F.jacobian(x) - Matrix::Identity(d, d);
          for (int a = 0; a < d; ++a) out[static_cast<std::size_t>(a)] = y(a) - x(a);
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) out[static_cast<std::size_t>(d + a * d + b)] = J(a, b);
        },
        d + d * d, d, p, sampler, region, accept_all(), 6);
    rep.lp_map = 0.0;
    rep.lp_deriv = 0.0;
    for (int a = 0; a < d; ++a) rep.lp_map = std::max(rep.lp_map, lp_from_integral(I[static_cast<std::size_t>(a)], p).norm);
    for (int e = d; e < d + d * d; ++e) {
      LpEstimate est = lp_from_integral(I[static_cast<std::size_t>(e)], p);
      if (est.norm >= rep.lp_deriv) {
        rep.lp_deriv = est.norm;
        rep.lp_deriv_stderr = est.norm_stderr;
      }
    }
    rep.norm_1p = std::max(rep.lp_map, rep.lp_deriv);
    rep.sup_measured = sup;
    rep.n_samples = samples_used(sampler, d, region);
    if (rep.norm_pass()) return {F, rep};
  }
  throw Infeasible("multi_translation: norm targets not met after " + std::to_string(opt.max_halvings) + " radius halvings");
}

}  // namespace vpcube
