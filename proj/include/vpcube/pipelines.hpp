#pragma once

#include "vpcube/permutations.hpp"
#include "vpcube/suites.hpp"
#include "vpcube/translation.hpp"

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace vpcube {

// ---------------------------------------------------------------------------
// Reports

/// achieved <op> bound, with an explicit tolerance in favour of the claim.
struct Target {
  std::string name;
  double achieved = 0.0;
  std::string op;  ///< "<", "<=", ">", ">=" or "true"
  double bound = 0.0;
  double tolerance = 0.0;
  bool pass = false;

  Json to_json() const {
    return Json{{"name", name}, {"achieved", achieved}, {"op", op}, {"bound", bound}, {"tolerance", tolerance}, {"pass", pass}};
  }
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;

  std::string to_csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
    out += "\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ",";
        const Json& v = row[i];
        if (v.is_number_float())
          out += format_double(v.get<double>());
        else if (v.is_string())
          out += v.get<std::string>();
        else
          out += v.dump();
      }
      out += "\n";
    }
    return out;
  }
};

struct ExperimentReport {
  std::string name;
  std::uint64_t seed = 0;
  Json inputs = Json::object();
  Json parameters = Json::object();  ///< internal free parameters chosen by searches
  Json achieved = Json::object();
  std::vector<Target> targets;
  std::vector<Table> tables;
  Json program;  ///< replayable map program of the output map (if any)
  double runtime_seconds = 0.0;  ///< not part of to_json()

  void achieve(const std::string& key, Json value) { achieved[key] = std::move(value); }

  Target& target(const std::string& n, double a, const std::string& op, double b, double tol = 0.0) {
    bool ok = false;
    if (op == "<") ok = a < b + tol;
    else if (op == "<=") ok = a <= b + tol;
    else if (op == ">") ok = a > b - tol;
    else if (op == ">=") ok = a >= b - tol;
    else throw InvalidArgument("unknown target relation " + op);
    if (!std::isfinite(a)) ok = false;
    targets.push_back(Target{n, a, op, b, tol, ok});
    return targets.back();
  }
  Target& target_true(const std::string& n, bool ok) {
    targets.push_back(Target{n, ok ? 1.0 : 0.0, "true", 1.0, 0.0, ok});
    return targets.back();
  }

  bool pass() const {
    return std::all_of(targets.begin(), targets.end(), [](const Target& t) { return t.pass; });
  }

  std::vector<std::string> failures() const {
    std::vector<std::string> f;
    for (const auto& t : targets)
      if (!t.pass) f.push_back(t.name + ": achieved " + format_double(t.achieved) + " " + t.op + " " + format_double(t.bound) +
                               " (tol " + format_double(t.tolerance) + ") failed");
    return f;
  }

  Json to_json() const {
    Json ts = Json::array();
    for (const auto& t : targets) ts.push_back(t.to_json());
    Json tabs = Json::array();
    for (const auto& t : tables) tabs.push_back(Json{{"name", t.name}, {"columns", t.columns}, {"rows", t.rows.size()}});
    return Json{{"experiment", name}, {"seed", seed},       {"inputs", inputs}, {"parameters", parameters},
                {"achieved", achieved}, {"targets", ts},  {"pass", pass()},   {"tables", tabs}};
  }
};

struct PipelineOptions {
  std::uint64_t seed = 0;
  std::size_t samples = std::size_t{1} << 16;
  int grid_order = 6;
  std::size_t suite_points = 2000;
  double det_tol = 1e-8;
  double det_tol_fd = 1e-4;
  double inverse_tol = 1e-10;
};

/// Runs the det and inverse suites on f and records them as targets.
inline void add_volume_suite(ExperimentReport& rep, const std::string& prefix, const MapExpr& f, const PipelineOptions& opt,
                             std::vector<OrientedBox> focus = {}) {
  SuiteOptions so;
  so.n = opt.suite_points;
  so.seed = opt.seed;
  so.det_tol = opt.det_tol;
  so.det_tol_fd = opt.det_tol_fd;
  so.inverse_tol = opt.inverse_tol;
  so.focus = std::move(focus);
  SuiteResult det = det_suite(f, so);
  if (f.has_jacobian()) rep.target(prefix + "det_dev_analytic", det.detail["max_dev_analytic"].get<double>(), "<=", so.det_tol);
  rep.target(prefix + "det_dev_fd", det.detail["max_dev_fd"].get<double>(), "<=", so.det_tol_fd);
  if (f.invertible()) {
    SuiteResult inv = inverse_suite(f, so);
    rep.target(prefix + "inverse_dev", inv.detail["max_dev"].get<double>(), "<=", so.inverse_tol);
  }
}

inline Point first_orthogonal_axis(const Point& u) {
  const int d = static_cast<int>(u.size());
  Eigen::Index k = 0;
  u.cwiseAbs().minCoeff(&k);
  Point v = unit_vector(d, static_cast<int>(k));
  v -= u.dot(v) * u;
  return v.normalized();
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Scaling of ||D(F - Id)||_p^p for a single ball translation

/// max_{ij} of int |d_j (F - Id)_i|^p over the pseudo-ring of E.
inline std::pair<Integral, std::size_t> deriv_power_integral(const MapExpr& F, const PseudoRing& pr, double p, const Sampler& s) {
  const int d = F.dim();
  Region region{{pr.bounding_box()}};
  auto I = integrate_powers(
      [&](const Point& x, std::span<double> out) {
        Matrix J = F.jacobian(x) - Matrix::Identity(d, d);
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) out[static_cast<std::size_t>(a * d + b)] = J(a, b);
      },
      d * d, d, p, s, region, accept_all(), 7);
  std::size_t best = 0;
  for (std::size_t e = 1; e < I.size(); ++e)
    if (I[e].value > I[best].value) best = e;
  return {I[best], best};
}

inline ExperimentReport scaling_experiment(const Point& P, const Point& Q, const std::vector<double>& p_list,
                                           const std::vector<double>& r_list, const PipelineOptions& opt) {
  const int d = static_cast<int>(P.size());
  require(d >= 2, "scaling: dimension must be >= 2");
  require(r_list.size() >= 2, "scaling: need at least two radii");
  require(!p_list.empty(), "scaling: need at least one p");
  ExperimentReport rep;
  rep.name = "scaling";
  rep.seed = opt.seed;
  Point u1 = (Q - P).normalized();
  Ellipse E = Ellipse::through_vertices(P, Q, first_orthogonal_axis(u1), 1.0);
  double bdist = kInf;
  for (const auto& x : E.discretize(2048)) bdist = std::min(bdist, distance_to_unit_boundary(x));
  for (double r : r_list) {
    if (!(r > 0.0 && r < E.R() && r < bdist))
      throw Infeasible("scaling: radius " + format_double(r) + " does not give a pseudo-ring inside I^d with R > r");
  }
  rep.inputs = Json{{"d", d}, {"P", to_json(P)}, {"Q", to_json(Q)}, {"p_list", p_list}, {"r_list", r_list}};
  rep.parameters = Json{{"ellipse", to_json(E)}};

  Table tab{"scaling", {"p", "r", "integral", "stderr", "entry"}, {}};
  const Sampler s = stratified(opt.samples, opt.seed);
  Json slopes = Json::object();
  for (double p : p_list) {
    std::vector<double> vals;
    for (double r : r_list) {
      MapExpr F = ball_translation(E, r);
      auto [I, entry] = deriv_power_integral(F, make_pseudo_ring(E, r), p, s);
      vals.push_back(I.value);
      tab.rows.push_back({p, r, I.value, I.stderr_, static_cast<int>(entry)});
    }
    double slope = loglog_slope(r_list, vals);
    const double expected = d - 1 - p;
    std::string key = "p=" + format_double(p);
    slopes[key] = Json{{"slope", slope}, {"expected", expected}};
    if (p < d - 1) {
      rep.target("slope_lower[" + key + "]", slope, ">=", expected - 0.2);
      rep.target("slope_upper[" + key + "]", slope, "<=", expected + 0.2);
    } else if (p > d - 1) {
      // values must grow as r decreases (r_list sorted by decreasing r)
      bool increasing = true;
      for (std::size_t i = 1; i < vals.size(); ++i) {
        bool smaller_r = r_list[i] < r_list[i - 1];
        increasing = increasing && (smaller_r ? vals[i] > vals[i - 1] : vals[i] < vals[i - 1]);
      }
      rep.target_true("growth_as_r_decreases[" + key + "]", increasing);
      rep.target("slope_negative[" + key + "]", slope, "<", 0.0);
    }
  }
  rep.achieve("slopes", slopes);
  rep.tables.push_back(std::move(tab));
  MapExpr F0 = ball_translation(E, r_list.front());
  add_volume_suite(rep, "", F0, opt, {make_pseudo_ring(E, r_list.front()).bounding_box()});
  rep.program = F0.program();
  return rep;
}

// ---------------------------------------------------------------------------
// Multi translation as an experiment

inline ExperimentReport translation_experiment(const std::vector<Point>& P, const std::vector<Point>& Q, double delta, double p,
                                               const PipelineOptions& opt, MapExpr* out = nullptr) {
  ExperimentReport rep;
  rep.name = "translation";
  rep.seed = opt.seed;
  Json pj = Json::array(), qj = Json::array();
  for (const auto& x : P) pj.push_back(to_json(x));
  for (const auto& x : Q) qj.push_back(to_json(x));
  rep.inputs = Json{{"P", pj}, {"Q", qj}, {"delta", delta}, {"p", p}};
  TranslationOptions to;
  to.seed = opt.seed;
  to.mc_samples = opt.samples;
  MultiTranslation mt = multi_translation(P, Q, delta, p, to);
  const auto& tr = mt.report;
  rep.parameters = tr.to_json();
  rep.target("sup_measured", tr.sup_measured, "<", tr.max_step + delta);
  if (tr.case_name == "case1") rep.target("sup_bound", tr.sup_bound, "<", tr.max_step + delta);
  rep.target("norm_1p", tr.norm_1p, "<", delta);

  // rigid translation of the balls B(P_i, rho)
  Rng rng = substream(opt.seed, 0x7472616e73ULL);
  double dev = 0.0;
  const int d = static_cast<int>(P.front().size());
  for (std::size_t i = 0; i < tr.P.size(); ++i) {
    if ((tr.P[i] - tr.Q[i]).norm() == 0.0) continue;
    for (int k = 0; k < 100; ++k) {
      Point v = random_point_in_ball(rng, zeros(d), tr.rho) ;
      dev = std::max(dev, (mt.map(tr.P[i] + v) - (tr.Q[i] + v)).norm());
    }
  }
  rep.target("ball_translation_dev", dev, "<=", 1e-9);
  rep.achieve("rho", tr.rho);
  rep.achieve("norm_1p", tr.norm_1p);
  rep.achieve("sup_measured", tr.sup_measured);

  std::vector<OrientedBox> focus;
  for (const auto& w : tr.windows)
    for (const auto& e : w.family.ellipses) focus.push_back(make_pseudo_ring(e, w.r).bounding_box());
  add_volume_suite(rep, "", mt.map, opt, focus);

  Table tab{"windows", {"window", "t0", "t1", "r", "r_max", "b", "exponent", "term"}, {}};
  for (std::size_t j = 0; j < tr.windows.size(); ++j) {
    const auto& w = tr.windows[j];
    tab.rows.push_back({static_cast<int>(j + 1), w.t0, w.t1, w.r, w.r_max, w.family.b, tr.exponents[j], tr.terms[j]});
  }
  rep.tables.push_back(std::move(tab));

  // Schedule terms r_j^{exponent_j} at r_1, r_1/2, r_1/4.
  if (tr.case_name == "case2") {
    Table sched{"schedule", {"halving", "window", "r", "exponent", "term"}, {}};
    const double c = tr.c.value_or(1.0);
    const double r1 = tr.windows.front().r;
    bool decreasing = true;
    std::vector<double> prev;
    for (int h = 0; h <= 2; ++h) {
      std::vector<double> cur;
      for (std::size_t j = 0; j < tr.windows.size(); ++j) {
        double r = std::min(std::pow(std::ldexp(r1, -h), std::pow(c, static_cast<double>(j))), tr.windows[j].r_max);
        double term = std::pow(r, tr.exponents[j]);
        cur.push_back(term);
        sched.rows.push_back({h, static_cast<int>(j + 1), r, tr.exponents[j], term});
      }
      for (std::size_t j = 0; j < prev.size(); ++j) decreasing = decreasing && cur[j] < prev[j];
      prev = cur;
    }
    rep.target_true("schedule_terms_decreasing", decreasing);
    rep.tables.push_back(std::move(sched));
  }
  rep.program = mt.map.program();
  if (out) *out = mt.map;
  return rep;
}

// ---------------------------------------------------------------------------
// Lusin-type approximation of a dyadic permutation

struct LusinResult {
  MapExpr f;
  ExperimentReport report;
};

inline LusinResult lusin_pipeline(const DyadicPermutation& P, double delta, double gamma, double p, const PipelineOptions& opt) {
  const int d = P.dim();
  require(p > 0.0 && p < 1.0, "lusin: p must be in (0,1)");
  require(delta > 0.0 && gamma > 0.0 && gamma < 1.0, "lusin: delta > 0 and gamma in (0,1) required");
  ExperimentReport rep;
  rep.name = "lusin";
  rep.seed = opt.seed;
  rep.inputs = Json{{"permutation", P.to_json()}, {"delta", delta}, {"gamma", gamma}, {"p", p}};
  const Sampler s = stratified(opt.samples, opt.seed);
  const MapExpr Pmap = as_map(P);
  const DyadicDecomposition& dec = P.decomposition();

  if (P.is_identity()) {
    MapExpr id = identity_map(d);
    rep.achieve("sup", 0.0);
    rep.achieve("lp_deriv", 0.0);
    rep.achieve("disagreement", 0.0);
    rep.target("sup", 0.0, "<", delta);
    rep.target("lp_deriv", 0.0, "<", delta);
    rep.target("disagreement", 0.0, "<", gamma);
    rep.program = id.program();
    return {id, rep};
  }

  std::vector<Point> C, PC;
  for (std::size_t i = 0; i < dec.size(); ++i) {
    C.push_back(dec.center(i));
    PC.push_back(dec.center(P[i]));
  }
  TranslationOptions to;
  to.seed = opt.seed;
  to.mc_samples = opt.samples;
  MultiTranslation mt = multi_translation(C, PC, delta, p, to);
  const double h = 0.5 * dec.side();
  const double rho = mt.report.rho;
  const double alpha = std::min(0.5, std::pow(rho / (std::sqrt(static_cast<double>(d)) * h), d));

  // F = P on sigma_i^alpha, checked by sampling
  Rng rng = substream(opt.seed, 0x616c706861ULL);
  double alpha_dev = 0.0;
  const double ha = h * std::pow(alpha, 1.0 / d);
  for (std::size_t i = 0; i < dec.size(); ++i)
    for (int k = 0; k < 50; ++k) {
      Point x = C[i];
      for (int a = 0; a < d; ++a) x(a) += uniform(rng, -ha, ha);
      alpha_dev = std::max(alpha_dev, (mt.map(x) - Pmap(x)).norm());
    }
  rep.target("F_equals_P_on_alpha_cubes", alpha_dev, "<=", 1e-9);

  MapExpr f;
  NormReport nr;
  double beta = 0.0;
  int steps = 0;
  for (int k = 1; k <= 12; ++k) {
    beta = 1.0 - gamma * std::pow(0.5, k);
    steps = k;
    MapExpr T = dyadic_dilatation(dec, d, alpha, beta);
    f = compose_all({invert(T), mt.map, T});
    nr = sobolev_distance(f, identity_map(d), p, s, {opt.grid_order, {}});
    if (nr.lp_deriv < delta) break;
  }
  rep.parameters = Json{{"translation", mt.report.to_json()}, {"alpha", alpha}, {"beta", beta}, {"beta_steps", steps}};

  Integral dis = disagreement_measure(f, Pmap, s);
  // f = P on sigma_i^beta
  double beta_dev = 0.0;
  const double hb = h * std::pow(beta, 1.0 / d);
  for (std::size_t i = 0; i < dec.size(); ++i)
    for (int k = 0; k < 100; ++k) {
      Point x = C[i];
      for (int a = 0; a < d; ++a) x(a) += uniform(rng, -hb, hb);
      beta_dev = std::max(beta_dev, (f(x) - Pmap(x)).norm());
    }
  const double pshift = P.max_shift();
  rep.achieve("sup", nr.sup_est);
  rep.achieve("perm_sup", pshift);
  rep.achieve("lp_deriv", nr.lp_deriv);
  rep.achieve("lp_deriv_stderr", nr.mc_stderr);
  rep.achieve("disagreement", dis.value);
  rep.achieve("disagreement_stderr", dis.stderr_);
  rep.target("sup", nr.sup_est, "<", pshift + delta);
  rep.target("lp_deriv", nr.lp_deriv, "<", delta);
  rep.target("disagreement", dis.value, "<", gamma, 3.0 * dis.stderr_);
  rep.target("f_equals_P_on_beta_cubes", beta_dev, "<=", 1e-9);
  add_volume_suite(rep, "", f, opt);
  rep.tables.push_back(Table{"lusin",
                             {"alpha", "beta", "sup", "perm_sup", "lp_deriv", "lp_deriv_stderr", "disagreement", "disagreement_stderr"},
                             {{alpha, beta, nr.sup_est, pshift, nr.lp_deriv, nr.mc_stderr, dis.value, dis.stderr_}}});
  rep.program = f.program();
  return {f, rep};
}

// ---------------------------------------------------------------------------
// Transitivity: g = F o f with g(c_k) = c_{k+1}

struct TransitivityResult {
  MapExpr g;
  DyadicPermutation perm;
  CyclicTag cycle;
  ExperimentReport report;
};

inline TransitivityResult transitivity_pipeline(const MapExpr& f, double epsilon, int m, double p, const PipelineOptions& opt) {
  const int d = f.dim();
  require(epsilon > 0.0, "transitivity: epsilon must be positive");
  auto [P, tag] = boustrophedon_cycle(m, d);
  const auto& dec = P.decomposition();
  const std::size_t N = tag.cycle.size();
  ExperimentReport rep;
  rep.name = "transitivity";
  rep.seed = opt.seed;
  rep.inputs = Json{{"d", d}, {"m", m}, {"epsilon", epsilon}, {"p", p}, {"f", f.program()}};

  std::vector<Point> from, to;
  for (std::size_t k = 0; k < N; ++k) {
    from.push_back(f(dec.center(tag.cycle[k])));
    to.push_back(dec.center(tag.cycle[(k + 1) % N]));
  }
  TranslationOptions topt;
  topt.seed = opt.seed;
  topt.mc_samples = opt.samples;
  MultiTranslation mt = multi_translation(from, to, epsilon, p, topt);
  MapExpr g = compose(f, mt.map);
  rep.parameters = Json{{"permutation", P.to_json()}, {"cycle", tag.cycle}, {"translation", mt.report.to_json()}};

  // orbit of c_1
  Point x = dec.center(tag.cycle[0]);
  double orbit_dev = 0.0;
  Table orbit{"orbit", {"k", "cube", "error"}, {}};
  for (std::size_t k = 1; k <= N; ++k) {
    x = g(x);
    std::size_t want = tag.cycle[k % N];
    double e = (x - dec.center(want)).norm();
    orbit_dev = std::max(orbit_dev, e);
    orbit.rows.push_back({static_cast<int>(k), static_cast<int>(want), e});
  }
  rep.target("orbit_dev", orbit_dev, "<=", 1e-9);

  // order-1 cubes A, B: a tracked orbit point of A lands in B
  DyadicDecomposition coarse(1, d);
  std::size_t witnessed = 0, pairs = 0;
  for (std::size_t A = 0; A < coarse.size(); ++A)
    for (std::size_t B = 0; B < coarse.size(); ++B) {
      ++pairs;
      std::size_t start = 0;
      while (!coarse.cube(A).contains_interior(dec.center(tag.cycle[start]))) ++start;
      Point y = dec.center(tag.cycle[start]);
      for (std::size_t n = 1; n <= N; ++n) {
        y = g(y);
        if (coarse.cube(B).contains_interior(y)) {
          ++witnessed;
          break;
        }
      }
    }
  rep.target("transitive_pairs_witnessed", static_cast<double>(witnessed), ">=", static_cast<double>(pairs));

  const Sampler s = stratified(opt.samples, opt.seed);
  NormReport nr = sobolev_distance(g, f, p, s, {opt.grid_order, {}});
  rep.achieve("sup", nr.sup_est);
  rep.achieve("lp_deriv", nr.lp_deriv);
  rep.achieve("lp_deriv_stderr", nr.mc_stderr);
  rep.achieve("orbit_dev", orbit_dev);
  rep.target("sup", nr.sup_est, "<", epsilon);
  rep.target("lp_deriv", nr.lp_deriv, "<", epsilon);
  std::vector<OrientedBox> focus;
  for (const auto& w : mt.report.windows)
    for (const auto& e : w.family.ellipses) focus.push_back(make_pseudo_ring(e, w.r).bounding_box());
  add_volume_suite(rep, "", g, opt, focus);
  rep.tables.push_back(std::move(orbit));
  rep.tables.push_back(Table{"norms", NormReport::csv_columns(), {nr.csv_values()}});
  rep.program = g.program();
  return {g, P, tag, rep};
}

// ---------------------------------------------------------------------------
// Explicit example: f -> Id uniformly while Df -> DJ = diag(-1, -1, 1, ...)

inline constexpr double kSection7Alpha = 0.125;

struct Section7Map {
  MapPair pair;  ///< (f, DJ)
  MapExpr f;
  double alpha = kSection7Alpha;
  double beta = 0.0;
  DyadicDecomposition dec;  ///< order m decomposition of the first two axes
};

inline Matrix section7_target(int d) {
  Matrix DJ = Matrix::Identity(d, d);
  DJ(0, 0) = -1.0;
  DJ(1, 1) = -1.0;
  return DJ;
}

inline Section7Map section7_map(int m, double beta, int d, double mu = kDefaultMu) {
  require(d >= 2, "section7: dimension must be >= 2");
  require(beta > kSection7Alpha && beta < 1.0, "section7: beta must be in (1/8, 1)");
  DyadicDecomposition dec(m, 2);
  const double h = 0.5 * dec.side();
  std::vector<std::pair<MapExpr, Support>> pieces;
  const Point e1 = unit_vector(2, 0), e2 = unit_vector(2, 1);
  for (std::size_t i = 0; i < dec.size(); ++i)
    pieces.emplace_back(ball_rotation(dec.center(i), h, e1, e2, mu), Support::of_ball(dec.center(i), h));
  MapExpr F = disjoint_union(2, pieces);
  if (d > 2) F = lift(F, d);
  MapExpr T = dyadic_dilatation(dec, d, kSection7Alpha, beta);
  MapExpr f = compose_all({invert(T), F, T});
  const Matrix DJ = section7_target(d);
  MapPair pair{f, [DJ](const Point&) { return DJ; }};
  return Section7Map{pair, f, kSection7Alpha, beta, dec};
}

inline ExperimentReport section7_pipeline(double delta, double p, int m, const std::vector<double>& beta_list, int d,
                                          const PipelineOptions& opt) {
  require(p > 0.0 && p < 1.0, "section7: p must be in (0,1)");
  require(!beta_list.empty(), "section7: beta_list must not be empty");
  ExperimentReport rep;
  rep.name = "section7";
  rep.seed = opt.seed;
  rep.inputs = Json{{"delta", delta}, {"p", p}, {"m", m}, {"beta_list", beta_list}, {"d", d}};
  const Sampler s = stratified(opt.samples, opt.seed);
  const Matrix DJ = section7_target(d);
  MapPair target{identity_map(d), [DJ](const Point&) { return DJ; }};

  DyadicDecomposition dec(m, 2);
  const double diam = std::sqrt(2.0) * dec.side();
  rep.parameters = Json{{"alpha", kSection7Alpha}, {"cube_diameter", diam}};
  rep.target("cube_diameter", diam, "<", delta);

  Table tab{"section7", {"beta", "sup", "lp_deriv", "lp_deriv_stderr", "jacobian_dev_on_beta_cubes"}, {}};
  std::vector<double> lps;
  Rng rng = substream(opt.seed, 0x7337ULL);
  MapExpr last;
  for (double beta : beta_list) {
    Section7Map sm = section7_map(m, beta, d);
    NormReport nr = sobolev_distance(derivative_pair(sm.f), target, p, s, {opt.grid_order, {}});
    const double hb = 0.5 * dec.side() * std::sqrt(beta);
    double jdev = 0.0;
    for (std::size_t i = 0; i < dec.size(); ++i)
      for (int k = 0; k < 20; ++k) {
        Point x(d);
        for (int a = 0; a < d; ++a) x(a) = uniform01(rng);
        Point c = dec.center(i);
        for (int a = 0; a < 2; ++a) x(a) = c(a) + uniform(rng, -hb, hb);
        if (sm.f.seam_distance(x) < 10.0 * kFdStep) continue;
        jdev = std::max(jdev, (sm.f.jacobian(x) - DJ).cwiseAbs().maxCoeff());
      }
    lps.push_back(nr.lp_deriv);
    tab.rows.push_back({beta, nr.sup_est, nr.lp_deriv, nr.mc_stderr, jdev});
    const std::string key = "[beta=" + format_double(beta) + "]";
    rep.target("sup" + key, nr.sup_est, "<=", diam);
    rep.target("jacobian_is_pi_rotation" + key, jdev, "<=", 1e-9);
    last = sm.f;
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < lps.size(); ++i) decreasing = decreasing && lps[i] < lps[i - 1];
  rep.target_true("lp_deriv_strictly_decreasing", decreasing);
  rep.target("lp_deriv_at_largest_beta", lps.back(), "<", delta);
  rep.achieve("lp_deriv", lps);
  add_volume_suite(rep, "", last, opt);
  rep.tables.push_back(std::move(tab));
  rep.program = last.program();
  return rep;
}

// ---------------------------------------------------------------------------
// Tower sets E_1 = D_{1,mu}, E_i = f(E_{i-1}) cap D_{i,mu}

inline ExperimentReport tower_tracking(const MapExpr& f, const DyadicPermutation& P, double mu, const Sampler& s,
                                       bool expect_half) {
  const int d = P.dim();
  require(mu > 0.0 && mu < 1.0, "tower_tracking: mu must be in (0,1)");
  require(std::pow(mu, d) > 0.75, "tower_tracking: need lambda(D_{1,mu}) > 3/4 lambda(D_1), i.e. mu^d > 3/4");
  CyclicTag tag = cycle_of(P);
  const auto& dec = P.decomposition();
  const std::size_t N = tag.cycle.size();
  ExperimentReport rep;
  rep.name = "tower_tracking";
  rep.seed = s.seed;
  rep.inputs = Json{{"mu", mu}, {"permutation", P.to_json()}, {"f", f.program()}, {"samples", s.n}};

  const double h = 0.5 * dec.side();
  auto inner = [&](std::size_t k, const Point& x) {
    return ((x - dec.center(tag.cycle[k])).cwiseAbs().maxCoeff() < mu * h);
  };
  Region region{{OrientedBox{dec.center(tag.cycle[0]), Matrix::Identity(d, d), Point::Constant(d, mu * h)}}};
  const int passes = s.passes();
  std::vector<std::vector<CompensatedSum>> mass(N, std::vector<CompensatedSum>(static_cast<std::size_t>(passes)));
  for_each_sample(s, d, 8, region, accept_all(), [&](const Point& x0, double w, int pass) {
    Point x = x0;
    mass[0][static_cast<std::size_t>(pass)].add(w);
    for (std::size_t k = 1; k < N; ++k) {
      x = f(x);
      if (!inner(k, x)) return;
      mass[k][static_cast<std::size_t>(pass)].add(w);
    }
  });
  Table tab{"tower", {"i", "lambda_E", "stderr"}, {}};
  std::vector<double> lam;
  Integral last;
  for (std::size_t k = 0; k < N; ++k) {
    Integral I = summarize(mass[k]);
    lam.push_back(I.value);
    tab.rows.push_back({static_cast<int>(k + 1), I.value, I.stderr_});
    last = I;
  }
  const double lamD1 = std::pow(dec.side(), d);
  rep.achieve("lambda_D1", lamD1);
  rep.achieve("lambda_D1_mu", std::pow(mu, d) * lamD1);
  rep.achieve("lambda_E", lam);
  rep.achieve("lambda_EN", last.value);
  rep.achieve("lambda_EN_stderr", last.stderr_);
  if (expect_half) rep.target("lambda_EN_over_half_D1", last.value, ">", 0.5 * lamD1, 3.0 * last.stderr_);
  rep.tables.push_back(std::move(tab));
  rep.program = f.program();
  return rep;
}

// ---------------------------------------------------------------------------
// Sawtooth sequence: uniform convergence to Id with derivative norms -> 0

/// a(n) = coefficient / n^power.
struct SawtoothRule {
  double coefficient = 1.0;
  double power = 2.0;
  double operator()(int n) const { return coefficient / std::pow(static_cast<double>(n), power); }
};

inline double sawtooth_closed_form(int n, double a, double p) {
  const double b = 1.0 / n - a;
  return std::pow(a * n, 1.0 - p) * std::pow(b * n, p) + std::pow(b * n, 1.0 - p) * std::pow(a * n, p);
}

inline ExperimentReport peetre_pipeline(const std::vector<int>& n_list, const std::vector<double>& p_list, SawtoothRule rule,
                                        std::size_t quadrature_points = std::size_t{1} << 20) {
  require(!n_list.empty() && !p_list.empty(), "peetre: n_list and p_list must not be empty");
  ExperimentReport rep;
  rep.name = "peetre";
  rep.inputs = Json{{"n_list", n_list}, {"p_list", p_list}, {"a_rule", Json{{"coefficient", rule.coefficient}, {"power", rule.power}}},
                    {"quadrature_points", quadrature_points}};
  Table tab{"peetre", {"n", "p", "a", "b", "closed_form", "quadrature", "abs_error", "sup", "sup_closed_form", "one_over_n"}, {}};
  const Sampler grid = tensor_grid(quadrature_points);
  std::vector<std::vector<double>> quad(p_list.size());
  std::vector<double> an;
  for (int n : n_list) {
    const double a = rule(n);
    if (!(a > 0.0 && a < 1.0 / n)) throw InvalidArgument("peetre: a_rule(" + std::to_string(n) + ") must lie in (0, 1/n)");
    an.push_back(a * n);
    auto saw = std::dynamic_pointer_cast<const nodes::Sawtooth>(sawtooth(n, a).node());
    MapExpr f(saw);
    double sup = sup_distance(f, identity_map(1), 16).value;
    for (std::size_t k = 0; k < p_list.size(); ++k) {
      const double p = p_list[k];
      LpEstimate q = lp_quasi_norm([&](const Point& x) { return saw->scalar_derivative(x(0)); }, 1, p, grid);
      const double cf = sawtooth_closed_form(n, a, p);
      quad[k].push_back(q.integral);
      tab.rows.push_back({n, p, a, saw->b(), cf, q.integral, std::abs(q.integral - cf), sup, std::abs(saw->b() - a), 1.0 / n});
      const std::string key = "[n=" + std::to_string(n) + ",p=" + format_double(p) + "]";
      rep.target("quadrature_vs_closed_form" + key, std::abs(q.integral - cf), "<=", 1e-3);
      rep.target("sup_le_1_over_n" + key, sup, "<=", 1.0 / n);
    }
  }
  bool an_to_zero = an.size() >= 2;
  for (std::size_t i = 1; i < an.size(); ++i) an_to_zero = an_to_zero && an[i] < an[i - 1];
  rep.achieve("a_times_n", an);
  if (an_to_zero) {
    for (std::size_t k = 0; k < p_list.size(); ++k) {
      bool dec = true;
      for (std::size_t i = 1; i < quad[k].size(); ++i) dec = dec && quad[k][i] < quad[k][i - 1];
      rep.target_true("derivative_norm_decreasing[p=" + format_double(p_list[k]) + "]", dec);
    }
  }
  rep.tables.push_back(std::move(tab));
  return rep;
}

}  // namespace vpcube
