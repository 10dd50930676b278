// vpcube command line: run experiments from JSON configs, verify map programs.

#include "vpcube/vpcube.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace vpcube;

namespace {

constexpr int kReportSchemaVersion = 1;

enum Exit { kOk = 0, kTargetsFailed = 1, kBadInput = 2, kInfeasible = 3 };

struct ExperimentInfo {
  const char* name;
  const char* summary;
};

const ExperimentInfo kExperiments[] = {
    {"peetre", "sawtooth sequence on I: sup and derivative norms against the closed form"},
    {"scaling", "single ball translation: log-log slope of the derivative integral in r"},
    {"translation", "multi translation of balls P_i -> Q_i along disjoint or crossing paths"},
    {"lusin", "Lusin-type approximation of a dyadic permutation by f = T o F o T^-1"},
    {"transitivity", "g = F o f with a cyclic orbit through all dyadic centres"},
    {"section7", "f -> Id uniformly with Df -> diag(-1,-1,1,...) as beta -> 1"},
    {"tower", "Monte Carlo tracking of the tower sets E_i along a cyclic permutation"},
};

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw InvalidArgument("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

std::vector<double> numbers(const Json& j, const char* key) {
  require(j.at(key).is_array() && !j.at(key).empty(), std::string("params: '") + key + "' must be a non-empty array");
  std::vector<double> v;
  for (const auto& x : j.at(key)) {
    require(x.is_number(), std::string("params: '") + key + "' must hold numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

std::vector<int> integers(const Json& j, const char* key) {
  require(j.at(key).is_array() && !j.at(key).empty(), std::string("params: '") + key + "' must be a non-empty array");
  std::vector<int> v;
  for (const auto& x : j.at(key)) {
    require(x.is_number_integer(), std::string("params: '") + key + "' must hold integers");
    v.push_back(x.get<int>());
  }
  return v;
}

std::vector<Point> points(const Json& j, const char* key, int d) {
  require(j.at(key).is_array() && !j.at(key).empty(), std::string("params: '") + key + "' must be a non-empty array of points");
  std::vector<Point> v;
  for (const auto& x : j.at(key)) {
    Point p = point_from_json(x);
    require(p.size() == d, std::string("params: '") + key + "' point dimension does not match 'dimension'");
    v.push_back(p);
  }
  return v;
}

struct Config {
  std::string experiment;
  std::optional<int> dimension;
  std::uint64_t seed = 0;
  std::string sampler_kind = "stratified";
  std::optional<std::size_t> sampler_n;
  std::optional<std::string> output;
  Json params = Json::object();
  PipelineOptions opt;
};

Config parse_config(const Json& j) {
  using detail::check_keys;
  check_keys(j, {"schema_version", "experiment"}, {"dimension", "seed", "sampler", "output", "params", "tolerances"}, "config");
  require(j["schema_version"] == kReportSchemaVersion, "config: unsupported schema_version");
  Config c;
  require(j["experiment"].is_string(), "config: 'experiment' must be a string");
  c.experiment = j["experiment"].get<std::string>();
  bool known = false;
  for (const auto& e : kExperiments) known = known || c.experiment == e.name;
  require(known, "config: unknown experiment '" + c.experiment + "' (see list-experiments)");
  if (j.contains("dimension")) {
    int d = detail::integer(j, "dimension", "config");
    require(d >= 1 && d <= kMaxDim, "config: 'dimension' out of range");
    c.dimension = d;
  }
  if (j.contains("seed")) {
    require(j["seed"].is_number_unsigned(), "config: 'seed' must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("sampler")) {
    const Json& s = j["sampler"];
    check_keys(s, {}, {"kind", "n", "seed"}, "config.sampler");
    if (s.contains("kind")) {
      require(s["kind"].is_string(), "config.sampler: 'kind' must be a string");
      c.sampler_kind = s["kind"].get<std::string>();
      require(c.sampler_kind == "stratified" || c.sampler_kind == "grid", "config.sampler: kind must be 'stratified' or 'grid'");
    }
    if (s.contains("n")) {
      require(s["n"].is_number_unsigned() && s["n"].get<std::size_t>() > 0, "config.sampler: 'n' must be a positive integer");
      c.sampler_n = s["n"].get<std::size_t>();
    }
    if (s.contains("seed")) {
      require(s["seed"].is_number_unsigned(), "config.sampler: 'seed' must be a non-negative integer");
      c.seed = s["seed"].get<std::uint64_t>();
    }
  }
  if (j.contains("output")) {
    require(j["output"].is_string(), "config: 'output' must be a string");
    c.output = j["output"].get<std::string>();
  }
  if (j.contains("params")) {
    require(j["params"].is_object(), "config: 'params' must be an object");
    c.params = j["params"];
  }
  if (j.contains("tolerances")) {
    const Json& t = j["tolerances"];
    check_keys(t, {}, {"det_analytic", "det_fd", "inverse"}, "config.tolerances");
    if (t.contains("det_analytic")) c.opt.det_tol = detail::number(t, "det_analytic", "config.tolerances");
    if (t.contains("det_fd")) c.opt.det_tol_fd = detail::number(t, "det_fd", "config.tolerances");
    if (t.contains("inverse")) c.opt.inverse_tol = detail::number(t, "inverse", "config.tolerances");
  }
  return c;
}

int need_dimension(const Config& c) {
  require(c.dimension.has_value(), "config: experiment '" + c.experiment + "' needs 'dimension'");
  return *c.dimension;
}

DyadicPermutation permutation_param(const Json& p, int m, int d) {
  if (!p.contains("permutation") || p["permutation"] == "boustrophedon") return boustrophedon_cycle(m, d).first;
  const Json& v = p["permutation"];
  if (v == "identity") return DyadicPermutation::identity(DyadicDecomposition(m, d));
  require(v.is_array(), "params: 'permutation' must be \"boustrophedon\", \"identity\" or an index array");
  std::vector<std::size_t> idx;
  for (const auto& x : v) {
    require(x.is_number_unsigned(), "params: permutation indices must be non-negative integers");
    idx.push_back(x.get<std::size_t>());
  }
  return DyadicPermutation(DyadicDecomposition(m, d), std::move(idx));
}

ExperimentReport run_experiment(const Config& c) {
  using detail::check_keys;
  const Json& p = c.params;
  const std::string where = "params";
  PipelineOptions opt = c.opt;
  opt.seed = c.seed;
  if (c.sampler_n) opt.samples = *c.sampler_n;
  if (c.experiment != "peetre")
    require(c.sampler_kind == "stratified", "config.sampler: kind 'grid' is only used by the peetre experiment");

  if (c.experiment == "peetre") {
    check_keys(p, {"n_list", "p_list"}, {"a_rule"}, where);
    if (c.dimension) require(*c.dimension == 1, "config: peetre runs on I (dimension 1)");
    SawtoothRule rule;
    if (p.contains("a_rule")) {
      check_keys(p["a_rule"], {"coefficient", "power"}, {}, "params.a_rule");
      rule.coefficient = detail::number(p["a_rule"], "coefficient", "params.a_rule");
      rule.power = detail::number(p["a_rule"], "power", "params.a_rule");
    }
    std::size_t q = c.sampler_n.value_or(std::size_t{1} << 20);
    return peetre_pipeline(integers(p, "n_list"), numbers(p, "p_list"), rule, q);
  }
  if (c.experiment == "scaling") {
    check_keys(p, {"P", "Q", "p_list", "r_list"}, {}, where);
    const int d = need_dimension(c);
    return scaling_experiment(points(p, "P", d).front(), points(p, "Q", d).front(), numbers(p, "p_list"), numbers(p, "r_list"), opt);
  }
  if (c.experiment == "translation") {
    check_keys(p, {"P", "Q", "delta", "p"}, {}, where);
    const int d = need_dimension(c);
    return translation_experiment(points(p, "P", d), points(p, "Q", d), detail::number(p, "delta", where),
                                  detail::number(p, "p", where), opt);
  }
  if (c.experiment == "lusin") {
    check_keys(p, {"m", "delta", "gamma", "p"}, {"permutation"}, where);
    const int d = need_dimension(c);
    DyadicPermutation P = permutation_param(p, detail::integer(p, "m", where), d);
    return lusin_pipeline(P, detail::number(p, "delta", where), detail::number(p, "gamma", where), detail::number(p, "p", where), opt)
        .report;
  }
  if (c.experiment == "transitivity") {
    check_keys(p, {"m", "epsilon", "p"}, {"f"}, where);
    const int d = need_dimension(c);
    MapExpr f = p.contains("f") ? map_from_document(p["f"]) : identity_map(d);
    require(f.dim() == d, "params: 'f' dimension does not match 'dimension'");
    return transitivity_pipeline(f, detail::number(p, "epsilon", where), detail::integer(p, "m", where), detail::number(p, "p", where),
                                 opt)
        .report;
  }
  if (c.experiment == "section7") {
    check_keys(p, {"delta", "p", "m", "beta_list"}, {}, where);
    const int d = need_dimension(c);
    return section7_pipeline(detail::number(p, "delta", where), detail::number(p, "p", where), detail::integer(p, "m", where),
                             numbers(p, "beta_list"), d, opt);
  }
  if (c.experiment == "tower") {
    check_keys(p, {"m", "mu", "source"}, {"epsilon", "p"}, where);
    const int d = need_dimension(c);
    const int m = detail::integer(p, "m", where);
    const std::string source = p["source"].is_string() ? p["source"].get<std::string>() : "";
    auto [P, tag] = boustrophedon_cycle(m, d);
    MapExpr f;
    if (source == "permutation") {
      f = as_map(P);
    } else if (source == "identity") {
      f = identity_map(d);
    } else if (source == "transitivity") {
      check_keys(p, {"m", "mu", "source", "epsilon", "p"}, {}, where);
      f = transitivity_pipeline(identity_map(d), detail::number(p, "epsilon", where), m, detail::number(p, "p", where), opt).g;
    } else {
      throw InvalidArgument("params: 'source' must be \"permutation\", \"identity\" or \"transitivity\"");
    }
    return tower_tracking(f, P, detail::number(p, "mu", where), stratified(opt.samples, opt.seed), source != "identity");
  }
  throw InvalidArgument("config: unknown experiment '" + c.experiment + "'");
}

fs::path output_dir(const Config& c, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (c.output) return *c.output;
  const char* root = std::getenv("VPCUBE_OUT_ROOT");
  return fs::path(root && *root ? root : "vpcube-out") / c.experiment;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::size_t> samples,
            const std::string& out_flag) {
  Config c = parse_config(read_json(config_path));
  if (seed) c.seed = *seed;
  if (samples) {
    require(*samples > 0, "--samples must be positive");
    c.sampler_n = *samples;
  }
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport rep = run_experiment(c);
  rep.seed = c.seed;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir = output_dir(c, out_flag);
  fs::create_directories(dir / "tables");
  Json report = rep.to_json();
  report["schema_version"] = kReportSchemaVersion;
  write_file(dir / "report.json", report.dump(2) + "\n");
  write_file(dir / "timing.json", Json{{"experiment", rep.name}, {"runtime_seconds", secs}}.dump(2) + "\n");
  for (const auto& t : rep.tables) write_file(dir / "tables" / (t.name + ".csv"), t.to_csv());
  if (!rep.program.is_null()) write_file(dir / "replay.json", replay_document(map_from_program(rep.program), rep.seed, rep.name).dump(2) + "\n");

  std::cout << rep.name << ": " << rep.targets.size() << " targets, output in " << dir.string() << "\n";
  if (rep.pass()) return kOk;
  for (const auto& f : rep.failures()) std::cerr << "FAIL " << f << "\n";
  return kTargetsFailed;
}

int cmd_verify(const std::string& program_path, const std::string& suite, std::uint64_t seed, std::size_t points, double bound) {
  const Json doc = read_json(program_path);
  const Json& program = doc.is_object() && doc.contains("program") ? doc["program"] : doc;
  MapExpr f = map_from_document(doc);
  SuiteOptions so;
  so.seed = seed;
  so.n = points;

  std::vector<SuiteResult> results;
  auto want = [&](const char* s) { return suite == "all" || suite == s; };
  if (want("det")) results.push_back(det_suite(f, so));
  if (want("inverse")) results.push_back(inverse_suite(f, so));
  if (want("support")) {
    auto sup = declared_supports(program);
    if (sup)
      results.push_back(support_suite(f, *sup, so));
    else if (suite == "support")
      throw InvalidArgument("verify: the program declares no support region");
  }
  if (want("bounds")) results.push_back(bounds_suite(f, bound, so));

  Json out = Json::array();
  bool pass = true;
  for (const auto& r : results) {
    out.push_back(Json{{"suite", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    pass = pass && r.pass;
  }
  std::cout << out.dump(2) << "\n";
  return pass ? kOk : kTargetsFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volume preserving maps of the unit cube: experiments and checks"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment config and write report.json, tables/*.csv and replay.json");
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  run->add_option("config_file,--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--samples", samples, "override sampler.n");
  run->add_option("--out", out_dir, "output directory (default: config 'output', else $VPCUBE_OUT_ROOT/<experiment>)");

  auto* verify = app.add_subcommand("verify", "rebuild a map program and run invariant suites on it");
  std::string program_path, suite = "all";
  std::uint64_t vseed = 0;
  std::size_t vpoints = 10000;
  double bound = 0.0;
  verify->add_option("program_file,--program", program_path, "map program or replay.json")->required();
  verify->add_option("--suite", suite, "det, inverse, support, bounds or all")
      ->check(CLI::IsMember({"det", "inverse", "support", "bounds", "all"}));
  verify->add_option("--seed", vseed, "seed for the sample points");
  verify->add_option("--samples", vpoints, "number of sample points");
  verify->add_option("--bound", bound, "entrywise Jacobian bound for the bounds suite");

  app.add_subcommand("list-experiments", "list experiment names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kBadInput;
  }

  try {
    if (*run) return cmd_run(config_path, seed, samples, out_dir);
    if (*verify) return cmd_verify(program_path, suite, vseed, vpoints, bound);
    for (const auto& e : kExperiments) std::cout << e.name << "\t" << e.summary << "\n";
    return kOk;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  }
}
