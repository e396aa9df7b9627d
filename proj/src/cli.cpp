#include "annealed/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>
#include <thread>

#include "annealed/errors.hpp"
#include "annealed/free_energy.hpp"
#include "annealed/oracle.hpp"
#include "annealed/replica.hpp"
#include "annealed/stability.hpp"

namespace annealed {

namespace {

using Json = nlohmann::ordered_json;

struct RunConfig {
  std::vector<int> regular;
  std::vector<double> poisson;
  std::string var_degrees;
  std::string fac_degrees;
  std::string factor;
  int q = 2;
  int arity = 0;
  std::string field;
  std::string random_field;

  double tol = 1e-10;
  int max_iters = 10'000;
  double damping = 0.0;
  int restarts = 8;
  std::uint64_t seed = 0;
  int grid = 0;
  unsigned threads = 0;
  bool bits = false;
  std::string output;

  int points = 201;
  std::vector<int> binary_csp;
  int N = 0;
  bool exact = false;
  bool sampled = false;
  std::uint64_t samples = 1000;
  std::size_t pop = 10'000;
  int sweeps = 1'000;
  std::size_t pd_samples = 100'000;
  int n = 2;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

std::vector<double> parse_vector(const std::string& s) {
  std::vector<double> v;
  for (const auto& p : split(s, ',')) v.push_back(parse_double(p));
  return v;
}

// "2:0.5,3:0.5" -> {2: 0.5, 3: 0.5}
std::map<int, double> parse_degrees(const std::string& s) {
  std::map<int, double> d;
  for (const auto& item : split(s, ',')) {
    const auto kv = split(item, ':');
    if (kv.size() != 2) throw ConfigError("degree entries are written degree:fraction, got '" + item + "'");
    const double deg = parse_double(kv[0]);
    if (deg != std::floor(deg)) throw ConfigError("degree must be an integer: '" + kv[0] + "'");
    d[static_cast<int>(deg)] += parse_double(kv[1]);
  }
  return d;
}

FactorTable make_factor(const std::string& name, int arity, int q) {
  if (name.empty()) throw ConfigError("--factor is required");
  if (arity < 1) throw ConfigError("factor arity is unknown; give an ensemble or --r");
  if (q < 2) throw ConfigError("--q must be at least 2");
  const auto qs = static_cast<std::size_t>(q);
  auto binary_only = [&] {
    if (q != 2) throw ConfigError("factor '" + name + "' is defined on the binary alphabet only");
  };
  if (name == "parity") {
    binary_only();
    return parity_check_factor(arity);
  }
  if (name.rfind("binary-csp:", 0) == 0) {
    binary_only();
    const double k = parse_double(name.substr(11));
    if (k != std::floor(k)) throw ConfigError("binary-csp parameter must be an integer");
    return binary_csp_factor(arity, static_cast<int>(k));
  }
  if (name == "not-equal") {
    if (arity != 2) throw ConfigError("not-equal is a pairwise factor; arity must be 2");
    return not_equal_factor(qs);
  }
  if (name == "equality") return equality_factor(arity, qs);
  if (name == "f1" || name == "ones") return ones_factor(arity, qs);
  const std::string path = name.rfind("file:", 0) == 0 ? name.substr(5) : name;
  if (!std::filesystem::exists(path)) throw ConfigError("unknown factor '" + name + "'");
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open factor file '" + path + "'");
  FactorTable f = read_factor_table(in);
  if (f.arity() != arity)
    throw ConfigError(fmt::format("factor file has arity {} but the ensemble needs {}", f.arity(), arity));
  return f;
}

enum class Kind { Regular, Poisson, Irregular };

Kind ensemble_kind(const RunConfig& c) {
  const int given = !c.regular.empty() + !c.poisson.empty() + (!c.var_degrees.empty() || !c.fac_degrees.empty());
  if (given > 1) throw ConfigError("give exactly one of --regular, --poisson, --var-degrees/--fac-degrees");
  if (!c.poisson.empty()) return Kind::Poisson;
  if (!c.var_degrees.empty() || !c.fac_degrees.empty()) return Kind::Irregular;
  return Kind::Regular;
}

RegularSpec regular_spec(const RunConfig& c) {
  if (ensemble_kind(c) != Kind::Regular) throw ConfigError("this command needs a regular ensemble");
  const int l = c.regular.empty() ? 2 : c.regular[0];
  const int r = c.regular.empty() ? (c.arity > 0 ? c.arity : 2) : c.regular[1];
  RegularSpec spec{l, r, make_factor(c.factor, r, c.q)};
  spec.validate();
  return spec;
}

PoissonSpec poisson_spec(const RunConfig& c) {
  if (c.poisson[1] != std::floor(c.poisson[1])) throw ConfigError("Poisson factor degree must be an integer");
  const int k = static_cast<int>(c.poisson[1]);
  PoissonSpec spec{c.poisson[0], k, make_factor(c.factor, k, c.q)};
  spec.validate();
  return spec;
}

IrregularSpec irregular_spec(const RunConfig& c) {
  if (c.var_degrees.empty() || c.fac_degrees.empty())
    throw ConfigError("irregular ensembles need both --var-degrees and --fac-degrees");
  IrregularSpec spec;
  spec.L = parse_degrees(c.var_degrees);
  spec.R = parse_degrees(c.fac_degrees);
  for (const auto& [j, w] : spec.R) spec.factors.emplace(j, make_factor(c.factor, j, c.q));
  spec.validate();
  return spec;
}

FieldSpec field_spec(const std::string& s, std::size_t q) {
  FieldSpec h{parse_vector(s)};
  h.validate(q);
  return h;
}

// "h0,h1@p;h0,h1@p"
RandomFieldSpec random_field_spec(const std::string& s, std::size_t q) {
  RandomFieldSpec rf;
  for (const auto& item : split(s, ';')) {
    const auto at = item.rfind('@');
    if (at == std::string::npos) throw ConfigError("random-field entries are written h0,h1,...@prob");
    rf.fields.push_back(FieldSpec{parse_vector(item.substr(0, at))});
    rf.probs.push_back(parse_double(item.substr(at + 1)));
  }
  rf.validate(q);
  return rf;
}

FreeEnergyOptions fe_options(const RunConfig& c) {
  FreeEnergyOptions o;
  o.bp.tol = c.tol;
  o.bp.max_iters = c.max_iters;
  o.bp.damping = c.damping;
  o.bp.restarts = c.restarts;
  o.bp.seed = c.seed;
  o.bp.validate();
  o.grid_resolution = c.grid;
  o.threads = c.threads > 0 ? c.threads : std::max(1u, std::thread::hardware_concurrency());
  return o;
}

// Display scale for log-quantities.
double unit(const RunConfig& c) { return c.bits ? 1.0 / std::numbers::ln2 : 1.0; }

Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json messages_json(const MessagePair& mp) { return Json{{"vf", mp.vf}, {"fv", mp.fv}}; }

// Every option of the subcommand with its resolved value, in declaration order.
std::vector<std::pair<std::string, std::string>> resolved_config(const CLI::App* sub) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("command", sub->get_name());
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config") continue;
    std::string value;
    if (opt->count() > 0) {
      // Repeated options keep their last occurrence.
      const auto& res = opt->results();
      const std::size_t width = std::max(1, opt->get_expected_max());
      const std::size_t first = res.size() > width ? res.size() - width : 0;
      for (std::size_t i = first; i < res.size(); ++i) value += (value.empty() ? "" : " ") + res[i];
    } else {
      value = opt->get_expected_max() == 0 ? "false" : opt->get_default_str();
    }
    if (value.empty() || value == "{}" || value == "[]") continue;
    kv.emplace_back(name, value);
  }
  return kv;
}

Json config_json(const CLI::App* sub) {
  Json j = Json::object();
  for (const auto& [k, v] : resolved_config(sub)) j[k] = v;
  return j;
}

std::string config_csv_field(const CLI::App* sub) {
  std::string s;
  for (const auto& [k, v] : resolved_config(sub)) s += (s.empty() ? "" : ";") + k + "=" + v;
  std::string quoted = "\"";
  for (char ch : s) {
    if (ch == '"') quoted += '"';
    quoted += ch;
  }
  return quoted + "\"";
}

std::string fmt12(double v) { return fmt::format("{:.12g}", v); }

int cmd_growth_rate(const RunConfig& c, const CLI::App* sub, std::ostream& out) {
  const RegularSpec spec = regular_spec(c);
  if (c.points < 2) throw ConfigError("--points must be at least 2");
  const std::size_t q = spec.factor.q();
  // Binary alphabet: nu = (1 - t, t). Larger alphabets: slice with nu(1) = t
  // and the remaining mass spread evenly over the other symbols.
  std::vector<std::vector<double>> nus;
  for (int i = 0; i < c.points; ++i) {
    const double t = static_cast<double>(i) / (c.points - 1);
    std::vector<double> nu(q, (1.0 - t) / (q - 1));
    nu[1] = t;
    nus.push_back(std::move(nu));
  }
  const auto pts = growth_rate_sweep(spec, nus, fe_options(c));
  const std::string cfg = config_csv_field(sub);
  out << "nu1,value,converged,iterations,solver,config\n";
  for (const auto& p : pts)
    out << fmt12(p.nu[1]) << ',' << fmt12(p.value * unit(c)) << ',' << (p.converged ? "true" : "false") << ','
        << p.iterations << ',' << p.solver << ',' << cfg << '\n';
  return kExitOk;
}

int cmd_annealed(const RunConfig& c, const CLI::App* sub, std::ostream& out) {
  const FreeEnergyOptions opts = fe_options(c);
  Json j;
  bool converged = false;
  switch (ensemble_kind(c)) {
    case Kind::Regular: {
      const RegularSpec spec = regular_spec(c);
      if (!c.field.empty() && !c.random_field.empty()) throw ConfigError("give at most one of --field, --random-field");
      if (!c.random_field.empty()) {
        const auto res = annealed_random_field(spec, random_field_spec(c.random_field, spec.factor.q()), opts);
        converged = res.report.converged;
        j["value"] = finite_or_null(res.value * unit(c));
        j["converged"] = converged;
        j["provenance"] = fmt::format("bp-restart-{}", res.report.restart);
        j["iterations"] = res.report.iterations;
        j["residual"] = res.report.residual;
        break;
      }
      const AnnealedResult res = c.field.empty() ? annealed_regular(spec, opts)
                                                 : annealed_field(spec, field_spec(c.field, spec.factor.q()), opts);
      converged = res.converged;
      j["value"] = finite_or_null(res.value * unit(c));
      j["converged"] = converged;
      j["provenance"] = res.provenance;
      try {
        j["design_rate"] = c.field.empty() ? Json(design_rate(spec) * unit(c)) : Json(nullptr);
      } catch (const PreconditionError&) {
        j["design_rate"] = nullptr;
      }
      j["nu"] = res.nu;
      j["boundary"] = res.boundary;
      j["messages"] = messages_json(res.messages);
      j["grid_points"] = res.grid_points;
      j["bp_converged_restarts"] = res.bp_report.converged_restarts;
      break;
    }
    case Kind::Poisson: {
      const auto res = annealed_poisson(poisson_spec(c), opts);
      converged = res.report.converged;
      j["value"] = finite_or_null(res.value * unit(c));
      j["converged"] = converged;
      j["provenance"] = fmt::format("bp-restart-{}", res.report.restart);
      j["iterations"] = res.report.iterations;
      j["residual"] = res.report.residual;
      break;
    }
    case Kind::Irregular: {
      const auto res = annealed_irregular(irregular_spec(c), opts);
      converged = res.report.converged;
      j["value"] = finite_or_null(res.value * unit(c));
      j["converged"] = converged;
      j["provenance"] = fmt::format("bp-restart-{}", res.report.restart);
      j["iterations"] = res.report.iterations;
      j["residual"] = res.report.residual;
      break;
    }
  }
  j["units"] = c.bits ? "bits" : "nats";
  j["config"] = config_json(sub);
  out << j.dump(2) << '\n';
  return converged ? kExitOk : kExitNumerical;
}

int cmd_stability(const RunConfig& c, const CLI::App* sub, std::ostream& out) {
  Json j;
  StabilityReport rep;
  if (!c.binary_csp.empty()) {
    const int r = c.binary_csp[0], k = c.binary_csp[1];
    rep = paramagnetic_stability(binary_csp_factor(r, k), r);
    const double v = binary_csp_stability_value(r, k);
    j["value"] = v;
    j["converged"] = true;
    j["provenance"] = "closed-form";
    j["fraction"] = binary_csp_stability_fraction(r, k);
    j["stable"] = v < 1.0;
  } else {
    const int r = c.arity > 0 ? c.arity : (c.regular.empty() ? 0 : c.regular[1]);
    rep = paramagnetic_stability(make_factor(c.factor, r, c.q), r);
    j["value"] = rep.max_nontrivial_abs;
    j["converged"] = true;
    j["provenance"] = rep.symmetric ? "symmetric-eigen" : "general-eigen";
    j["stable"] = rep.stable;
  }
  j["marginal"] = rep.marginal;
  j["max_nontrivial_abs"] = rep.max_nontrivial_abs;
  j["nontrivial_eigenvalues"] = {{"real", rep.nontrivial_real}, {"imag", rep.nontrivial_imag}};
  j["trivial_eigenvalue"] = rep.trivial_eigenvalue;
  j["operator"] = rep.A;
  j["config"] = config_json(sub);
  out << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_oracle(const RunConfig& c, const CLI::App* sub, std::ostream& out) {
  const RegularSpec spec = regular_spec(c);
  if (c.N < 1) throw ConfigError("--N must be positive");
  if (c.exact && c.sampled) throw ConfigError("give at most one of --exact, --sampled");
  Json j;
  double value = 0.0;
  if (c.exact || c.sampled) {
    const auto est = exhaustive_E_Z(c.N, spec, c.exact ? OracleMode::Exact : OracleMode::Sampled, c.samples, c.seed);
    value = std::log(est.mean) / c.N;
    j["value"] = finite_or_null(value * unit(c));
    j["converged"] = true;
    j["provenance"] = c.exact ? "exhaustive-exact" : "exhaustive-sampled";
    j["E_Z"] = est.mean;
    j["E_Z_stderr"] = est.stderr_;
    j["graphs"] = est.graphs;
    if (c.exact) {
      const double by_types = exact_annealed_finite(c.N, spec);
      j["type_enumeration_value"] = finite_or_null(by_types * unit(c));
      j["dual_route_difference"] = std::isfinite(value) ? Json(std::abs(by_types - value)) : Json(nullptr);
    }
  } else {
    value = exact_annealed_finite(c.N, spec);
    j["value"] = finite_or_null(value * unit(c));
    j["converged"] = true;
    j["provenance"] = "type-enumeration";
    j["E_Z"] = std::exp(value * c.N);
  }
  const auto asym = annealed_regular(spec, fe_options(c));
  j["asymptotic_value"] = finite_or_null(asym.value * unit(c));
  j["gap"] = std::isfinite(value) ? Json((value - asym.value) * unit(c)) : Json(nullptr);
  j["units"] = c.bits ? "bits" : "nats";
  j["config"] = config_json(sub);
  out << j.dump(2) << '\n';
  return kExitOk;
}

Json rs_run_json(const RsEstimate& e, double u) {
  return Json{{"init", e.init},
              {"value", e.value * u},
              {"stderr", e.stderr_ * u},
              {"half_value", e.half_value * u},
              {"equilibrated", e.equilibrated},
              {"final_drift", e.final_drift},
              {"resampled", e.resampled}};
}

int cmd_rs(const RunConfig& c, const CLI::App* sub, std::ostream& out) {
  const RegularSpec spec = regular_spec(c);
  PdOptions pd;
  pd.population = c.pop;
  pd.sweeps = c.sweeps;
  pd.samples = c.pd_samples;
  pd.seed = c.seed;
  pd.validate();
  const FreeEnergyOptions fe = fe_options(c);
  const RsResult res = rs_free_energy(spec, pd, fe);
  Json j;
  j["value"] = res.value * unit(c);
  j["stderr"] = res.stderr_ * unit(c);
  bool equilibrated = true;
  Json runs = Json::array();
  for (const auto& e : res.runs) {
    runs.push_back(rs_run_json(e, unit(c)));
    equilibrated = equilibrated && e.equilibrated;
  }
  j["converged"] = equilibrated;
  j["provenance"] = "population-dynamics";
  j["runs"] = runs;
  j["multiple_fixed_points"] = res.multiple_fixed_points;
  if (spec.factor.perm_invariant()) {
    const auto eq = check_annealed_rs_equality(spec, pd, fe);
    j["annealed_check"] = {{"annealed_value", eq.annealed_value * unit(c)},
                           {"rs_value", eq.rs_value * unit(c)},
                           {"difference", eq.difference * unit(c)},
                           {"tolerance", eq.tolerance * unit(c)},
                           {"equal", eq.equal}};
  } else {
    j["annealed_check"] = nullptr;
  }
  j["units"] = c.bits ? "bits" : "nats";
  j["config"] = config_json(sub);
  out << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_moments(const RunConfig& c, const CLI::App* sub, std::ostream& out) {
  const RegularSpec spec = regular_spec(c);
  if (c.n < 1) throw ConfigError("--n must be at least 1");
  const AnnealedResult res = moment_exponent(spec, c.n, fe_options(c));
  Json j;
  j["value"] = finite_or_null(res.value * unit(c));
  j["converged"] = res.converged;
  j["provenance"] = res.provenance;
  j["n"] = c.n;
  j["nu"] = res.nu;
  j["units"] = c.bits ? "bits" : "nats";
  j["config"] = config_json(sub);
  out << j.dump(2) << '\n';
  return res.converged ? kExitOk : kExitNumerical;
}

void add_ensemble_options(CLI::App* s, RunConfig& c) {
  s->add_option("--regular", c.regular, "(l, r)-regular ensemble")->expected(2);
  s->add_option("--factor", c.factor, "parity | binary-csp:K | not-equal | equality | f1 | file:PATH");
  s->add_option("--q", c.q, "alphabet size for alphabet-generic factors");
  s->add_option("--r", c.arity, "factor arity when no ensemble is given");
}

void add_solver_options(CLI::App* s, RunConfig& c) {
  s->add_option("--tol", c.tol, "message residual tolerance");
  s->add_option("--max-iters", c.max_iters, "iterations per restart");
  s->add_option("--damping", c.damping, "message damping in [0, 1)");
  s->add_option("--restarts", c.restarts, "random restarts after the uniform start");
  s->add_option("--seed", c.seed, "base random seed");
  s->add_option("--grid", c.grid, "variable-type grid resolution (0 = auto, negative = off)");
  s->add_option("--threads", c.threads, "worker threads (0 = available parallelism)");
}

void add_output_options(CLI::App* s, RunConfig& c) {
  s->add_flag("--bits", c.bits, "report log-quantities in bits");
  s->add_option("--output", c.output, "write to this file instead of stdout");
}

// Flat key=value file; '#' starts a comment. Keys are long option names.
std::vector<std::string> config_tokens(const std::string& path, const CLI::App* sub) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::vector<std::string> tokens;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected key=value", path, lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "command") continue;
    const CLI::Option* opt = nullptr;
    try {
      opt = sub->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw ConfigError(fmt::format("{}:{}: unknown key '{}' for {}", path, lineno, key, sub->get_name()));
    }
    if (opt->get_expected_max() == 0) {
      if (value == "true" || value == "1" || value.empty()) tokens.push_back("--" + key);
      else if (value != "false" && value != "0")
        throw ConfigError(fmt::format("{}:{}: '{}' is a switch; use true or false", path, lineno, key));
      continue;
    }
    tokens.push_back("--" + key);
    std::stringstream ss(value);
    std::string word;
    while (ss >> word) tokens.push_back(word);
  }
  return tokens;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Annealed free energies of random sparse factor-graph ensembles", "annealed"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;

  auto* growth = app.add_subcommand("growth-rate", "fixed-type growth rate over a grid of nu(1), as CSV");
  auto* annealed = app.add_subcommand("annealed", "annealed free energy, as JSON");
  auto* stability = app.add_subcommand("stability", "paramagnetic stability, as JSON");
  auto* oracle = app.add_subcommand("oracle", "finite-N E[Z] by exact counting, as JSON");
  auto* rs = app.add_subcommand("rs", "replica-symmetric free energy by population dynamics, as JSON");
  auto* moments = app.add_subcommand("moments", "exponent of E[Z^n] via the replicated factor, as JSON");
  for (auto* s : {growth, annealed, stability, oracle, rs, moments}) {
    s->option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    s->add_option("--config", config_path, "flat key=value file; flags override it");
    add_ensemble_options(s, c);
    add_solver_options(s, c);
    add_output_options(s, c);
  }
  growth->add_option("--points", c.points, "grid points on [0, 1]");
  annealed->add_option("--poisson", c.poisson, "Poisson ensemble: alpha k")->expected(2);
  annealed->add_option("--var-degrees", c.var_degrees, "irregular variable degrees, e.g. 2:0.5,3:0.5");
  annealed->add_option("--fac-degrees", c.fac_degrees, "irregular factor degrees, e.g. 6:1");
  annealed->add_option("--field", c.field, "magnetic field h0,h1,...");
  annealed->add_option("--random-field", c.random_field, "field mixture h0,h1@p;h0,h1@p");
  stability->add_option("--binary-csp", c.binary_csp, "binary CSP: r k")->expected(2);
  oracle->add_option("--N", c.N, "number of variables")->required();
  oracle->add_flag("--exact", c.exact, "average over every socket matching");
  oracle->add_flag("--sampled", c.sampled, "average over sampled socket matchings");
  oracle->add_option("--samples", c.samples, "matchings drawn in sampled mode");
  rs->add_option("--pop", c.pop, "population size");
  rs->add_option("--sweeps", c.sweeps, "population sweeps");
  rs->add_option("--samples", c.pd_samples, "Monte-Carlo draws for the estimate");
  moments->add_option("--n", c.n, "moment order");

  // Splice the config file in right after the subcommand so later flags win.
  std::vector<std::string> argv = args;
  try {
    for (std::size_t i = 0; i < argv.size(); ++i) {
      if ((argv[i] == "--config" && i + 1 < argv.size()) || argv[i].rfind("--config=", 0) == 0) {
        const std::string path = argv[i] == "--config" ? argv[i + 1] : argv[i].substr(9);
        CLI::App* sub = nullptr;
        std::size_t pos = 0;
        for (std::size_t k = 0; k < argv.size() && !sub; ++k)
          for (auto* s : app.get_subcommands({}))
            if (s->get_name() == argv[k]) {
              sub = s;
              pos = k;
            }
        if (!sub) throw ConfigError("--config needs a subcommand");
        const auto tokens = config_tokens(path, sub);
        argv.insert(argv.begin() + static_cast<std::ptrdiff_t>(pos) + 1, tokens.begin(), tokens.end());
        break;
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    std::ofstream file;
    if (!c.output.empty()) {
      file.open(c.output);
      if (!file) throw ConfigError("cannot write '" + c.output + "'");
    }
    std::ostream& dest = c.output.empty() ? out : file;
    const std::string name = sub->get_name();
    if (name == "growth-rate") return cmd_growth_rate(c, sub, dest);
    if (name == "annealed") return cmd_annealed(c, sub, dest);
    if (name == "stability") return cmd_stability(c, sub, dest);
    if (name == "oracle") return cmd_oracle(c, sub, dest);
    if (name == "rs") return cmd_rs(c, sub, dest);
    return cmd_moments(c, sub, dest);
  } catch (const BudgetExceeded& e) {
    err << "budget exceeded: " << e.what() << '\n';
    return kExitBudget;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace annealed
