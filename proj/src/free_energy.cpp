#include "annealed/free_energy.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "annealed/errors.hpp"
#include "annealed/numeric.hpp"

namespace annealed {

namespace {

void check_type(std::span<const double> nu, std::size_t q) {
  if (nu.size() != q) throw ConfigError("type has the wrong length");
  double s = 0.0;
  for (double v : nu) {
    if (!(v >= 0.0)) throw ConfigError("type entries must be nonnegative");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("type must sum to 1");
}

double field_term(std::span<const double> nu, std::span<const double> h) {
  if (h.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t x = 0; x < nu.size(); ++x) {
    if (nu[x] == 0.0) continue;
    if (h[x] == 0.0) return kNegInf;
    s += nu[x] * std::log(h[x]);
  }
  return s;
}

// Compass search over nu along the directions e_i - e_j, halving the step on failure.
template <class Value>
std::pair<std::vector<double>, double> compass_refine(std::vector<double> nu, double value, double step, Value fn,
                                                      double min_step = 1e-10) {
  const std::size_t q = nu.size();
  while (step >= min_step) {
    bool improved = false;
    for (std::size_t i = 0; i < q && !improved; ++i) {
      for (std::size_t j = 0; j < q && !improved; ++j) {
        if (i == j) continue;
        const double s = std::min(step, nu[j]);
        if (s <= 0.0) continue;
        std::vector<double> cand = nu;
        cand[i] += s;
        cand[j] -= s;
        if (cand[j] < 1e-15) cand[j] = 0.0;
        const double v = fn(cand);
        if (v > value + 1e-15 * std::max(1.0, std::abs(value))) {
          nu = std::move(cand);
          value = v;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return {std::move(nu), value};
}

double fixed_type_newton_value(const RegularSpec& spec, std::span<const double> nu, const NewtonOptions& opts) {
  try {
    return maximize_mu_given_nu(spec, nu, opts).value;
  } catch (const InfeasibleError&) {
    return kNegInf;
  }
}

AnnealedResult annealed_with_field(const RegularSpec& spec, std::span<const double> h, const FreeEnergyOptions& opts) {
  spec.validate();
  const std::size_t q = spec.factor.q();
  const std::vector<double> hv = h.empty() ? std::vector<double>(q, 1.0) : std::vector<double>(h.begin(), h.end());
  FieldSpec fs{hv};
  fs.validate(q);

  AnnealedResult res;
  res.value = kNegInf;

  auto type_of = [&](const MessagePair& mp) {
    std::vector<double> nu(q);
    for (std::size_t x = 0; x < q; ++x) nu[x] = hv[x] * std::pow(mp.fv[x], spec.l);
    normalize(nu);
    return nu;
  };

  auto [mp, rep] = solve_field(spec, fs, opts.bp);
  res.bp_report = rep;
  if (rep.converged) {
    res.value = rep.objective;
    res.converged = true;
    res.provenance = "bp-restart-" + std::to_string(rep.restart);
    res.messages = mp;
    res.nu = type_of(mp);
  }

  const int resolution = opts.grid_resolution == 0 ? default_grid_resolution(q) : opts.grid_resolution;
  if (resolution > 0) {
    auto value_at = [&](std::span<const double> nu) {
      const double ft = field_term(nu, hv);
      if (ft == kNegInf) return kNegInf;
      return fixed_type_newton_value(spec, nu, opts.newton) + ft;
    };
    const auto grid = simplex_grid(q, resolution);
    std::vector<double> values(grid.size());
    parallel_for(grid.size(), opts.threads, [&](std::size_t i) { values[i] = value_at(grid[i]); });
    res.grid_points = grid.size();
    const std::size_t best = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
    std::vector<double> nu = grid[best];
    double value = values[best];
    std::string prov = "grid";
    if (opts.refine && value > kNegInf) {
      auto [rn, rv] = compass_refine(nu, value, 1.0 / resolution, value_at);
      if (rv > value) {
        nu = std::move(rn);
        value = rv;
        prov = "grid-refined";
      }
    }
    if (value > res.value + 1e-12 * std::max(1.0, std::abs(value)) || res.value == kNegInf) {
      res.value = value;
      res.nu = nu;
      res.provenance = prov;
      res.converged = value > kNegInf;
      res.messages = {};
      try {
        auto opt = maximize_mu_given_nu(spec, nu, opts.newton);
        res.converged = opt.report.converged;
        res.messages = opt.messages;
        // Seed the message iteration with the dual solution; keep it if it lands on the same value.
        SolveOptions seeded = opts.bp;
        seeded.restarts = 0;
        auto [smp, srep] = solve_field(spec, fs, seeded, opt.messages);
        if (srep.converged && srep.objective >= res.value - 1e-9 * std::max(1.0, std::abs(res.value))) {
          if (srep.objective > res.value) res.value = srep.objective;
          res.messages = smp;
        }
      } catch (const InfeasibleError&) {
      }
    }
  }
  if (res.value == kNegInf && !rep.converged) throw NumericalFailure("no stationary point found");
  if (!res.nu.empty()) res.boundary = *std::min_element(res.nu.begin(), res.nu.end()) <= 1e-9;
  return res;
}

}  // namespace

double consistency_error(const FactorTable& f, const TypeAssignment& ta) {
  const std::size_t q = f.q();
  if (ta.nu.size() != q || ta.mu.size() != f.size()) throw ConfigError("type assignment has the wrong shape");
  std::vector<double> marg(q, 0.0);
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    if (ta.mu[idx] == 0.0) continue;
    for (int x : f.tuple_of(idx)) marg[x] += ta.mu[idx];
  }
  double err = 0.0;
  for (std::size_t x = 0; x < q; ++x) err = std::max(err, std::abs(marg[x] / f.arity() - ta.nu[x]));
  return err;
}

double bethe_type_objective(const RegularSpec& spec, const TypeAssignment& ta, double tol) {
  spec.validate();
  const FactorTable& f = spec.factor;
  const double err = consistency_error(f, ta);
  if (err > tol) throw ConfigError("type assignment violates the consistency condition by " + std::to_string(err));
  double hmu = 0.0, energy = 0.0;
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    const double m = ta.mu[idx];
    if (m == 0.0) continue;
    if (f.at(idx) == 0.0) return kNegInf;
    hmu -= m * std::log(m);
    energy += m * std::log(f.at(idx));
  }
  const double lr = static_cast<double>(spec.l) / spec.r;
  return lr * hmu - (spec.l - 1) * entropy(ta.nu) + lr * energy;
}

TypeAssignment types_from_messages(const RegularSpec& spec, const MessagePair& mp, std::span<const double> h) {
  const FactorTable& f = spec.factor;
  const std::size_t q = f.q();
  TypeAssignment ta;
  ta.nu.resize(q);
  for (std::size_t x = 0; x < q; ++x) ta.nu[x] = (h.empty() ? 1.0 : h[x]) * std::pow(mp.fv[x], spec.l);
  if (!normalize(ta.nu)) throw DegenerateMessageError("variable type from messages is empty");
  ta.mu.assign(f.size(), 0.0);
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    double v = f.at(idx);
    if (v == 0.0) continue;
    for (int x : f.tuple_of(idx)) v *= mp.vf[x];
    ta.mu[idx] = v;
  }
  if (!normalize(ta.mu)) throw DegenerateMessageError("factor type from messages is empty");
  return ta;
}

double annealed_regular_at(const MessagePair& mp, const RegularSpec& spec) {
  spec.validate();
  return regular_objective(spec, mp);
}

double growth_rate_at(const RegularSpec& spec, std::span<const double> nu, const MessagePair& mp) {
  spec.validate();
  check_type(nu, spec.factor.q());
  return fixed_type_objective(spec, nu, mp);
}

MessageGradient regular_objective_gradient(const RegularSpec& spec, const MessagePair& mp) {
  const std::size_t q = spec.factor.q();
  const double lzf = log_Zf(spec.factor, mp.vf);
  const auto lb = log_branch_sums(spec.factor, mp.vf);
  const double zv = std::exp(log_Zv(mp.fv, spec.l));
  const double zfv = std::exp(log_Zfv(mp.vf, mp.fv));
  const double l = spec.l;
  MessageGradient g;
  g.d_vf.resize(q);
  g.d_fv.resize(q);
  for (std::size_t x = 0; x < q; ++x) {
    g.d_vf[x] = l / spec.r * std::exp(lb[x] - lzf) - l * mp.fv[x] / zfv;
    g.d_fv[x] = l * std::pow(mp.fv[x], spec.l - 1) / zv - l * mp.vf[x] / zfv;
  }
  return g;
}

MessageGradient fixed_type_objective_gradient(const RegularSpec& spec, std::span<const double> nu,
                                              const MessagePair& mp) {
  const std::size_t q = spec.factor.q();
  const double lzf = log_Zf(spec.factor, mp.vf);
  const auto lb = log_branch_sums(spec.factor, mp.vf);
  const double zfv = std::exp(log_Zfv(mp.vf, mp.fv));
  const double l = spec.l;
  MessageGradient g;
  g.d_vf.resize(q);
  g.d_fv.resize(q);
  for (std::size_t x = 0; x < q; ++x) {
    g.d_vf[x] = l / spec.r * std::exp(lb[x] - lzf) - l * mp.fv[x] / zfv;
    g.d_fv[x] = (nu[x] == 0.0 ? 0.0 : l * nu[x] / mp.fv[x]) - l * mp.vf[x] / zfv;
  }
  return g;
}

int default_grid_resolution(std::size_t q) {
  switch (q) {
    case 2: return 200;
    case 3: return 60;
    case 4: return 20;
    case 5: return 10;
    case 6: return 7;
    case 7:
    case 8: return 5;
    default: return 0;
  }
}

GrowthPoint growth_rate_fixed_type(const RegularSpec& spec, std::span<const double> nu,
                                   const FreeEnergyOptions& opts) {
  spec.validate();
  check_type(nu, spec.factor.q());
  GrowthPoint gp;
  gp.nu.assign(nu.begin(), nu.end());
  gp.bp_value = kNegInf;
  gp.newton_value = kNegInf;

  auto [mp, rep] = solve_fixed_type(spec, nu, opts.bp);
  gp.converged = rep.converged;
  gp.iterations = rep.iterations;
  if (rep.converged) gp.bp_value = rep.objective;

  MessagePair newton_messages;
  bool feasible = true;
  try {
    auto opt = maximize_mu_given_nu(spec, nu, opts.newton);
    gp.newton_value = opt.value;
    gp.newton_converged = opt.report.converged;
    newton_messages = std::move(opt.messages);
  } catch (const InfeasibleError&) {
    feasible = false;
  }

  if (!feasible) {
    gp.solver = "infeasible";
    gp.value = kNegInf;
    gp.converged = false;
  } else if (gp.converged) {
    gp.solver = "bp";
    gp.value = gp.bp_value;
    gp.messages = std::move(mp);
  } else {
    gp.solver = "newton";
    gp.value = gp.newton_value;
    gp.messages = std::move(newton_messages);
  }
  return gp;
}

std::vector<GrowthPoint> growth_rate_sweep(const RegularSpec& spec, const std::vector<std::vector<double>>& nus,
                                           const FreeEnergyOptions& opts) {
  std::vector<GrowthPoint> out(nus.size());
  parallel_for(nus.size(), opts.threads, [&](std::size_t i) {
    FreeEnergyOptions o = opts;
    o.bp.seed = derive_seed(opts.bp.seed, i);
    out[i] = growth_rate_fixed_type(spec, nus[i], o);
  });
  return out;
}

AnnealedResult annealed_regular(const RegularSpec& spec, const FreeEnergyOptions& opts) {
  return annealed_with_field(spec, {}, opts);
}

AnnealedResult annealed_field(const RegularSpec& spec, const FieldSpec& h, const FreeEnergyOptions& opts) {
  h.validate(spec.factor.q());
  return annealed_with_field(spec, h.h, opts);
}

ScalarResult annealed_random_field(const RegularSpec& spec, const RandomFieldSpec& rf, const FreeEnergyOptions& opts) {
  auto [mp, rep] = solve_random_field(spec, rf, opts.bp);
  if (rep.restart < 0) throw NumericalFailure("every restart of the random-field iteration degenerated");
  return {rep.objective, rep};
}

ScalarResult annealed_irregular(const IrregularSpec& spec, const FreeEnergyOptions& opts) {
  auto [st, rep] = solve_irregular(spec, opts.bp);
  return {rep.objective, rep};
}

ScalarResult annealed_poisson(const PoissonSpec& spec, const FreeEnergyOptions& opts) {
  auto [st, rep] = solve_poisson(spec, opts.bp);
  return {poisson_objective(spec, st), rep};
}

AnnealedResult moment_exponent(const RegularSpec& spec, int n, const FreeEnergyOptions& opts) {
  spec.validate();
  RegularSpec rep{spec.l, spec.r, replicate_factor(spec.factor, n)};
  return annealed_regular(rep, opts);
}

namespace {

struct LdpcPoint {
  double z, y, atanh_y, log_1py, log_1my, h, omega_p;
};

// Parametrized by u = atanh(z'); y' = z'^{r-1} is explicit, h and omega' follow.
LdpcPoint ldpc_at(int l, int r, double u) {
  LdpcPoint p{};
  p.z = std::tanh(u);
  if (u == 0.0) {
    p.y = r == 1 ? 1.0 : 0.0;
  }
  const double au = std::abs(u);
  const double log_abs_z = au == 0.0 ? kNegInf : std::log1p(-2.0 / (std::exp(2.0 * au) + 1.0));
  const int e = r - 1;
  const double sign = (u < 0.0 && e % 2 == 1) ? -1.0 : 1.0;
  double abs_y, log_1m_abs_y;
  if (e == 0) {
    abs_y = 1.0;
    log_1m_abs_y = kNegInf;
  } else if (log_abs_z == kNegInf) {
    abs_y = 0.0;
    log_1m_abs_y = 0.0;
  } else {
    abs_y = std::exp(e * log_abs_z);
    log_1m_abs_y = std::log(-std::expm1(e * log_abs_z));
  }
  p.y = sign * abs_y;
  const double atanh_abs = 0.5 * (std::log1p(abs_y) - log_1m_abs_y);
  p.atanh_y = sign * atanh_abs;
  p.log_1py = sign > 0 ? std::log1p(abs_y) : log_1m_abs_y;
  p.log_1my = sign > 0 ? log_1m_abs_y : std::log1p(abs_y);
  p.h = u - (l - 1) * p.atanh_y;
  p.omega_p = std::tanh(u + p.atanh_y);
  return p;
}

}  // namespace

LdpcParams ldpc_growth_rate_closed_form(int l, int r, double omega) {
  if (l < 1 || r < 2) throw ConfigError("need l >= 1 and r >= 2");
  if (!(omega > 0.0 && omega < 1.0)) throw ConfigError("omega must lie in (0, 1)");
  const double target = 1.0 - 2.0 * omega;

  // Scan u for sign changes of omega'(u) - target, then bisect each bracket.
  const double umax = 30.0;
  const int steps = 6000;
  std::vector<double> roots;
  auto g = [&](double u) { return ldpc_at(l, r, u).omega_p - target; };
  double u0 = -umax, g0 = g(u0);
  for (int i = 1; i <= steps; ++i) {
    const double u1 = -umax + 2.0 * umax * i / steps;
    const double g1 = g(u1);
    if (g0 == 0.0) roots.push_back(u0);
    else if ((g0 < 0.0) != (g1 < 0.0) && g1 != 0.0) {
      double a = u0, b = u1, ga = g0;
      for (int it = 0; it < 200 && b - a > 0.0; ++it) {
        const double m = 0.5 * (a + b);
        if (m == a || m == b) break;
        const double gm = g(m);
        if ((gm < 0.0) == (ga < 0.0)) {
          a = m;
          ga = gm;
        } else {
          b = m;
        }
      }
      roots.push_back(0.5 * (a + b));
    }
    u0 = u1;
    g0 = g1;
  }
  if (roots.empty()) throw NumericalFailure("no solution of the LDPC stationary equations was bracketed");

  LdpcParams best;
  best.value = kNegInf;
  for (double u : roots) {
    const LdpcPoint p = ldpc_at(l, r, u);
    const double lr = static_cast<double>(l) / r;
    // (1 + z^r) / 2
    const double zr = std::pow(p.z, r);
    const double term_f = lr * std::log((1.0 + zr) / 2.0);
    const double a = p.h + l * (p.log_1py - std::log(2.0));
    const double b = -p.h + l * (p.log_1my - std::log(2.0));
    const double pair[2] = {a, b};
    const double term_v = log_sum_exp(pair);
    const double term_fv = -l * std::log((1.0 + p.y * p.z) / 2.0);
    const double value = term_f + term_v + term_fv - p.omega_p * p.h;
    if (value > best.value) {
      best.omega = omega;
      best.omega_p = target;
      best.h = p.h;
      best.y = p.y;
      best.z = p.z;
      best.value = value;
      best.residual = std::max({std::abs(target - std::tanh(p.h + l * p.atanh_y)),
                                std::abs(p.y - std::pow(p.z, r - 1)),
                                std::abs(p.z - std::tanh(p.h + (l - 1) * p.atanh_y))});
    }
  }
  return best;
}

double constrained_value_at(const RegularSpec& spec, std::span<const double> nu,
                            const std::vector<MuConstraint>& mu_cons, const NewtonOptions& opts,
                            std::vector<double>* mu_multipliers) {
  spec.validate();
  const FactorTable& f = spec.factor;
  const std::size_t q = f.q();
  check_type(nu, q);
  if (mu_cons.empty()) {
    if (mu_multipliers) mu_multipliers->clear();
    return fixed_type_newton_value(spec, nu, opts);
  }
  for (const auto& c : mu_cons)
    if (c.c.size() != f.size()) throw ConfigError("mu constraint must give one coefficient per tuple");

  std::vector<std::size_t> support;
  std::vector<char> in_support(q, 0);
  for (std::size_t x = 0; x < q; ++x)
    if (nu[x] > 0.0) {
      support.push_back(x);
      in_support[x] = 1;
    }
  std::vector<std::vector<double>> features;
  std::vector<double> lw;
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    if (f.at(idx) == 0.0) continue;
    const Tuple t = f.tuple_of(idx);
    if (!std::all_of(t.begin(), t.end(), [&](int x) { return in_support[x] != 0; })) continue;
    std::vector<double> feat(support.size(), 0.0);
    for (int x : t) feat[std::find(support.begin(), support.end(), static_cast<std::size_t>(x)) - support.begin()] += 1.0;
    for (const auto& c : mu_cons) feat.push_back(c.c[idx]);
    features.push_back(std::move(feat));
    lw.push_back(std::log(f.at(idx)));
  }
  if (features.empty()) return kNegInf;
  std::vector<double> target;
  for (std::size_t x : support) target.push_back(f.arity() * nu[x]);
  for (const auto& c : mu_cons) target.push_back(c.d);
  try {
    const MaxEntResult me = solve_maxent(features, lw, target, opts);
    if (mu_multipliers) mu_multipliers->assign(me.theta.end() - static_cast<long>(mu_cons.size()), me.theta.end());
    return static_cast<double>(spec.l) / spec.r * me.dual_value - (spec.l - 1) * entropy(nu);
  } catch (const InfeasibleError&) {
    return kNegInf;
  }
}

ConstrainedResult maximize_with_linear_constraints(const RegularSpec& spec, const std::vector<NuConstraint>& nu_cons,
                                                   const std::vector<MuConstraint>& mu_cons,
                                                   const FreeEnergyOptions& opts) {
  spec.validate();
  const std::size_t q = spec.factor.q();
  const Eigen::Index Q = static_cast<Eigen::Index>(q);
  const Eigen::Index m = static_cast<Eigen::Index>(nu_cons.size()) + 1;
  Eigen::MatrixXd A(m, Q);
  Eigen::VectorXd b(m);
  for (Eigen::Index k = 0; k + 1 < m; ++k) {
    if (nu_cons[k].a.size() != q) throw ConfigError("nu constraint must give one coefficient per symbol");
    for (Eigen::Index x = 0; x < Q; ++x) A(k, x) = nu_cons[k].a[x];
    b(k) = nu_cons[k].b;
  }
  A.row(m - 1).setOnes();
  b(m - 1) = 1.0;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd nu0 = svd.solve(b);
  if ((A * nu0 - b).cwiseAbs().maxCoeff() > 1e-9)
    throw InfeasibleError("linear constraints on nu are inconsistent", {});
  const Eigen::VectorXd sv = svd.singularValues();
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-12 * std::max(1.0, sv(0))) ++rank;
  const Eigen::MatrixXd N = svd.matrixV().rightCols(Q - rank);

  auto to_nu = [&](const Eigen::VectorXd& v) -> std::optional<std::vector<double>> {
    std::vector<double> nu(q);
    for (std::size_t x = 0; x < q; ++x) {
      if (v(static_cast<Eigen::Index>(x)) < -1e-12) return std::nullopt;
      nu[x] = std::max(0.0, v(static_cast<Eigen::Index>(x)));
    }
    return nu;
  };
  auto value_of = [&](const std::vector<double>& nu) {
    double s = 0.0;
    for (double v : nu) s += v;
    std::vector<double> n2 = nu;
    for (double& v : n2) v /= s;
    return constrained_value_at(spec, n2, mu_cons, opts.newton);
  };

  std::vector<std::vector<double>> candidates;
  if (auto c = to_nu(nu0)) candidates.push_back(*c);
  if (N.cols() > 0) {
    const int resolution = std::max(2, opts.grid_resolution > 0 ? opts.grid_resolution : default_grid_resolution(q));
    for (const auto& g : simplex_grid(q, resolution)) {
      Eigen::VectorXd gv(Q);
      for (Eigen::Index x = 0; x < Q; ++x) gv(x) = g[x];
      if (auto c = to_nu(nu0 + N * (N.transpose() * (gv - nu0)))) candidates.push_back(*c);
    }
  }
  if (candidates.empty()) throw InfeasibleError("no nonnegative type satisfies the nu constraints", {});
  std::vector<double> values(candidates.size());
  parallel_for(candidates.size(), opts.threads, [&](std::size_t i) { values[i] = value_of(candidates[i]); });
  const std::size_t best = static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
  if (values[best] == kNegInf) throw InfeasibleError("constraints admit no factor type inside the support", {});

  // Refine inside the slice with a compass search along the null-space directions.
  Eigen::VectorXd t = N.transpose() * (Eigen::Map<const Eigen::VectorXd>(candidates[best].data(), Q) - nu0);
  double value = values[best];
  if (opts.refine && N.cols() > 0) {
    double step = 0.05;
    while (step >= 1e-10) {
      bool improved = false;
      for (Eigen::Index k = 0; k < N.cols() && !improved; ++k) {
        for (double sgn : {1.0, -1.0}) {
          Eigen::VectorXd t2 = t;
          t2(k) += sgn * step;
          auto c = to_nu(nu0 + N * t2);
          if (!c) continue;
          const double v = value_of(*c);
          if (v > value + 1e-15 * std::max(1.0, std::abs(value))) {
            t = t2;
            value = v;
            improved = true;
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
  }
  ConstrainedResult out;
  out.nu = *to_nu(nu0 + N * t);
  out.value = constrained_value_at(spec, out.nu, mu_cons, opts.newton, &out.mu_multipliers);
  out.converged = std::isfinite(out.value);
  return out;
}

}  // namespace annealed
