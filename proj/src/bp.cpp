#include "annealed/bp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "annealed/errors.hpp"
#include "annealed/numeric.hpp"

namespace annealed {

void SolveOptions::validate() const {
  if (!(tol > 0.0)) throw ConfigError("tolerance must be positive");
  if (max_iters < 1) throw ConfigError("max_iters must be positive");
  if (!(damping >= 0.0 && damping < 1.0)) throw ConfigError("damping must lie in [0, 1)");
  if (restarts < 0) throw ConfigError("restarts must be nonnegative");
}

namespace {

std::vector<double> normalized_or_throw(std::span<const double> logw, const char* what) {
  std::vector<double> out;
  if (!normalize_log(logw, out)) throw DegenerateMessageError(std::string(what) + " update produced an all-zero message");
  return out;
}

std::vector<double> field_or_ones(std::span<const double> h, std::size_t q) {
  if (h.empty()) return std::vector<double>(q, 1.0);
  return {h.begin(), h.end()};
}

// v -> f update for a mixture of fields: m_vf(x) ∝ sum_h g(h) h(x) m_fv(x)^{l-1}, g(h) ∝ P_H(h) / Z_v(h).
std::vector<double> v_to_f_mixture(const std::vector<std::vector<double>>& fields, std::span<const double> probs,
                                   std::span<const double> m_fv, int l) {
  const std::size_t q = m_fv.size();
  const auto logm = log_vector(m_fv);
  std::vector<double> lzv(fields.size(), 0.0);
  if (fields.size() > 1)
    for (std::size_t k = 0; k < fields.size(); ++k) lzv[k] = log_Zv(m_fv, l, fields[k]);
  std::vector<double> out(q, kNegInf);
  std::vector<double> terms;
  for (std::size_t x = 0; x < q; ++x) {
    terms.clear();
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (probs[k] == 0.0 || fields[k][x] == 0.0) continue;
      terms.push_back(std::log(probs[k]) - lzv[k] + std::log(fields[k][x]) + scaled_log(l - 1, logm[x]));
    }
    out[x] = log_sum_exp(terms);
  }
  return normalized_or_throw(out, "variable-to-factor");
}

struct RunResult {
  MessagePair mp;
  bool converged = false;
  int iterations = 0;
  double residual = kInf;
};

using Step = std::function<std::vector<double>(std::span<const double>)>;

void mix(std::vector<double>& fresh, const std::vector<double>& old, double damping) {
  if (damping == 0.0) return;
  for (std::size_t i = 0; i < fresh.size(); ++i) fresh[i] = (1.0 - damping) * fresh[i] + damping * old[i];
}

// A run counts as converged once the residual has stayed within tol for this
// many further iterations. Saturating updates can drop a far-away start onto an
// unstable fixed point to within rounding; the window lets it drift off again.
constexpr int kConfirmIterations = 50;

// Tracks the confirmation window. step() returns true when the loop should stop.
struct ConvergenceWatch {
  const SolveOptions& o;
  int first_hit = 0;
  bool step(RunResult& rr, int it) {
    rr.iterations = it;
    if (!std::isfinite(rr.residual)) return true;
    if (rr.residual > o.tol) {
      first_hit = 0;
      return it >= o.max_iters;
    }
    if (first_hit == 0) first_hit = it;
    if (it - first_hit < kConfirmIterations) return false;
    rr.converged = true;
    rr.iterations = first_hit;
    return true;
  }
};

RunResult iterate(MessagePair mp, const Step& f_step, const Step& v_step, const SolveOptions& o) {
  RunResult rr;
  ConvergenceWatch watch{o};
  for (int it = 1; it <= o.max_iters + kConfirmIterations; ++it) {
    auto fv = f_step(mp.vf);
    mix(fv, mp.fv, o.damping);
    auto vf = v_step(fv);
    mix(vf, mp.vf, o.damping);
    rr.residual = std::max(max_abs_diff(fv, mp.fv), max_abs_diff(vf, mp.vf));
    mp.fv = std::move(fv);
    mp.vf = std::move(vf);
    if (watch.step(rr, it)) break;
  }
  rr.mp = std::move(mp);
  return rr;
}

// Runs restart 0 from `first` and restarts 1..opts.restarts from `random_start`,
// keeping the converged run with the largest objective (or, failing that, the
// run with the smallest residual).
template <class Run, class Start, class Objective>
std::pair<MessagePair, SolveReport> best_of_restarts(const MessagePair& first, Start random_start, Run run,
                                                     Objective objective, const SolveOptions& opts) {
  opts.validate();
  SolveReport best;
  best.residual = kInf;
  best.objective = kNegInf;
  MessagePair best_mp;
  bool have = false;
  for (int k = 0; k <= opts.restarts; ++k) {
    MessagePair start;
    if (k == 0) {
      start = first;
    } else {
      std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(k)));
      start = random_start(rng);
    }
    RunResult rr;
    double obj = kNegInf;
    try {
      rr = run(std::move(start));
      obj = objective(rr.mp);
      if (std::isnan(obj)) obj = kNegInf;
    } catch (const DegenerateMessageError&) {
      ++best.degenerate_restarts;
      continue;
    }
    if (rr.converged) ++best.converged_restarts;
    bool better;
    if (!have) better = true;
    else if (rr.converged != best.converged) better = rr.converged;
    else if (rr.converged) better = obj > best.objective;
    else better = rr.residual < best.residual;
    if (better) {
      have = true;
      best.converged = rr.converged;
      best.iterations = rr.iterations;
      best.residual = rr.residual;
      best.objective = obj;
      best.restart = k;
      best_mp = std::move(rr.mp);
    }
  }
  if (!have) {
    best.converged = false;
    best.objective = kNegInf;
  }
  return {std::move(best_mp), best};
}

MessagePair uniform_pair(std::size_t q) { return {uniform_vector(q), uniform_vector(q)}; }

MessagePair random_pair(std::size_t q, std::mt19937_64& rng) {
  MessagePair mp;
  mp.vf = random_simplex_point(q, rng);
  mp.fv = random_simplex_point(q, rng);
  return mp;
}

void check_init(const MessagePair& mp, std::size_t q) {
  if (mp.vf.size() != q || mp.fv.size() != q) throw ConfigError("initial messages have the wrong length");
}

}  // namespace

std::vector<double> log_branch_sums(const FactorTable& f, std::span<const double> m_vf) {
  const std::size_t q = f.q();
  if (m_vf.size() != q) throw ConfigError("message length does not match the alphabet");
  const auto logm = log_vector(m_vf);
  const auto& prof = f.profile();
  std::vector<double> out(q, kNegInf);
  std::vector<double> terms;
  for (std::size_t x = 0; x < q; ++x) {
    terms.clear();
    for (std::size_t c = 0; c < prof.counts.size(); ++c) {
      const auto& cnt = prof.counts[c];
      if (cnt[x] == 0) continue;
      double t = prof.log_weight[c] + std::log(static_cast<double>(cnt[x]));
      for (std::size_t y = 0; y < q; ++y) t += scaled_log(cnt[y] - (y == x ? 1 : 0), logm[y]);
      if (t != kNegInf) terms.push_back(t);
    }
    out[x] = log_sum_exp(terms);
  }
  return out;
}

double log_Zf(const FactorTable& f, std::span<const double> m_vf) {
  const std::size_t q = f.q();
  if (m_vf.size() != q) throw ConfigError("message length does not match the alphabet");
  const auto logm = log_vector(m_vf);
  const auto& prof = f.profile();
  std::vector<double> terms;
  terms.reserve(prof.counts.size());
  for (std::size_t c = 0; c < prof.counts.size(); ++c) {
    double t = prof.log_weight[c];
    for (std::size_t y = 0; y < q; ++y) t += scaled_log(prof.counts[c][y], logm[y]);
    terms.push_back(t);
  }
  return log_sum_exp(terms);
}

double log_Zfv(std::span<const double> m_vf, std::span<const double> m_fv) {
  double s = 0.0;
  for (std::size_t x = 0; x < m_vf.size(); ++x) s += m_vf[x] * m_fv[x];
  return s > 0.0 ? std::log(s) : kNegInf;
}

double log_Zv(std::span<const double> m_fv, int l, std::span<const double> h) {
  std::vector<double> terms;
  for (std::size_t x = 0; x < m_fv.size(); ++x) {
    const double hx = h.empty() ? 1.0 : h[x];
    if (hx == 0.0) continue;
    terms.push_back(std::log(hx) + scaled_log(l, m_fv[x] > 0.0 ? std::log(m_fv[x]) : kNegInf));
  }
  return log_sum_exp(terms);
}

std::vector<double> update_f_to_v(const FactorTable& f, std::span<const double> m_vf) {
  return normalized_or_throw(log_branch_sums(f, m_vf), "factor-to-variable");
}

std::vector<double> update_f_to_v_dense(const FactorTable& f, std::span<const double> m_vf, Branching branching) {
  const std::size_t q = f.q();
  const int r = f.arity();
  std::vector<double> out(q, 0.0);
  const int branches = branching == Branching::Full ? r : 1;
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    const double v = f.at(idx);
    if (v == 0.0) continue;
    const Tuple t = f.tuple_of(idx);
    for (int i = 0; i < branches; ++i) {
      double p = v;
      for (int j = 0; j < r; ++j)
        if (j != i) p *= m_vf[t[j]];
      out[t[i]] += p;
    }
  }
  if (!normalize(out)) throw DegenerateMessageError("factor-to-variable update produced an all-zero message");
  return out;
}

std::vector<double> update_v_to_f_regular(std::span<const double> m_fv, int l) {
  std::vector<double> logw(m_fv.size());
  for (std::size_t x = 0; x < m_fv.size(); ++x)
    logw[x] = scaled_log(l - 1, m_fv[x] > 0.0 ? std::log(m_fv[x]) : kNegInf);
  return normalized_or_throw(logw, "variable-to-factor");
}

std::vector<double> update_v_to_f_fixed_type(std::span<const double> nu, std::span<const double> m_fv) {
  if (nu.size() != m_fv.size()) throw ConfigError("type and message lengths differ");
  std::vector<double> out(nu.size(), 0.0);
  for (std::size_t x = 0; x < nu.size(); ++x) {
    if (nu[x] == 0.0) continue;
    if (!(m_fv[x] > 0.0))
      throw DegenerateMessageError("factor-to-variable message vanishes on a symbol with positive type weight");
    out[x] = nu[x] / m_fv[x];
  }
  if (!normalize(out)) throw DegenerateMessageError("variable-to-factor update produced an all-zero message");
  return out;
}

std::vector<double> update_v_to_f_field(const FieldSpec& h, std::span<const double> m_fv, int l) {
  h.validate(m_fv.size());
  std::vector<double> logw(m_fv.size());
  for (std::size_t x = 0; x < m_fv.size(); ++x) {
    if (h.h[x] == 0.0) {
      logw[x] = kNegInf;
      continue;
    }
    logw[x] = std::log(h.h[x]) + scaled_log(l - 1, m_fv[x] > 0.0 ? std::log(m_fv[x]) : kNegInf);
  }
  return normalized_or_throw(logw, "variable-to-factor");
}

double regular_objective(const RegularSpec& spec, const MessagePair& mp, std::span<const double> h) {
  const double lzfv = log_Zfv(mp.vf, mp.fv);
  if (lzfv == kNegInf) throw NumericalFailure("Z_fv vanishes at the given messages");
  return static_cast<double>(spec.l) / spec.r * log_Zf(spec.factor, mp.vf) + log_Zv(mp.fv, spec.l, h) -
         spec.l * lzfv;
}

double random_field_objective(const RegularSpec& spec, const RandomFieldSpec& rf, const MessagePair& mp) {
  const double lzfv = log_Zfv(mp.vf, mp.fv);
  if (lzfv == kNegInf) throw NumericalFailure("Z_fv vanishes at the given messages");
  double v = static_cast<double>(spec.l) / spec.r * log_Zf(spec.factor, mp.vf) - spec.l * lzfv;
  for (std::size_t k = 0; k < rf.fields.size(); ++k)
    if (rf.probs[k] > 0.0) v += rf.probs[k] * log_Zv(mp.fv, spec.l, rf.fields[k].h);
  return v;
}

double fixed_type_objective(const RegularSpec& spec, std::span<const double> nu, const MessagePair& mp) {
  const double lzfv = log_Zfv(mp.vf, mp.fv);
  if (lzfv == kNegInf) throw NumericalFailure("Z_fv vanishes at the given messages");
  double cross = 0.0;
  for (std::size_t x = 0; x < nu.size(); ++x) {
    if (nu[x] == 0.0) continue;
    if (!(mp.fv[x] > 0.0)) return kNegInf;
    cross += nu[x] * std::log(mp.fv[x]);
  }
  return spec.l * (log_Zf(spec.factor, mp.vf) / spec.r + cross - lzfv) + entropy(nu);
}

double poisson_objective(const PoissonSpec& spec, const PoissonState& st) {
  const auto& mp = st.messages;
  std::vector<double> ez(mp.fv.size());
  double coupling = 0.0;
  for (std::size_t x = 0; x < ez.size(); ++x) {
    ez[x] = st.e * mp.fv[x];
    coupling += mp.vf[x] * mp.fv[x];
  }
  return spec.alpha * log_Zf(spec.factor, mp.vf) + log_sum_exp(ez) - st.e * coupling;
}

double irregular_objective(const IrregularSpec& spec, const MessagePair& mp) {
  const double lp = spec.mean_variable_degree();
  const double rp = spec.mean_factor_degree();
  const double lzfv = log_Zfv(mp.vf, mp.fv);
  if (lzfv == kNegInf) throw NumericalFailure("Z_fv vanishes at the given messages");
  double v = -lp * lzfv;
  for (const auto& [j, p] : spec.R)
    if (p > 0.0) v += lp / rp * p * log_Zf(spec.factors.at(j), mp.vf);
  for (const auto& [i, p] : spec.L)
    if (p > 0.0) v += p * log_Zv(mp.fv, i);
  return v;
}

double regular_residual(const RegularSpec& spec, const MessagePair& mp, std::span<const double> h) {
  const auto fv = update_f_to_v(spec.factor, mp.vf);
  const auto hh = field_or_ones(h, spec.factor.q());
  const auto vf = v_to_f_mixture({hh}, std::vector<double>{1.0}, fv, spec.l);
  return std::max(max_abs_diff(fv, mp.fv), max_abs_diff(vf, mp.vf));
}

double fixed_type_residual(const RegularSpec& spec, std::span<const double> nu, const MessagePair& mp) {
  const auto fv = update_f_to_v(spec.factor, mp.vf);
  const auto vf = update_v_to_f_fixed_type(nu, fv);
  return std::max(max_abs_diff(fv, mp.fv), max_abs_diff(vf, mp.vf));
}

std::pair<MessagePair, SolveReport> solve_random_field(const RegularSpec& spec, const RandomFieldSpec& rf,
                                                       const SolveOptions& opts,
                                                       const std::optional<MessagePair>& init) {
  spec.validate();
  const std::size_t q = spec.factor.q();
  rf.validate(q);
  if (init) check_init(*init, q);
  std::vector<std::vector<double>> fields;
  for (const auto& fs : rf.fields) fields.push_back(fs.h);
  const Step f_step = [&](std::span<const double> vf) { return update_f_to_v(spec.factor, vf); };
  const Step v_step = [&](std::span<const double> fv) { return v_to_f_mixture(fields, rf.probs, fv, spec.l); };
  return best_of_restarts(
      init.value_or(uniform_pair(q)), [q](std::mt19937_64& rng) { return random_pair(q, rng); },
      [&](MessagePair mp) { return iterate(std::move(mp), f_step, v_step, opts); },
      [&](const MessagePair& mp) { return random_field_objective(spec, rf, mp); }, opts);
}

std::pair<MessagePair, SolveReport> solve_field(const RegularSpec& spec, const FieldSpec& h, const SolveOptions& opts,
                                                const std::optional<MessagePair>& init) {
  return solve_random_field(spec, RandomFieldSpec{{h}, {1.0}}, opts, init);
}

std::pair<MessagePair, SolveReport> solve_regular(const RegularSpec& spec, const SolveOptions& opts,
                                                  const std::optional<MessagePair>& init) {
  return solve_field(spec, FieldSpec{std::vector<double>(spec.factor.q(), 1.0)}, opts, init);
}

std::pair<MessagePair, SolveReport> solve_fixed_type(const RegularSpec& spec, std::span<const double> nu,
                                                     const SolveOptions& opts,
                                                     const std::optional<std::vector<double>>& init_fv) {
  spec.validate();
  const std::size_t q = spec.factor.q();
  if (nu.size() != q) throw ConfigError("type has the wrong length");
  double s = 0.0;
  for (double v : nu) {
    if (!(v >= 0.0)) throw ConfigError("type entries must be nonnegative");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("type must sum to 1");
  if (init_fv && init_fv->size() != q) throw ConfigError("initial message has the wrong length");

  const std::vector<double> nuv(nu.begin(), nu.end());
  auto start_from = [&](std::vector<double> fv) {
    MessagePair mp;
    mp.vf = update_v_to_f_fixed_type(nuv, fv);
    mp.fv = std::move(fv);
    return mp;
  };
  const Step f_step = [&](std::span<const double> vf) { return update_f_to_v(spec.factor, vf); };
  const Step v_step = [&](std::span<const double> fv) { return update_v_to_f_fixed_type(nuv, fv); };

  MessagePair first;
  if (init_fv) {
    first = start_from(*init_fv);
  } else {
    std::mt19937_64 rng(derive_seed(opts.seed, 0));
    first = start_from(random_simplex_point(q, rng));
  }
  return best_of_restarts(
      first, [&](std::mt19937_64& rng) { return start_from(random_simplex_point(q, rng)); },
      [&](MessagePair mp) { return iterate(std::move(mp), f_step, v_step, opts); },
      [&](const MessagePair& mp) { return fixed_type_objective(spec, nuv, mp); }, opts);
}

std::pair<PoissonState, SolveReport> solve_poisson(const PoissonSpec& spec, const SolveOptions& opts) {
  spec.validate();
  opts.validate();
  const std::size_t q = spec.factor.q();
  const double ak = spec.alpha * spec.k;
  auto coupling = [](const MessagePair& mp) {
    double c = 0.0;
    for (std::size_t x = 0; x < mp.vf.size(); ++x) c += mp.vf[x] * mp.fv[x];
    return c;
  };
  auto e_of = [&](const MessagePair& mp) {
    const double c = coupling(mp);
    if (!(c > 0.0)) throw DegenerateMessageError("messages are orthogonal; the mean degree is undefined");
    const double e = ak / c;
    if (e > 1e6) throw NumericalFailure("mean-degree parameter e exceeded 1e6");
    return e;
  };
  auto v_step = [&](std::span<const double> fv, double e) {
    std::vector<double> logw(fv.size());
    for (std::size_t x = 0; x < fv.size(); ++x) logw[x] = e * fv[x];
    return normalized_or_throw(logw, "variable-to-factor");
  };

  auto run = [&](MessagePair mp) {
    PoissonState st{mp, e_of(mp)};
    RunResult rr;
    ConvergenceWatch watch{opts};
    for (int it = 1; it <= opts.max_iters + kConfirmIterations; ++it) {
      auto fv = update_f_to_v(spec.factor, st.messages.vf);
      mix(fv, st.messages.fv, opts.damping);
      auto vf = v_step(fv, st.e);
      mix(vf, st.messages.vf, opts.damping);
      rr.residual = std::max(max_abs_diff(fv, st.messages.fv), max_abs_diff(vf, st.messages.vf));
      st.messages = {std::move(vf), std::move(fv)};
      const double e = e_of(st.messages);
      rr.residual = std::max(rr.residual, std::abs(e - st.e) / std::max(1.0, e));
      st.e = e;
      if (watch.step(rr, it)) break;
    }
    rr.mp = st.messages;
    return rr;
  };
  auto objective = [&](const MessagePair& mp) { return poisson_objective(spec, PoissonState{mp, e_of(mp)}); };
  auto [mp, report] = best_of_restarts(
      uniform_pair(q), [q](std::mt19937_64& rng) { return random_pair(q, rng); }, run, objective, opts);
  if (report.restart < 0) throw DegenerateMessageError("every restart of the Poisson iteration degenerated");
  PoissonState st{mp, e_of(mp)};
  return {st, report};
}

std::pair<IrregularState, SolveReport> solve_irregular(const IrregularSpec& spec, const SolveOptions& opts,
                                                       const std::optional<MessagePair>& init) {
  spec.validate();
  std::size_t q = 0;
  for (const auto& [j, p] : spec.R)
    if (p > 0.0) q = spec.factors.at(j).q();
  if (init) check_init(*init, q);

  auto r_weights = [&](std::span<const double> vf) {
    std::map<int, double> lw;
    std::vector<double> logs;
    for (const auto& [j, p] : spec.R) {
      if (p == 0.0) continue;
      lw[j] = std::log(p) - log_Zf(spec.factors.at(j), vf);
      logs.push_back(lw[j]);
    }
    const double norm = log_sum_exp(logs);
    for (auto& [j, w] : lw) w = std::exp(w - norm);
    return lw;
  };
  auto l_weights = [&](std::span<const double> fv) {
    std::map<int, double> lw;
    std::vector<double> logs;
    for (const auto& [i, p] : spec.L) {
      if (p == 0.0) continue;
      lw[i] = std::log(p) - log_Zv(fv, i);
      logs.push_back(lw[i]);
    }
    const double norm = log_sum_exp(logs);
    for (auto& [i, w] : lw) w = std::exp(w - norm);
    return lw;
  };

  const Step f_step = [&](std::span<const double> vf) {
    const auto rw = r_weights(vf);
    std::vector<double> logw(q, kNegInf);
    for (const auto& [j, w] : rw) {
      if (w == 0.0) continue;
      const auto lb = log_branch_sums(spec.factors.at(j), vf);
      for (std::size_t x = 0; x < q; ++x) {
        const double t = std::log(w) + lb[x];
        const double pair[2] = {logw[x], t};
        logw[x] = log_sum_exp(pair);
      }
    }
    return normalized_or_throw(logw, "factor-to-variable");
  };
  const Step v_step = [&](std::span<const double> fv) {
    const auto lw = l_weights(fv);
    const auto logm = log_vector(fv);
    std::vector<double> logw(q, kNegInf);
    for (const auto& [i, w] : lw) {
      if (w == 0.0) continue;
      for (std::size_t x = 0; x < q; ++x) {
        const double t = std::log(w) + std::log(static_cast<double>(i)) + scaled_log(i - 1, logm[x]);
        const double pair[2] = {logw[x], t};
        logw[x] = log_sum_exp(pair);
      }
    }
    return normalized_or_throw(logw, "variable-to-factor");
  };

  auto [mp, report] = best_of_restarts(
      init.value_or(uniform_pair(q)), [q](std::mt19937_64& rng) { return random_pair(q, rng); },
      [&](MessagePair m) { return iterate(std::move(m), f_step, v_step, opts); },
      [&](const MessagePair& m) { return irregular_objective(spec, m); }, opts);
  if (report.restart < 0) throw DegenerateMessageError("every restart of the irregular iteration degenerated");
  IrregularState st;
  st.l_w = l_weights(mp.fv);
  st.r_w = r_weights(mp.vf);
  st.messages = std::move(mp);
  return {std::move(st), report};
}

}  // namespace annealed
