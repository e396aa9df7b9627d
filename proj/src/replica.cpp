#include "annealed/replica.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "annealed/errors.hpp"
#include "annealed/numeric.hpp"

namespace annealed {

Population::Population(std::size_t size, std::size_t q) : size_(size), q_(q), data_(size * q, 1.0 / q) {
  if (size == 0 || q < 2) throw ConfigError("population needs at least one member and two symbols");
}

Population Population::delta(std::size_t size, std::span<const double> message) {
  Population p(size, message.size());
  for (std::size_t i = 0; i < size; ++i) std::copy(message.begin(), message.end(), p.member(i).begin());
  return p;
}

Population Population::random(std::size_t size, std::size_t q, std::mt19937_64& rng) {
  Population p(size, q);
  for (std::size_t i = 0; i < size; ++i) {
    const auto m = random_simplex_point(q, rng);
    std::copy(m.begin(), m.end(), p.member(i).begin());
  }
  return p;
}

void PdOptions::validate() const {
  if (population < 100) throw ConfigError("population size must be at least 100");
  if (sweeps < 0) throw ConfigError("sweep count must be nonnegative");
  if (samples < 2) throw ConfigError("at least two free-energy samples are needed");
}

namespace {

constexpr int kMaxRedraws = 1000;

// Sums of f against products of independently drawn messages. For a
// permutation-invariant f these reduce to the law of the symbol counts,
// computed by a dynamic program over the members; otherwise X^r is enumerated.
class FactorContractor {
 public:
  explicit FactorContractor(const FactorTable& f) : f_(f), q_(f.q()), r_(f.arity()) {
    if (!f.perm_invariant()) return;
    const auto& prof = f.profile();
    if (q_ == 2) {
      by_ones_.assign(r_ + 1, 0.0);
      for (std::size_t c = 0; c < prof.counts.size(); ++c) by_ones_[prof.counts[c][1]] = prof.class_value[c];
    } else {
      for (std::size_t c = 0; c < prof.counts.size(); ++c) by_counts_[prof.counts[c]] = prof.class_value[c];
    }
  }

  // out(x) ∝ sum_{x: x_D = x} f(x) prod_{j != D} m_j(x_j); returns false if all zero.
  bool branch(const std::vector<std::span<const double>>& others, int D, std::vector<double>& out) const {
    out.assign(q_, 0.0);
    if (f_.perm_invariant()) {
      if (q_ == 2) {
        double log_scale = 0.0;
        const auto dist = binary_counts(others, log_scale);
        for (std::size_t k = 0; k < dist.size(); ++k) {
          out[0] += dist[k] * by_ones_[k];
          out[1] += dist[k] * by_ones_[k + 1];
        }
      } else {
        double log_scale = 0.0;
        for (const auto& [c, p] : general_counts(others, log_scale))
          for (std::size_t x = 0; x < q_; ++x) {
            auto cx = c;
            ++cx[x];
            out[x] += p * value_of(cx);
          }
      }
    } else {
      for (std::size_t idx = 0; idx < f_.size(); ++idx) {
        const double v = f_.at(idx);
        if (v == 0.0) continue;
        const Tuple t = f_.tuple_of(idx);
        double p = v;
        for (int j = 0, k = 0; j < r_; ++j) {
          if (j == D) continue;
          p *= others[k++][t[j]];
        }
        out[t[D]] += p;
      }
    }
    return normalize(out);
  }

  // log sum_x f(x) prod_i m_i(x_i).
  double log_contract(const std::vector<std::span<const double>>& members) const {
    if (f_.perm_invariant()) {
      double log_scale = 0.0;
      double s = 0.0;
      if (q_ == 2) {
        const auto dist = binary_counts(members, log_scale);
        for (std::size_t k = 0; k < dist.size(); ++k) s += dist[k] * by_ones_[k];
      } else {
        for (const auto& [c, p] : general_counts(members, log_scale)) s += p * value_of(c);
      }
      return s > 0.0 ? std::log(s) + log_scale : kNegInf;
    }
    double s = 0.0;
    for (std::size_t idx = 0; idx < f_.size(); ++idx) {
      const double v = f_.at(idx);
      if (v == 0.0) continue;
      const Tuple t = f_.tuple_of(idx);
      double p = v;
      for (int j = 0; j < r_; ++j) p *= members[j][t[j]];
      s += p;
    }
    return s > 0.0 ? std::log(s) : kNegInf;
  }

 private:
  double value_of(const std::vector<int>& c) const {
    auto it = by_counts_.find(c);
    return it == by_counts_.end() ? 0.0 : it->second;
  }

  // Law of the number of ones, rescaled after every member to avoid underflow.
  static std::vector<double> binary_counts(const std::vector<std::span<const double>>& ms, double& log_scale) {
    std::vector<double> dist{1.0};
    for (const auto& m : ms) {
      std::vector<double> next(dist.size() + 1, 0.0);
      for (std::size_t k = 0; k < dist.size(); ++k) {
        next[k] += dist[k] * m[0];
        next[k + 1] += dist[k] * m[1];
      }
      double s = 0.0;
      for (double v : next) s += v;
      if (s > 0.0) {
        for (double& v : next) v /= s;
        log_scale += std::log(s);
      }
      dist = std::move(next);
    }
    return dist;
  }

  std::map<std::vector<int>, double> general_counts(const std::vector<std::span<const double>>& ms,
                                                    double& log_scale) const {
    std::map<std::vector<int>, double> dist{{std::vector<int>(q_, 0), 1.0}};
    for (const auto& m : ms) {
      std::map<std::vector<int>, double> next;
      double s = 0.0;
      for (const auto& [c, p] : dist)
        for (std::size_t x = 0; x < q_; ++x) {
          if (m[x] == 0.0) continue;
          auto cx = c;
          ++cx[x];
          next[cx] += p * m[x];
          s += p * m[x];
        }
      if (s > 0.0) {
        for (auto& [c, p] : next) p /= s;
        log_scale += std::log(s);
      }
      dist = std::move(next);
    }
    return dist;
  }

  const FactorTable& f_;
  std::size_t q_;
  int r_;
  std::vector<double> by_ones_;
  std::map<std::vector<int>, double> by_counts_;
};

// Normalized product of the given members, computed in the log domain.
bool product_message(const std::vector<std::span<const double>>& ms, std::size_t q, std::vector<double>& out) {
  std::vector<double> logw(q, 0.0);
  for (const auto& m : ms)
    for (std::size_t x = 0; x < q; ++x) logw[x] += m[x] > 0.0 ? std::log(m[x]) : kNegInf;
  return normalize_log(logw, out);
}

double log_Zv_sample(const std::vector<std::span<const double>>& ms, std::size_t q) {
  std::vector<double> logw(q, 0.0);
  for (const auto& m : ms)
    for (std::size_t x = 0; x < q; ++x) logw[x] += m[x] > 0.0 ? std::log(m[x]) : kNegInf;
  return log_sum_exp(logw);
}

}  // namespace

SweepStats de_step(Population& P, Population& Phat, const FactorTable& f, int l, std::mt19937_64& rng) {
  if (P.q() != f.q() || Phat.q() != f.q()) throw ConfigError("population alphabet does not match the factor");
  const std::size_t q = f.q();
  const int r = f.arity();
  const FactorContractor fc(f);
  std::uniform_int_distribution<std::size_t> pick_p(0, P.size() - 1), pick_h(0, Phat.size() - 1);
  std::uniform_int_distribution<int> pick_branch(0, r - 1);
  SweepStats st;
  double drift = 0.0;
  std::vector<std::span<const double>> draws;
  std::vector<double> fresh;

  for (std::size_t s = 0; s < P.size(); ++s) {
    int tries = 0;
    while (true) {
      draws.clear();
      for (int i = 0; i < l - 1; ++i) draws.push_back(Phat.member(pick_h(rng)));
      if (product_message(draws, q, fresh)) break;
      ++st.resampled;
      if (++tries > kMaxRedraws) throw DegenerateMessageError("population update keeps producing zero messages");
    }
    auto victim = P.member(pick_p(rng));
    drift += max_abs_diff(fresh, victim);
    std::copy(fresh.begin(), fresh.end(), victim.begin());
  }
  for (std::size_t s = 0; s < Phat.size(); ++s) {
    int tries = 0;
    while (true) {
      draws.clear();
      for (int i = 0; i < r - 1; ++i) draws.push_back(P.member(pick_p(rng)));
      if (fc.branch(draws, pick_branch(rng), fresh)) break;
      ++st.resampled;
      if (++tries > kMaxRedraws) throw DegenerateMessageError("population update keeps producing zero messages");
    }
    auto victim = Phat.member(pick_h(rng));
    drift += max_abs_diff(fresh, victim);
    std::copy(fresh.begin(), fresh.end(), victim.begin());
  }
  st.drift = drift / static_cast<double>(P.size() + Phat.size());
  return st;
}

std::pair<double, double> rs_functional(const RegularSpec& spec, const Population& P, const Population& Phat,
                                        std::size_t samples, std::mt19937_64& rng) {
  spec.validate();
  if (samples < 2) throw ConfigError("at least two free-energy samples are needed");
  const std::size_t q = spec.factor.q();
  const FactorContractor fc(spec.factor);
  std::uniform_int_distribution<std::size_t> pick_p(0, P.size() - 1), pick_h(0, Phat.size() - 1);
  std::vector<std::span<const double>> draws;
  const double lr = static_cast<double>(spec.l) / spec.r;
  double mean = 0.0, m2 = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double y = 0.0;
    for (int tries = 0;; ++tries) {
      if (tries > kMaxRedraws) throw DegenerateMessageError("free-energy samples keep vanishing");
      draws.clear();
      for (int i = 0; i < spec.r; ++i) draws.push_back(P.member(pick_p(rng)));
      const double lzf = fc.log_contract(draws);
      draws.clear();
      for (int i = 0; i < spec.l; ++i) draws.push_back(Phat.member(pick_h(rng)));
      const double lzv = log_Zv_sample(draws, q);
      const double lzfv = log_Zfv(P.member(pick_p(rng)), Phat.member(pick_h(rng)));
      y = lr * lzf + lzv - spec.l * lzfv;
      if (std::isfinite(y)) break;
    }
    const double d = y - mean;
    mean += d / static_cast<double>(s + 1);
    m2 += d * (y - mean);
  }
  const double var = m2 / static_cast<double>(samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(samples))};
}

RsEstimate rs_free_energy_from(const RegularSpec& spec, Population P, Population Phat, const PdOptions& opts,
                               const std::string& label) {
  spec.validate();
  opts.validate();
  std::mt19937_64 rng(opts.seed);
  RsEstimate est;
  est.init = label;
  const std::size_t half_samples = std::max<std::size_t>(2, opts.samples / 2);
  const int half = opts.sweeps / 2;
  if (half == 0) std::tie(est.half_value, est.half_stderr) = rs_functional(spec, P, Phat, half_samples, rng);
  for (int t = 1; t <= opts.sweeps; ++t) {
    const SweepStats st = de_step(P, Phat, spec.factor, spec.l, rng);
    est.resampled += st.resampled;
    est.final_drift = st.drift;
    if (t == half) std::tie(est.half_value, est.half_stderr) = rs_functional(spec, P, Phat, half_samples, rng);
  }
  std::tie(est.value, est.stderr_) = rs_functional(spec, P, Phat, opts.samples, rng);
  const double spread = std::hypot(est.stderr_, est.half_stderr);
  est.equilibrated = std::abs(est.value - est.half_value) <= 2.0 * spread + 1e-9;
  return est;
}

RsResult rs_free_energy(const RegularSpec& spec, const PdOptions& opts, const FreeEnergyOptions& fe) {
  spec.validate();
  opts.validate();
  const std::size_t q = spec.factor.q();
  const std::size_t S = opts.population;
  RsResult res;

  {
    PdOptions o = opts;
    o.seed = derive_seed(opts.seed, 0);
    const auto u = uniform_vector(q);
    res.runs.push_back(rs_free_energy_from(spec, Population::delta(S, u), Population::delta(S, u), o, "uniform-delta"));
  }
  try {
    const AnnealedResult ann = annealed_regular(spec, fe);
    if (!ann.messages.vf.empty()) {
      PdOptions o = opts;
      o.seed = derive_seed(opts.seed, 1);
      res.runs.push_back(rs_free_energy_from(spec, Population::delta(S, ann.messages.vf),
                                             Population::delta(S, ann.messages.fv), o, "annealed-delta"));
    }
  } catch (const NumericalFailure&) {
  }
  {
    PdOptions o = opts;
    o.seed = derive_seed(opts.seed, 2);
    std::mt19937_64 rng(derive_seed(opts.seed, 3));
    Population P = Population::random(S, q, rng);
    Population Phat = Population::random(S, q, rng);
    res.runs.push_back(rs_free_energy_from(spec, std::move(P), std::move(Phat), o, "random"));
  }

  const auto best = std::max_element(res.runs.begin(), res.runs.end(),
                                     [](const RsEstimate& a, const RsEstimate& b) { return a.value < b.value; });
  res.value = best->value;
  res.stderr_ = best->stderr_;
  for (const auto& a : res.runs)
    for (const auto& b : res.runs)
      if (std::abs(a.value - b.value) > 3.0 * std::hypot(a.stderr_, b.stderr_) + 1e-9) res.multiple_fixed_points = true;
  return res;
}

RsEqualityReport check_annealed_rs_equality(const RegularSpec& spec, const PdOptions& opts,
                                            const FreeEnergyOptions& fe) {
  spec.validate();
  if (!spec.factor.perm_invariant())
    throw PreconditionError("the annealed/RS comparison requires a permutation-invariant factor");
  const AnnealedResult ann = annealed_regular(spec, fe);
  if (ann.messages.vf.empty()) throw NumericalFailure("annealed maximizer carries no stationary messages");
  RsEqualityReport rep;
  rep.annealed_value = ann.value;
  rep.run = rs_free_energy_from(spec, Population::delta(opts.population, ann.messages.vf),
                                Population::delta(opts.population, ann.messages.fv), opts, "annealed-delta");
  rep.rs_value = rep.run.value;
  rep.rs_stderr = rep.run.stderr_;
  rep.difference = rep.rs_value - rep.annealed_value;
  rep.tolerance = 3.0 * rep.rs_stderr + 1e-9;
  rep.equal = std::abs(rep.difference) <= rep.tolerance;
  return rep;
}

}  // namespace annealed
