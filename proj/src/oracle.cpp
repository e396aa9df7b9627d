#include "annealed/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "annealed/errors.hpp"
#include "annealed/numeric.hpp"

namespace annealed {

LogFactorial::LogFactorial(std::size_t n_max) : table_(n_max + 1, 0.0) {
  for (std::size_t n = 2; n <= n_max; ++n) table_[n] = table_[n - 1] + std::log(static_cast<double>(n));
}

double LogFactorial::operator()(std::size_t n) const {
  if (n >= table_.size()) throw ConfigError("log-factorial table is too small");
  return table_[n];
}

namespace {

int factor_count(int N, const RegularSpec& spec) {
  spec.validate();
  if (N < 1) throw ConfigError("N must be positive");
  if ((static_cast<long long>(spec.l) * N) % spec.r != 0) throw ConfigError("l*N must be divisible by r");
  return spec.l * N / spec.r;
}

// log of sum over assignments of type v of prod_i h_i(x_i), for every v.
std::map<std::vector<int>, double> log_field_weights(const std::vector<std::vector<double>>& fields, std::size_t q) {
  std::map<std::vector<int>, double> cur{{std::vector<int>(q, 0), 0.0}};
  for (const auto& h : fields) {
    if (h.size() != q) throw ConfigError("field has the wrong length");
    std::map<std::vector<int>, double> next;
    for (const auto& [v, lw] : cur)
      for (std::size_t x = 0; x < q; ++x) {
        if (h[x] == 0.0) continue;
        auto v2 = v;
        ++v2[x];
        const double t = lw + std::log(h[x]);
        auto it = next.find(v2);
        if (it == next.end()) next.emplace(std::move(v2), t);
        else {
          const double pair[2] = {it->second, t};
          it->second = log_sum_exp(pair);
        }
      }
    cur = std::move(next);
  }
  return cur;
}

// Enumerates integer factor types u on supp(f) summing to M and calls
// fn(v, log[multinom(M;u) prod f^u prod (l v_x)! / (N l)!]) for the consistent ones.
void enumerate_types(int N, const RegularSpec& spec, std::uint64_t budget,
                     const std::function<void(const std::vector<int>&, double)>& fn) {
  const int M = factor_count(N, spec);
  const FactorTable& f = spec.factor;
  const std::size_t q = f.q();
  std::vector<std::vector<int>> counts;
  std::vector<double> logf;
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    if (f.at(idx) == 0.0) continue;
    std::vector<int> c(q, 0);
    for (int x : f.tuple_of(idx)) ++c[x];
    counts.push_back(std::move(c));
    logf.push_back(std::log(f.at(idx)));
  }
  const int K = static_cast<int>(counts.size());
  // Number of compositions of M into K parts.
  double candidates = 1.0;
  for (int i = 1; i < K; ++i) {
    candidates = candidates * (M + i) / i;
    if (candidates > static_cast<double>(budget))
      throw BudgetExceeded("more than " + std::to_string(budget) + " factor types to enumerate");
  }

  const LogFactorial lf(static_cast<std::size_t>(N) * spec.l + 1);
  const double base = lf(M) - lf(static_cast<std::size_t>(N) * spec.l);
  std::vector<int> sym(q, 0);
  std::vector<int> v(q, 0);
  std::function<void(int, int, double)> rec = [&](int k, int left, double acc) {
    if (k == K - 1) {
      const int u = left;
      for (std::size_t x = 0; x < q; ++x) sym[x] += u * counts[k][x];
      bool ok = true;
      double t = acc - lf(u) + u * logf[k];
      for (std::size_t x = 0; x < q && ok; ++x) {
        if (sym[x] % spec.l != 0) ok = false;
        else {
          v[x] = sym[x] / spec.l;
          t += lf(sym[x]);
        }
      }
      if (ok) fn(v, base + t);
      for (std::size_t x = 0; x < q; ++x) sym[x] -= u * counts[k][x];
      return;
    }
    for (int u = 0; u <= left; ++u) {
      for (std::size_t x = 0; x < q; ++x) sym[x] += u * counts[k][x];
      rec(k + 1, left - u, acc - lf(u) + u * logf[k]);
      for (std::size_t x = 0; x < q; ++x) sym[x] -= u * counts[k][x];
    }
  };
  rec(0, M, 0.0);
}

}  // namespace

double expected_type_count(int N, const RegularSpec& spec, const std::vector<int>& v, const std::vector<int>& u) {
  const int M = factor_count(N, spec);
  const FactorTable& f = spec.factor;
  const std::size_t q = f.q();
  if (v.size() != q || u.size() != f.size()) throw ConfigError("type pair has the wrong shape");
  long long vs = 0, us = 0;
  for (int x : v) {
    if (x < 0) throw ConfigError("variable type counts must be nonnegative");
    vs += x;
  }
  for (int x : u) {
    if (x < 0) throw ConfigError("factor type counts must be nonnegative");
    us += x;
  }
  if (vs != N) throw ConfigError("variable type must sum to N");
  if (us != M) throw ConfigError("factor type must sum to lN/r");
  std::vector<long long> sym(q, 0);
  for (std::size_t idx = 0; idx < u.size(); ++idx) {
    if (u[idx] == 0) continue;
    for (int x : f.tuple_of(idx)) sym[x] += u[idx];
  }
  for (std::size_t x = 0; x < q; ++x)
    if (sym[x] != static_cast<long long>(spec.l) * v[x])
      throw ConfigError("factor type is inconsistent with the variable type");

  const LogFactorial lf(static_cast<std::size_t>(N) * spec.l + 1);
  double t = lf(N) + lf(M) - lf(static_cast<std::size_t>(N) * spec.l);
  for (std::size_t x = 0; x < q; ++x) t += -lf(v[x]) + lf(static_cast<std::size_t>(spec.l) * v[x]);
  for (int x : u) t -= lf(x);
  return t;
}

double exact_annealed_finite(int N, const RegularSpec& spec, std::uint64_t budget) {
  const LogFactorial lf(static_cast<std::size_t>(N) + 1);
  std::vector<double> terms;
  enumerate_types(N, spec, budget, [&](const std::vector<int>& v, double t) {
    double lv = lf(N);
    for (int x : v) lv -= lf(x);
    terms.push_back(lv + t);
  });
  return log_sum_exp(terms) / N;
}

double exact_annealed_finite_with_fields(int N, const RegularSpec& spec, const std::vector<std::vector<double>>& fields,
                                         std::uint64_t budget) {
  if (static_cast<int>(fields.size()) != N) throw ConfigError("one field per variable is required");
  const auto weights = log_field_weights(fields, spec.factor.q());
  std::vector<double> terms;
  enumerate_types(N, spec, budget, [&](const std::vector<int>& v, double t) {
    auto it = weights.find(v);
    if (it != weights.end()) terms.push_back(it->second + t);
  });
  return log_sum_exp(terms) / N;
}

double exact_random_field_finite(int N, const RegularSpec& spec, const RandomFieldSpec& rf, std::uint64_t budget) {
  rf.validate(spec.factor.q());
  const std::size_t H = rf.fields.size();
  const LogFactorial lf(static_cast<std::size_t>(N) + 1);
  double total = 0.0;
  for (const auto& n : compositions(N, static_cast<int>(H))) {
    double logp = lf(N);
    bool possible = true;
    for (std::size_t k = 0; k < H; ++k) {
      if (n[k] == 0) continue;
      if (rf.probs[k] == 0.0) {
        possible = false;
        break;
      }
      logp += n[k] * std::log(rf.probs[k]) - lf(n[k]);
    }
    if (!possible) continue;
    std::vector<std::vector<double>> fields;
    for (std::size_t k = 0; k < H; ++k)
      for (int i = 0; i < n[k]; ++i) fields.push_back(rf.fields[k].h);
    total += std::exp(logp) * exact_annealed_finite_with_fields(N, spec, fields, budget);
  }
  return total;
}

OracleEstimate exhaustive_E_Z(int N, const RegularSpec& spec, OracleMode mode, std::uint64_t samples,
                              std::uint64_t seed) {
  const int M = factor_count(N, spec);
  const FactorTable& f = spec.factor;
  const std::size_t q = f.q();
  const int r = spec.r;
  const int sockets = N * spec.l;
  double states = 1.0;
  for (int i = 0; i < N; ++i) states *= static_cast<double>(q);
  if (states > 1e6) throw BudgetExceeded("q^N exceeds 1e6 assignments per graph");
  const std::size_t n_states = static_cast<std::size_t>(states);
  if (mode == OracleMode::Exact) {
    double perms = 1.0;
    for (int i = 2; i <= sockets; ++i) perms *= i;
    if (perms > 1e7) throw BudgetExceeded("(N l)! exceeds 1e7 socket permutations");
  } else if (samples < 2) {
    throw ConfigError("sampled mode needs at least two graphs");
  }

  std::vector<int> arrangement;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < spec.l; ++j) arrangement.push_back(i);

  std::vector<int> x(N);
  std::vector<std::size_t> stride(r);
  for (int j = 0; j < r; ++j) {
    stride[j] = 1;
    for (int k = j + 1; k < r; ++k) stride[j] *= q;
  }
  auto partition_function = [&](const std::vector<int>& arr) {
    double z = 0.0;
    for (std::size_t s = 0; s < n_states; ++s) {
      std::size_t rest = s;
      for (int i = N - 1; i >= 0; --i) {
        x[i] = static_cast<int>(rest % q);
        rest /= q;
      }
      double p = 1.0;
      for (int a = 0; a < M && p != 0.0; ++a) {
        std::size_t idx = 0;
        for (int j = 0; j < r; ++j) idx += static_cast<std::size_t>(x[arr[a * r + j]]) * stride[j];
        p *= f.at(idx);
      }
      z += p;
    }
    return z;
  };

  OracleEstimate est;
  long double sum = 0.0L, sum_sq = 0.0L;
  if (mode == OracleMode::Exact) {
    // Distinct arrangements of the multiset each stand for (l!)^N equally likely matchings.
    do {
      const double z = partition_function(arrangement);
      sum += z;
      sum_sq += static_cast<long double>(z) * z;
      ++est.graphs;
    } while (std::next_permutation(arrangement.begin(), arrangement.end()));
    est.mean = static_cast<double>(sum / est.graphs);
    est.stderr_ = 0.0;
  } else {
    std::mt19937_64 rng(seed);
    for (std::uint64_t s = 0; s < samples; ++s) {
      std::shuffle(arrangement.begin(), arrangement.end(), rng);
      const double z = partition_function(arrangement);
      sum += z;
      sum_sq += static_cast<long double>(z) * z;
      ++est.graphs;
    }
    const long double mean = sum / est.graphs;
    const long double var = (sum_sq - est.graphs * mean * mean) / (est.graphs - 1);
    est.mean = static_cast<double>(mean);
    est.stderr_ = static_cast<double>(std::sqrt(std::max(0.0L, var) / est.graphs));
  }
  return est;
}

}  // namespace annealed
