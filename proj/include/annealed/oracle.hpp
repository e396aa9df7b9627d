#pragma once

// Finite-N ground truth for E[Z] under the socket-matching regular ensemble.

#include <cstdint>
#include <vector>

#include "annealed/ensemble.hpp"

namespace annealed {

inline constexpr std::uint64_t kDefaultEnumerationBudget = 10'000'000;

/// log n! by cumulative summation, exact to rounding.
class LogFactorial {
 public:
  explicit LogFactorial(std::size_t n_max);
  double operator()(std::size_t n) const;

 private:
  std::vector<double> table_;
};

/// log E[N(v, u)] = log [ multinom(N; v) multinom(M; u) prod_x (l v(x))! / (N l)! ],
/// M = lN/r, u dense on X^r. Throws ConfigError on inconsistent (v, u).
double expected_type_count(int N, const RegularSpec& spec, const std::vector<int>& v, const std::vector<int>& u);

/// (1/N) log sum_{(v,u)} E[N(v,u)] prod f^u by enumerating the integer factor
/// types on supp(f). Throws BudgetExceeded beyond `budget` candidate types.
double exact_annealed_finite(int N, const RegularSpec& spec, std::uint64_t budget = kDefaultEnumerationBudget);

/// Same with variable i carrying the field h_i: the multinomial over v is
/// replaced by sum over assignments of type v of prod_i h_i(x_i).
double exact_annealed_finite_with_fields(int N, const RegularSpec& spec, const std::vector<std::vector<double>>& fields,
                                         std::uint64_t budget = kDefaultEnumerationBudget);

/// (1/N) E_h[log E_G[Z(h)]] with i.i.d. fields from the mixture, averaged
/// exactly over the field counts.
double exact_random_field_finite(int N, const RegularSpec& spec, const RandomFieldSpec& rf,
                                 std::uint64_t budget = kDefaultEnumerationBudget);

enum class OracleMode { Exact, Sampled };

struct OracleEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::uint64_t graphs = 0;
};

/// Average of Z(graph) = sum_x prod_a f(x_{∂a}) over socket matchings. Exact
/// mode enumerates every distinct matching; it requires (N l)! <= 1e7.
/// Sampled mode draws `samples` uniform matchings. Both need q^N <= 1e6.
OracleEstimate exhaustive_E_Z(int N, const RegularSpec& spec, OracleMode mode, std::uint64_t samples = 0,
                              std::uint64_t seed = 0);

}  // namespace annealed
