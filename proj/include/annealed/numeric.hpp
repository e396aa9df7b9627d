#pragma once

// Small log-domain and simplex helpers shared by every module.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace annealed {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// log(sum(exp(v))); returns -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> v);

/// Normalizes log-weights into a probability vector (max-subtraction).
/// Returns false when every entry is -inf.
bool normalize_log(std::span<const double> logw, std::vector<double>& out);

/// In-place normalization of a nonnegative vector; false when the sum is 0.
bool normalize(std::vector<double>& v);

/// Shannon entropy in nats, with 0 log 0 = 0.
double entropy(std::span<const double> p);

/// c * log(m) with the convention 0 * log(0) = 0.
inline double scaled_log(double c, double log_m) { return c == 0.0 ? 0.0 : c * log_m; }

/// Elementwise log with log(0) = -inf.
std::vector<double> log_vector(std::span<const double> v);

double max_abs_diff(std::span<const double> a, std::span<const double> b);

/// Uniform draw from the probability simplex of dimension q (Dirichlet(1,...,1)).
std::vector<double> random_simplex_point(std::size_t q, std::mt19937_64& rng);

std::vector<double> uniform_vector(std::size_t q);

/// All count vectors of length `parts` summing to `total`, in lexicographic order.
std::vector<std::vector<int>> compositions(int total, int parts);

/// Simplex grid {c / resolution : c a composition of resolution into q parts}.
std::vector<std::vector<double>> simplex_grid(std::size_t q, int resolution);

/// Binomial coefficient as a double (exact for results below 2^53).
double binomial(int n, int k);

/// Runs fn(i) for i in [0, n) on up to `threads` worker threads (0 = hardware
/// concurrency). The first exception thrown by any call is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

/// SplitMix64-derived seed for stream `index` of a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace annealed
