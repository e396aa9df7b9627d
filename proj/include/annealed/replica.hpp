#pragma once

// Replica-symmetric free energy by population dynamics on message laws.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "annealed/bp.hpp"
#include "annealed/ensemble.hpp"
#include "annealed/free_energy.hpp"

namespace annealed {

/// S probability vectors on an alphabet of size q, stored row-major.
class Population {
 public:
  Population(std::size_t size, std::size_t q);
  static Population delta(std::size_t size, std::span<const double> message);
  static Population random(std::size_t size, std::size_t q, std::mt19937_64& rng);

  std::size_t size() const noexcept { return size_; }
  std::size_t q() const noexcept { return q_; }
  std::span<double> member(std::size_t i) { return {data_.data() + i * q_, q_}; }
  std::span<const double> member(std::size_t i) const { return {data_.data() + i * q_, q_}; }

 private:
  std::size_t size_;
  std::size_t q_;
  std::vector<double> data_;
};

struct PdOptions {
  std::size_t population = 10'000;
  int sweeps = 1'000;
  std::size_t samples = 100'000;
  std::uint64_t seed = 0;
  void validate() const;
};

struct SweepStats {
  /// Mean L-infinity change of the replaced members, over both populations.
  double drift = 0.0;
  /// Draws that produced an all-zero message and were redrawn.
  std::size_t resampled = 0;
};

/// One sweep: S replacements in each population with uniformly chosen victims.
/// P members are normalized products of l-1 Phat members; Phat members are the
/// normalized branch-D marginal of f against r-1 P members, D uniform.
SweepStats de_step(Population& P, Population& Phat, const FactorTable& f, int l, std::mt19937_64& rng);

struct RsEstimate {
  std::string init;
  double value = 0.0;
  double stderr_ = 0.0;
  /// Estimate taken halfway through the sweeps, for the equilibration test.
  double half_value = 0.0;
  double half_stderr = 0.0;
  bool equilibrated = true;
  double final_drift = 0.0;
  std::size_t resampled = 0;
};

/// Monte-Carlo estimate of (l/r)<log Z_f> + <log Z_v> - l <log Z_fv> from the
/// given populations: mean and standard error over `samples` independent draws.
std::pair<double, double> rs_functional(const RegularSpec& spec, const Population& P, const Population& Phat,
                                        std::size_t samples, std::mt19937_64& rng);

/// Runs the sweeps from the given populations and estimates the functional.
RsEstimate rs_free_energy_from(const RegularSpec& spec, Population P, Population Phat, const PdOptions& opts,
                               const std::string& label);

struct RsResult {
  double value = 0.0;
  double stderr_ = 0.0;
  /// Estimates from the uniform-delta, annealed-delta and random starts.
  std::vector<RsEstimate> runs;
  /// Runs whose estimates differ beyond 3 standard errors.
  bool multiple_fixed_points = false;
};

/// Maximum of the estimates from the uniform-delta, annealed-delta and random starts.
RsResult rs_free_energy(const RegularSpec& spec, const PdOptions& opts, const FreeEnergyOptions& fe = {});

struct RsEqualityReport {
  double rs_value = 0.0;
  double rs_stderr = 0.0;
  double annealed_value = 0.0;
  double difference = 0.0;
  /// 3 standard errors plus a 1e-9 floor (delta populations have zero spread).
  double tolerance = 0.0;
  bool equal = false;
  RsEstimate run;
};

/// Compares the delta-initialized RS estimate with the annealed value.
/// Throws PreconditionError for factors that are not permutation invariant.
RsEqualityReport check_annealed_rs_equality(const RegularSpec& spec, const PdOptions& opts,
                                            const FreeEnergyOptions& fe = {});

}  // namespace annealed
