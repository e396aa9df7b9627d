#pragma once

// Concave maximization over factor types with prescribed marginals, solved in
// the convex dual by damped Newton steps.

#include <span>
#include <vector>

#include "annealed/bp.hpp"
#include "annealed/ensemble.hpp"

namespace annealed {

struct NewtonOptions {
  double grad_tol = 1e-12;
  int max_iters = 100;
  double backtrack = 0.5;
  double armijo = 1e-4;
  /// Added to the Hessian diagonal so steps stay defined on degenerate supports.
  double ridge = 1e-12;
  /// A stalled line search is accepted as converged below this gradient norm.
  double stall_tol = 1e-8;
  void validate() const;
};

struct NewtonReport {
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  /// Dual value after every accepted step, starting from the initial point.
  std::vector<double> dual_trace;
};

/// Minimizes D(theta) = log sum_k exp(lw_k + theta . phi_k) - theta . t over
/// theta, where the points phi_k carry log-weights lw_k. At the optimum the
/// tilted law p_k ∝ exp(lw_k + theta . phi_k) has mean t and
/// D = H(p) + sum_k p_k lw_k. Targets outside the convex hull of the points
/// raise InfeasibleError whose certificate w satisfies w . phi_k < w . t for
/// every point (or separates t from the affine hull).
struct MaxEntResult {
  std::vector<double> theta;
  std::vector<double> p;
  double dual_value = 0.0;
  NewtonReport report;
};

MaxEntResult solve_maxent(const std::vector<std::vector<double>>& features, std::span<const double> log_weights,
                          std::span<const double> target, const NewtonOptions& opts = {});

struct DualEval {
  double value = 0.0;
  std::vector<double> gradient;
  std::vector<std::vector<double>> hessian;
};

/// value = log sum_x f(x) exp(sum_i tau(x_i)) - r tau . nu; gradient E[counts] - r nu;
/// Hessian the count covariance under mu_tau. Throws NumericalFailure on empty support.
DualEval dual_objective(std::span<const double> tau, std::span<const double> nu, const FactorTable& f);

struct TypeOptimum {
  /// Gauge fixed so that the last symbol in supp(nu) has tau = 0; -inf off supp(nu).
  std::vector<double> tau;
  /// Probability of each count class of f.profile() under mu_tau.
  std::vector<double> class_prob;
  /// max_mu {H(mu) + sum mu log f} subject to the consistency condition.
  double dual_value = 0.0;
  /// (l/r) dual_value - (l-1) H(nu).
  double value = 0.0;
  /// Stationary messages of the fixed-type iteration built from tau.
  MessagePair messages;
  NewtonReport report;
};

/// Solves for the maximum-entropy mu with marginal nu inside supp(f). The
/// alphabet is restricted to supp(nu) first. Throws InfeasibleError when no
/// such mu exists.
TypeOptimum maximize_mu_given_nu(const RegularSpec& spec, std::span<const double> nu, const NewtonOptions& opts = {});

/// Dense mu_tau(x) ∝ f(x) exp(sum_i tau(x_i)); entries with tau = -inf get 0.
std::vector<double> reconstruct_mu(const FactorTable& f, std::span<const double> tau);

}  // namespace annealed
