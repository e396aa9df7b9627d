#pragma once

// Free-energy evaluators at stationary points and the drivers that maximize
// over them.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "annealed/bp.hpp"
#include "annealed/ensemble.hpp"
#include "annealed/newton.hpp"

namespace annealed {

struct TypeAssignment {
  std::vector<double> nu;  // on X
  std::vector<double> mu;  // dense on X^r
};

/// Largest deviation of the edge marginal of mu from nu.
double consistency_error(const FactorTable& f, const TypeAssignment& ta);

/// (l/r) H(mu) - (l-1) H(nu) + (l/r) sum mu log f; -inf when mu charges a zero of f.
/// Throws ConfigError if the consistency error exceeds `tol`.
double bethe_type_objective(const RegularSpec& spec, const TypeAssignment& ta, double tol = 1e-10);

/// nu ∝ h m_fv^l and mu ∝ f prod m_vf at a stationary point.
TypeAssignment types_from_messages(const RegularSpec& spec, const MessagePair& mp, std::span<const double> h = {});

/// (l/r) log Z_f + log Z_v - l log Z_fv. Throws NumericalFailure when Z_fv = 0.
double annealed_regular_at(const MessagePair& mp, const RegularSpec& spec);

/// Value of the fixed-type growth rate at stationary messages for nu.
double growth_rate_at(const RegularSpec& spec, std::span<const double> nu, const MessagePair& mp);

/// Analytic first derivatives of the message functionals with respect to
/// the (unnormalized) message entries; both vanish at stationary points.
struct MessageGradient {
  std::vector<double> d_vf;
  std::vector<double> d_fv;
};
MessageGradient regular_objective_gradient(const RegularSpec& spec, const MessagePair& mp);
MessageGradient fixed_type_objective_gradient(const RegularSpec& spec, std::span<const double> nu,
                                              const MessagePair& mp);

struct FreeEnergyOptions {
  SolveOptions bp;
  NewtonOptions newton;
  /// Simplex grid resolution for the nu sweep; 0 picks a default from q,
  /// negative disables the sweep.
  int grid_resolution = 0;
  bool refine = true;
  unsigned threads = 1;
};

/// 200 for q = 2, shrinking with q so the grid stays a few thousand points; 0 beyond q = 8.
int default_grid_resolution(std::size_t q);

struct GrowthPoint {
  std::vector<double> nu;
  double value = 0.0;
  /// Whether the fixed-type message iteration converged.
  bool converged = false;
  int iterations = 0;
  /// "bp" when the value comes from converged messages, "newton" otherwise,
  /// "infeasible" when no factor type has marginal nu.
  std::string solver;
  double bp_value = 0.0;
  double newton_value = 0.0;
  bool newton_converged = false;
  MessagePair messages;
};

/// Growth rate lim (1/N) log E[Z(nu)]: fixed-type iteration, with the Newton
/// dual as fallback and cross-check.
GrowthPoint growth_rate_fixed_type(const RegularSpec& spec, std::span<const double> nu,
                                   const FreeEnergyOptions& opts = {});

/// growth_rate_fixed_type over a list of types, solved concurrently, results in input order.
std::vector<GrowthPoint> growth_rate_sweep(const RegularSpec& spec, const std::vector<std::vector<double>>& nus,
                                           const FreeEnergyOptions& opts = {});

struct AnnealedResult {
  double value = 0.0;
  bool converged = false;
  /// "bp-restart-<k>", "grid" or "grid-refined".
  std::string provenance;
  /// Maximizing variable type.
  std::vector<double> nu;
  MessagePair messages;
  /// The maximizing type has a zero entry.
  bool boundary = false;
  SolveReport bp_report;
  std::size_t grid_points = 0;
};

AnnealedResult annealed_regular(const RegularSpec& spec, const FreeEnergyOptions& opts = {});
AnnealedResult annealed_field(const RegularSpec& spec, const FieldSpec& h, const FreeEnergyOptions& opts = {});

struct ScalarResult {
  double value = 0.0;
  SolveReport report;
};

ScalarResult annealed_random_field(const RegularSpec& spec, const RandomFieldSpec& rf,
                                   const FreeEnergyOptions& opts = {});
ScalarResult annealed_irregular(const IrregularSpec& spec, const FreeEnergyOptions& opts = {});
ScalarResult annealed_poisson(const PoissonSpec& spec, const FreeEnergyOptions& opts = {});

/// annealed_regular on replicate_factor(f, n). Throws BudgetExceeded.
AnnealedResult moment_exponent(const RegularSpec& spec, int n, const FreeEnergyOptions& opts = {});

struct LdpcParams {
  double omega = 0.0;
  double omega_p = 0.0;  // 1 - 2 omega
  double h = 0.0;
  double y = 0.0;  // m_fv(0) - m_fv(1)
  double z = 0.0;  // m_vf(0) - m_vf(1)
  double value = 0.0;
  /// Largest residual of the three stationary equations.
  double residual = 0.0;
};

/// Growth rate of the (l, r)-regular parity-check ensemble at codeword weight omega.
LdpcParams ldpc_growth_rate_closed_form(int l, int r, double omega);

/// sum_x a(x) nu(x) = b.
struct NuConstraint {
  std::vector<double> a;
  double b = 0.0;
};
/// sum_x c(x) mu(x) = d, with c dense on X^r.
struct MuConstraint {
  std::vector<double> c;
  double d = 0.0;
};

struct ConstrainedResult {
  double value = 0.0;
  bool converged = false;
  std::vector<double> nu;
  /// Multipliers of the mu constraints at the optimum.
  std::vector<double> mu_multipliers;
};

/// Maximizes (l/r)(H(mu) + sum mu log f) - (l-1) H(nu) over consistent (nu, mu)
/// subject to the constraints. Throws InfeasibleError if no candidate is feasible.
ConstrainedResult maximize_with_linear_constraints(const RegularSpec& spec, const std::vector<NuConstraint>& nu_cons,
                                                   const std::vector<MuConstraint>& mu_cons,
                                                   const FreeEnergyOptions& opts = {});

/// Inner problem of the above at a fixed nu; -inf if infeasible.
double constrained_value_at(const RegularSpec& spec, std::span<const double> nu,
                            const std::vector<MuConstraint>& mu_cons, const NewtonOptions& opts = {},
                            std::vector<double>* mu_multipliers = nullptr);

}  // namespace annealed
