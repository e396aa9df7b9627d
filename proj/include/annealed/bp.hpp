#pragma once

// Single-edge message updates and fixed-point solvers for the ensemble-averaged
// stationary equations. Messages are probability vectors on the alphabet.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "annealed/ensemble.hpp"

namespace annealed {

struct MessagePair {
  std::vector<double> vf;  // variable -> factor
  std::vector<double> fv;  // factor -> variable
};

struct PoissonState {
  MessagePair messages;
  double e = 0.0;
};

struct IrregularState {
  MessagePair messages;
  std::map<int, double> l_w;
  std::map<int, double> r_w;
};

struct SolveOptions {
  double tol = 1e-10;
  int max_iters = 10'000;
  double damping = 0.0;
  int restarts = 8;
  std::uint64_t seed = 0;
  void validate() const;
};

struct SolveReport {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  double objective = 0.0;
  /// 0 is the uniform (or caller-supplied) start, k >= 1 the k-th random start.
  int restart = -1;
  int converged_restarts = 0;
  int degenerate_restarts = 0;
};

enum class Branching { Full, Single };

// Functionals of the messages. All are computed from the count profile in
// the log domain with 0 log 0 = 0.

/// log B(x), B(x) = sum_i sum_{x: x_i = x} f(x) prod_{j != i} m_vf(x_j).
std::vector<double> log_branch_sums(const FactorTable& f, std::span<const double> m_vf);
/// log Z_f = log sum_x f(x) prod_i m_vf(x_i).
double log_Zf(const FactorTable& f, std::span<const double> m_vf);
/// log sum_x m_fv(x) m_vf(x).
double log_Zfv(std::span<const double> m_vf, std::span<const double> m_fv);
/// log sum_x h(x) m_fv(x)^l; h == 1 when empty.
double log_Zv(std::span<const double> m_fv, int l, std::span<const double> h = {});

/// Normalized f -> v update. Throws DegenerateMessageError on an all-zero result.
std::vector<double> update_f_to_v(const FactorTable& f, std::span<const double> m_vf);
/// Reference implementation enumerating X^r; `Single` uses only the first branch.
std::vector<double> update_f_to_v_dense(const FactorTable& f, std::span<const double> m_vf, Branching branching);
std::vector<double> update_v_to_f_regular(std::span<const double> m_fv, int l);
std::vector<double> update_v_to_f_fixed_type(std::span<const double> nu, std::span<const double> m_fv);
std::vector<double> update_v_to_f_field(const FieldSpec& h, std::span<const double> m_fv, int l);

/// (l/r) log Z_f + log Z_v - l log Z_fv, with the field inside Z_v when given.
double regular_objective(const RegularSpec& spec, const MessagePair& mp, std::span<const double> h = {});
/// (l/r) log Z_f + sum_h P_H(h) log Z_v(h) - l log Z_fv.
double random_field_objective(const RegularSpec& spec, const RandomFieldSpec& rf, const MessagePair& mp);
/// l((1/r) log Z_f + sum_x nu(x) log m_fv(x) - log Z_fv) + H(nu).
double fixed_type_objective(const RegularSpec& spec, std::span<const double> nu, const MessagePair& mp);
/// alpha log Z_f + log sum_x exp(e m_fv(x)) - e sum_x m_vf(x) m_fv(x).
double poisson_objective(const PoissonSpec& spec, const PoissonState& st);
/// (L'/R') sum_j R_j log Z_f(j) + sum_i L_i log Z_v(i) - L' log Z_fv.
double irregular_objective(const IrregularSpec& spec, const MessagePair& mp);

/// L-infinity change of both messages after one undamped regular update.
double regular_residual(const RegularSpec& spec, const MessagePair& mp, std::span<const double> h = {});
double fixed_type_residual(const RegularSpec& spec, std::span<const double> nu, const MessagePair& mp);

std::pair<MessagePair, SolveReport> solve_regular(const RegularSpec& spec, const SolveOptions& opts,
                                                  const std::optional<MessagePair>& init = std::nullopt);
std::pair<MessagePair, SolveReport> solve_field(const RegularSpec& spec, const FieldSpec& h, const SolveOptions& opts,
                                                const std::optional<MessagePair>& init = std::nullopt);
std::pair<MessagePair, SolveReport> solve_random_field(const RegularSpec& spec, const RandomFieldSpec& rf,
                                                       const SolveOptions& opts,
                                                       const std::optional<MessagePair>& init = std::nullopt);

/// Iterates m_fv <- F(m_vf), m_vf <- nu / m_fv. Every restart starts from a
/// random m_fv (the first from `init_fv` when given); the uniform point is
/// deliberately not a default start because it is a fixed point whenever the
/// branch sums are constant, which would hide unstable regions.
std::pair<MessagePair, SolveReport> solve_fixed_type(const RegularSpec& spec, std::span<const double> nu,
                                                     const SolveOptions& opts,
                                                     const std::optional<std::vector<double>>& init_fv = std::nullopt);

std::pair<PoissonState, SolveReport> solve_poisson(const PoissonSpec& spec, const SolveOptions& opts);
std::pair<IrregularState, SolveReport> solve_irregular(const IrregularSpec& spec, const SolveOptions& opts,
                                                       const std::optional<MessagePair>& init = std::nullopt);

}  // namespace annealed
