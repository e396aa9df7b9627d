#pragma once

// Linear stability of the uniform (paramagnetic) fixed point of the
// fixed-type message iteration.

#include <string>
#include <vector>

#include "annealed/ensemble.hpp"

namespace annealed {

struct StabilityReport {
  std::vector<std::vector<double>> A;
  /// Full spectrum of A (real and imaginary parts), sorted by real part.
  std::vector<double> eigen_real;
  std::vector<double> eigen_imag;
  /// Eigenvalue of the all-ones vector, -(r-1).
  double trivial_eigenvalue = 0.0;
  /// Spectrum with one copy of the trivial eigenvalue removed.
  std::vector<double> nontrivial_real;
  std::vector<double> nontrivial_imag;
  double max_nontrivial_abs = 0.0;
  bool symmetric = false;
  bool stable = false;
  /// max_nontrivial_abs within 1e-9 of 1.
  bool marginal = false;
};

/// A[x][y] = -(sum_i sum_{x: x_i = x} f(x) #{j != i : x_j = y}) / S_x.
/// Throws PreconditionError unless S_x is constant.
std::vector<std::vector<double>> linearized_operator(const FactorTable& f, int r);

StabilityReport paramagnetic_stability(const FactorTable& f, int r);

/// C(r-1, r/2-k)(2k-1) / (2 sum_{i<r/2-k} C(r-1, i) + C(r-1, r/2-k)), evaluated exactly.
double binary_csp_stability_value(int r, int k);
/// The same quantity as a reduced fraction "p/q".
std::string binary_csp_stability_fraction(int r, int k);

}  // namespace annealed
