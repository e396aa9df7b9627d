#include "annealed/stability.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <numeric>

#include "annealed/errors.hpp"

namespace annealed {

namespace mp = boost::multiprecision;

std::vector<std::vector<double>> linearized_operator(const FactorTable& f, int r) {
  if (f.arity() != r) throw ConfigError("factor arity does not match r");
  if (!f.uniform_branch_sums())
    throw PreconditionError("branch sums S_x are not constant; the paramagnetic point does not exist");
  const std::size_t q = f.q();
  const auto& prof = f.profile();
  std::vector<std::vector<double>> A(q, std::vector<double>(q, 0.0));
  for (std::size_t c = 0; c < prof.counts.size(); ++c) {
    const auto& cnt = prof.counts[c];
    for (std::size_t x = 0; x < q; ++x) {
      if (cnt[x] == 0) continue;
      for (std::size_t y = 0; y < q; ++y) A[x][y] -= prof.weight[c] * cnt[x] * (cnt[y] - (x == y ? 1 : 0));
    }
  }
  for (std::size_t x = 0; x < q; ++x)
    for (std::size_t y = 0; y < q; ++y) A[x][y] /= f.branch_sums()[x];
  return A;
}

StabilityReport paramagnetic_stability(const FactorTable& f, int r) {
  StabilityReport rep;
  rep.A = linearized_operator(f, r);
  rep.trivial_eigenvalue = -(r - 1.0);
  const Eigen::Index q = static_cast<Eigen::Index>(f.q());
  Eigen::MatrixXd A(q, q);
  for (Eigen::Index x = 0; x < q; ++x)
    for (Eigen::Index y = 0; y < q; ++y) A(x, y) = rep.A[x][y];
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  rep.symmetric = (A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;

  std::vector<std::pair<double, double>> all;
  std::vector<std::pair<double, double>> nontrivial;
  if (rep.symmetric) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    for (Eigen::Index i = 0; i < q; ++i) all.emplace_back(es.eigenvalues()(i), 0.0);
    // A leaves the complement of the all-ones vector invariant; diagonalize it there.
    Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(q, q);
    basis.col(0).setOnes();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
    const Eigen::MatrixXd Q = (qr.householderQ() * Eigen::MatrixXd::Identity(q, q)).rightCols(q - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> rest(Q.transpose() * A * Q);
    for (Eigen::Index i = 0; i < q - 1; ++i) nontrivial.emplace_back(rest.eigenvalues()(i), 0.0);
  } else {
    Eigen::EigenSolver<Eigen::MatrixXd> es(A);
    for (Eigen::Index i = 0; i < q; ++i) all.emplace_back(es.eigenvalues()(i).real(), es.eigenvalues()(i).imag());
    nontrivial = all;
    auto it = std::min_element(nontrivial.begin(), nontrivial.end(), [&](const auto& a, const auto& b) {
      return std::hypot(a.first - rep.trivial_eigenvalue, a.second) <
             std::hypot(b.first - rep.trivial_eigenvalue, b.second);
    });
    nontrivial.erase(it);
  }
  std::sort(all.begin(), all.end());
  std::sort(nontrivial.begin(), nontrivial.end());
  for (const auto& [re, im] : all) {
    rep.eigen_real.push_back(re);
    rep.eigen_imag.push_back(im);
  }
  for (const auto& [re, im] : nontrivial) {
    rep.nontrivial_real.push_back(re);
    rep.nontrivial_imag.push_back(im);
    rep.max_nontrivial_abs = std::max(rep.max_nontrivial_abs, std::hypot(re, im));
  }
  rep.marginal = std::abs(rep.max_nontrivial_abs - 1.0) <= 1e-9;
  rep.stable = !rep.marginal && rep.max_nontrivial_abs < 1.0;
  return rep;
}

namespace {

mp::cpp_rational exact_stability(int r, int k) {
  if (r < 2 || r % 2 != 0) throw ConfigError("binary CSP stability needs an even arity");
  if (k < 1 || k > r / 2) throw ConfigError("binary CSP parameter k must satisfy 1 <= k <= r/2");
  auto binom = [](int n, int m) {
    mp::cpp_int b = 1;
    for (int i = 1; i <= m; ++i) b = b * (n - m + i) / i;
    return b;
  };
  const int h = r / 2 - k;
  mp::cpp_int tail = 0;
  for (int i = 0; i < h; ++i) tail += binom(r - 1, i);
  const mp::cpp_int edge = binom(r - 1, h);
  return mp::cpp_rational(edge * (2 * k - 1), 2 * tail + edge);
}

}  // namespace

double binary_csp_stability_value(int r, int k) { return exact_stability(r, k).convert_to<double>(); }

std::string binary_csp_stability_fraction(int r, int k) {
  const auto v = exact_stability(r, k);
  return mp::numerator(v).str() + "/" + mp::denominator(v).str();
}

}  // namespace annealed
