#include "annealed/newton.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "annealed/errors.hpp"
#include "annealed/numeric.hpp"

namespace annealed {

void NewtonOptions::validate() const {
  if (!(grad_tol > 0.0) || !(stall_tol > 0.0)) throw ConfigError("Newton tolerances must be positive");
  if (max_iters < 1) throw ConfigError("Newton iteration cap must be positive");
  if (!(backtrack > 0.0 && backtrack < 1.0)) throw ConfigError("backtracking factor must lie in (0, 1)");
  if (!(armijo > 0.0 && armijo < 0.5)) throw ConfigError("Armijo constant must lie in (0, 1/2)");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be nonnegative");
}

namespace {

struct Tilted {
  double value;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  Eigen::VectorXd p;
};

// D(theta) with gradient and Hessian for the reduced problem.
Tilted evaluate(const Eigen::MatrixXd& psi, const Eigen::VectorXd& lw, const Eigen::VectorXd& s,
                const Eigen::VectorXd& theta, bool derivatives) {
  Tilted t;
  const Eigen::VectorXd a = lw + psi * theta;
  const double mx = a.maxCoeff();
  t.p = (a.array() - mx).exp().matrix();
  const double z = t.p.sum();
  t.p /= z;
  t.value = mx + std::log(z) - theta.dot(s);
  if (derivatives) {
    const Eigen::VectorXd mean = psi.transpose() * t.p;
    t.grad = mean - s;
    const Eigen::MatrixXd centered = psi.rowwise() - mean.transpose();
    t.hess = centered.transpose() * t.p.asDiagonal() * centered;
  }
  return t;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

MaxEntResult solve_maxent(const std::vector<std::vector<double>>& features, std::span<const double> log_weights,
                          std::span<const double> target, const NewtonOptions& opts) {
  opts.validate();
  if (features.size() != log_weights.size()) throw ConfigError("one log-weight per feature point is required");
  const std::size_t d = target.size();
  std::vector<std::size_t> live;
  for (std::size_t k = 0; k < features.size(); ++k) {
    if (features[k].size() != d) throw ConfigError("feature dimension does not match the target");
    if (log_weights[k] != kNegInf) live.push_back(k);
  }
  if (live.empty()) throw NumericalFailure("max-entropy problem has empty support");

  const Eigen::Index K = static_cast<Eigen::Index>(live.size());
  const Eigen::Index D = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd phi(K, D);
  Eigen::VectorXd lw(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index j = 0; j < D; ++j) phi(k, j) = features[live[k]][j];
    lw(k) = log_weights[live[k]];
  }
  Eigen::VectorXd t(D);
  for (Eigen::Index j = 0; j < D; ++j) t(j) = target[j];

  // Reduce to the affine hull of the points.
  const Eigen::VectorXd center = phi.colwise().mean().transpose();
  const Eigen::MatrixXd centered = phi.rowwise() - center.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(centered.transpose() * centered);
  const Eigen::VectorXd evals = es.eigenvalues();
  const double emax = std::max(1.0, evals.size() ? evals.maxCoeff() : 0.0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < evals.size(); ++i)
    if (evals(i) > 1e-10 * emax) keep.push_back(i);
  Eigen::MatrixXd U(D, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) U.col(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(keep[i]);

  const Eigen::VectorXd offset = t - center;
  const Eigen::VectorXd outside = offset - U * (U.transpose() * offset);
  const double scale = std::max({1.0, t.cwiseAbs().maxCoeff(), phi.cwiseAbs().maxCoeff()});
  if (outside.norm() > 1e-9 * scale)
    throw InfeasibleError("target lies outside the affine hull of the support", to_std(outside / outside.norm()));

  const Eigen::MatrixXd psi = centered * U;
  const Eigen::VectorXd s = U.transpose() * offset;
  const double lw_min = lw.minCoeff();

  MaxEntResult res;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(U.cols());
  Tilted cur = evaluate(psi, lw, s, theta, true);
  res.report.dual_trace.push_back(cur.value);
  const Eigen::Index m = U.cols();
  for (int it = 0; m > 0 && it < opts.max_iters; ++it) {
    res.report.grad_norm = cur.grad.cwiseAbs().maxCoeff();
    if (res.report.grad_norm <= opts.grad_tol) {
      res.report.converged = true;
      break;
    }
    const Eigen::MatrixXd h = cur.hess + opts.ridge * Eigen::MatrixXd::Identity(m, m);
    const Eigen::VectorXd step = -h.ldlt().solve(cur.grad);
    const double slope = cur.grad.dot(step);
    if (!std::isfinite(slope) || slope >= 0.0) break;
    double alpha = 1.0;
    // Below the rounding noise of D the Armijo test is meaningless; take the full step.
    bool accepted = -slope < 1e-14 * (1.0 + std::abs(cur.value));
    while (!accepted && alpha > 1e-16) {
      const Tilted trial = evaluate(psi, lw, s, theta + alpha * step, false);
      if (std::isfinite(trial.value) && trial.value <= cur.value + opts.armijo * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= opts.backtrack;
    }
    if (!accepted) break;
    theta += alpha * step;
    cur = evaluate(psi, lw, s, theta, true);
    res.report.dual_trace.push_back(cur.value);
    res.report.iterations = it + 1;
    // For a feasible target D >= H(p*) + E_{p*}[lw] >= min lw.
    if (cur.value < lw_min - 1e-9 * (1.0 + std::abs(lw_min))) {
      Eigen::VectorXd w = U * theta;
      throw InfeasibleError("target lies outside the convex hull of the support", to_std(-w / w.norm()));
    }
  }
  res.report.grad_norm = m > 0 ? cur.grad.cwiseAbs().maxCoeff() : 0.0;
  if (m == 0 || res.report.grad_norm <= opts.grad_tol) res.report.converged = true;
  if (!res.report.converged && res.report.grad_norm <= opts.stall_tol) res.report.converged = true;

  res.theta = to_std(U * theta);
  res.p.assign(features.size(), 0.0);
  for (Eigen::Index k = 0; k < K; ++k) res.p[live[k]] = cur.p(k);
  res.dual_value = cur.value;
  return res;
}

DualEval dual_objective(std::span<const double> tau, std::span<const double> nu, const FactorTable& f) {
  const std::size_t q = f.q();
  if (tau.size() != q || nu.size() != q) throw ConfigError("dual potential and type must match the alphabet");
  const auto& prof = f.profile();
  const std::size_t n = prof.counts.size();
  std::vector<double> a(n);
  for (std::size_t c = 0; c < n; ++c) {
    double v = prof.log_weight[c];
    for (std::size_t x = 0; x < q; ++x) v += scaled_log(prof.counts[c][x], tau[x]);
    a[c] = v;
  }
  std::vector<double> p;
  if (!normalize_log(a, p)) throw NumericalFailure("dual objective has empty support");
  const double r = f.arity();
  DualEval ev;
  ev.value = log_sum_exp(a);
  for (std::size_t x = 0; x < q; ++x) ev.value -= r * scaled_log(nu[x], tau[x]);
  std::vector<double> mean(q, 0.0);
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t x = 0; x < q; ++x) mean[x] += p[c] * prof.counts[c][x];
  ev.gradient.resize(q);
  for (std::size_t x = 0; x < q; ++x) ev.gradient[x] = mean[x] - r * nu[x];
  ev.hessian.assign(q, std::vector<double>(q, 0.0));
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t x = 0; x < q; ++x)
      for (std::size_t y = 0; y < q; ++y)
        ev.hessian[x][y] += p[c] * (prof.counts[c][x] - mean[x]) * (prof.counts[c][y] - mean[y]);
  return ev;
}

TypeOptimum maximize_mu_given_nu(const RegularSpec& spec, std::span<const double> nu, const NewtonOptions& opts) {
  spec.validate();
  const FactorTable& f = spec.factor;
  const std::size_t q = f.q();
  if (nu.size() != q) throw ConfigError("type has the wrong length");
  double total = 0.0;
  for (double v : nu) {
    if (!(v >= 0.0)) throw ConfigError("type entries must be nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("type must sum to 1");

  std::vector<std::size_t> support;
  for (std::size_t x = 0; x < q; ++x)
    if (nu[x] > 0.0) support.push_back(x);

  const auto& prof = f.profile();
  std::vector<std::vector<double>> features;
  std::vector<double> lw;
  std::vector<std::size_t> cls;
  for (std::size_t c = 0; c < prof.counts.size(); ++c) {
    int inside = 0;
    for (std::size_t x : support) inside += prof.counts[c][x];
    if (inside != f.arity()) continue;
    std::vector<double> feat;
    for (std::size_t x : support) feat.push_back(prof.counts[c][x]);
    features.push_back(std::move(feat));
    lw.push_back(prof.log_weight[c]);
    cls.push_back(c);
  }
  if (features.empty()) {
    std::vector<double> cert(q, 0.0);
    for (std::size_t x = 0; x < q; ++x)
      if (nu[x] == 0.0) cert[x] = 1.0;
    throw InfeasibleError("no tuple in the support of f uses only symbols of positive type weight", cert);
  }
  std::vector<double> target;
  for (std::size_t x : support) target.push_back(f.arity() * nu[x]);

  MaxEntResult me;
  try {
    me = solve_maxent(features, lw, target, opts);
  } catch (InfeasibleError& e) {
    std::vector<double> cert(q, 0.0);
    for (std::size_t i = 0; i < support.size(); ++i) cert[support[i]] = e.certificate()[i];
    throw InfeasibleError(e.what(), cert);
  }

  TypeOptimum out;
  out.tau.assign(q, kNegInf);
  const double gauge = me.theta.back();
  for (std::size_t i = 0; i < support.size(); ++i) out.tau[support[i]] = me.theta[i] - gauge;
  out.class_prob.assign(prof.counts.size(), 0.0);
  for (std::size_t i = 0; i < cls.size(); ++i) out.class_prob[cls[i]] = me.p[i];
  out.dual_value = me.dual_value;
  out.value = static_cast<double>(spec.l) / spec.r * me.dual_value - (spec.l - 1) * entropy(nu);
  out.report = std::move(me.report);

  if (!normalize_log(out.tau, out.messages.vf)) throw NumericalFailure("dual potential is degenerate");
  out.messages.fv = update_f_to_v(f, out.messages.vf);
  return out;
}

std::vector<double> reconstruct_mu(const FactorTable& f, std::span<const double> tau) {
  if (tau.size() != f.q()) throw ConfigError("dual potential must match the alphabet");
  std::vector<double> logw(f.size(), kNegInf);
  for (std::size_t idx = 0; idx < f.size(); ++idx) {
    const double v = f.at(idx);
    if (v == 0.0) continue;
    double a = std::log(v);
    for (int x : f.tuple_of(idx)) a += tau[x];
    logw[idx] = a;
  }
  std::vector<double> mu;
  if (!normalize_log(logw, mu)) throw NumericalFailure("reconstructed factor type is empty");
  return mu;
}

}  // namespace annealed
