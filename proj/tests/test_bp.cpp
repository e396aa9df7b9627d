#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "annealed/bp.hpp"
#include "annealed/errors.hpp"
#include "annealed/free_energy.hpp"
#include "annealed/numeric.hpp"

using namespace annealed;

namespace {

void check_normalized(const std::vector<double>& m) {
  double s = 0.0;
  for (double v : m) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(std::abs(s - 1.0) <= 1e-12);
}

void check_uniform(const std::vector<double>& m, double tol) {
  for (double v : m) CHECK(std::abs(v - 1.0 / m.size()) <= tol);
}

double entropy2(double p) {
  double h = 0.0;
  if (p > 0) h -= p * std::log(p);
  if (p < 1) h -= (1 - p) * std::log(1 - p);
  return h;
}

// Maximizes a function of one variable on [0, 1] by a dense scan and a golden-section polish.
template <class F>
double max_on_unit_interval(F g) {
  const int n = 20000;
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (g(double(i) / n) > g(double(best) / n)) best = i;
  double a = std::max(0.0, (best - 1.0) / n), b = std::min(1.0, (best + 1.0) / n);
  const double phi = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 200; ++it) {
    const double c = b - phi * (b - a), d = a + phi * (b - a);
    if (g(c) > g(d)) b = d;
    else a = c;
  }
  return std::max({g(0.5 * (a + b)), g(0.0), g(1.0)});
}

}  // namespace

TEST_CASE("factor-to-variable update") {
  const std::vector<double> u2 = uniform_vector(2);
  check_uniform(update_f_to_v(ones_factor(4), u2), 1e-15);
  check_uniform(update_f_to_v(binary_csp_factor(20, 1), u2), 1e-15);
  auto m = update_f_to_v(not_equal_factor(), std::vector<double>{0.8, 0.2});
  CHECK(m[0] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(m[1] == doctest::Approx(0.8).epsilon(1e-14));
  auto only00 = build_factor_table(2, Alphabet(2), {{{0, 0}, 1.0}});
  CHECK_THROWS_AS(update_f_to_v(only00, std::vector<double>{0.0, 1.0}), DegenerateMessageError);
}

TEST_CASE("variable-to-factor updates") {
  SUBCASE("regular") {
    const std::vector<double> fv{0.37, 0.63};
    auto id = update_v_to_f_regular(fv, 2);
    CHECK(id[0] == doctest::Approx(0.37).epsilon(1e-14));
    auto m = update_v_to_f_regular(std::vector<double>{0.9, 0.1}, 3);
    CHECK(m[0] == doctest::Approx(0.81 / 0.82).epsilon(1e-14));
    CHECK(m[1] == doctest::Approx(0.01 / 0.82).epsilon(1e-14));
    check_uniform(update_v_to_f_regular(uniform_vector(3), 7), 1e-15);
    CHECK_THROWS_AS(update_v_to_f_regular(std::vector<double>{0.0, 0.0}, 3), DegenerateMessageError);
  }
  SUBCASE("fixed type") {
    check_uniform(update_v_to_f_fixed_type(uniform_vector(2), uniform_vector(2)), 1e-15);
    auto a = update_v_to_f_fixed_type(std::vector<double>{0.3, 0.7}, uniform_vector(2));
    CHECK(a[0] == doctest::Approx(0.3).epsilon(1e-14));
    auto b = update_v_to_f_fixed_type(std::vector<double>{0.5, 0.5}, std::vector<double>{0.25, 0.75});
    CHECK(b[0] == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(b[1] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK_THROWS_AS(update_v_to_f_fixed_type(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}),
                    DegenerateMessageError);
  }
  SUBCASE("field") {
    const std::vector<double> fv{0.2, 0.8};
    auto a = update_v_to_f_field(FieldSpec{{1.0, 1.0}}, fv, 4);
    auto b = update_v_to_f_regular(fv, 4);
    CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-14));
    auto c = update_v_to_f_field(FieldSpec{{1.0, 0.0}}, fv, 4);
    CHECK(c[0] == 1.0);
    CHECK(c[1] == 0.0);
    auto d = update_v_to_f_field(FieldSpec{{2.0, 1.0}}, uniform_vector(2), 2);
    CHECK(d[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  }
}

TEST_CASE("single-branch and full-branch updates agree on symmetric factors") {
  std::mt19937_64 rng(7);
  for (int r = 1; r <= 6; ++r) {
    std::vector<FactorTable> fs{ones_factor(r), parity_check_factor(r), equality_factor(r, 3)};
    if (r % 2 == 0) fs.push_back(binary_csp_factor(r, 1));
    for (const auto& f : fs) {
      const auto m = random_simplex_point(f.q(), rng);
      const auto full = update_f_to_v_dense(f, m, Branching::Full);
      const auto single = update_f_to_v_dense(f, m, Branching::Single);
      const auto fast = update_f_to_v(f, m);
      for (std::size_t x = 0; x < f.q(); ++x) {
        CHECK(std::abs(full[x] - single[x]) <= 1e-14);
        CHECK(std::abs(full[x] - fast[x]) <= 1e-14);
      }
    }
  }
}

TEST_CASE("asymmetric factors use every branch") {
  auto f = build_factor_table(2, Alphabet(2), {{{0, 1}, 1.0}, {{0, 0}, 0.5}});
  const std::vector<double> m{0.3, 0.7};
  // B(0) = f(0,0) m0 + f(0,1) m1 + f(0,0) m0 = 0.3 + 0.7; B(1) = f(0,1) m0 = 0.3.
  auto out = update_f_to_v(f, m);
  CHECK(out[0] == doctest::Approx(1.0 / 1.3).epsilon(1e-14));
  auto dense = update_f_to_v_dense(f, m, Branching::Full);
  CHECK(dense[0] == doctest::Approx(out[0]).epsilon(1e-14));
}

TEST_CASE("uniform point is exact when branch sums are constant") {
  for (const auto& spec : {RegularSpec{10, 20, binary_csp_factor(20, 1)}, RegularSpec{3, 6, parity_check_factor(6)},
                           RegularSpec{2, 2, not_equal_factor(3)}, RegularSpec{4, 3, ones_factor(3, 4)}}) {
    const std::size_t q = spec.factor.q();
    CHECK(regular_residual(spec, MessagePair{uniform_vector(q), uniform_vector(q)}) < 1e-14);
  }
}

TEST_CASE("solve_regular") {
  SolveOptions o;
  SUBCASE("ones factor converges immediately") {
    auto [mp, rep] = solve_regular({3, 4, ones_factor(4)}, o);
    CHECK(rep.converged);
    CHECK(rep.restart == 0);
    CHECK(rep.iterations <= 2);
    check_uniform(mp.vf, 1e-15);
    check_uniform(mp.fv, 1e-15);
  }
  SUBCASE("binary CSP from uniform stays uniform") {
    o.restarts = 0;
    auto [mp, rep] = solve_regular({10, 20, binary_csp_factor(20, 1)}, o);
    CHECK(rep.converged);
    check_uniform(mp.vf, 1e-12);
  }
  SUBCASE("parity from random starts reaches the uniform point") {
    o.restarts = 1;
    MessagePair init{{0.7, 0.3}, {0.6, 0.4}};
    auto [mp, rep] = solve_regular({3, 6, parity_check_factor(6)}, o, init);
    CHECK(rep.converged);
    check_uniform(mp.fv, 1e-9);
    check_normalized(mp.vf);
    check_normalized(mp.fv);
    CHECK(rep.objective == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-10));
  }
  SUBCASE("converged implies residual below tol") {
    auto [mp, rep] = solve_regular({2, 4, binary_csp_factor(4, 2)}, o);
    if (rep.converged) CHECK(rep.residual <= o.tol);
  }
  SUBCASE("bad options") {
    o.tol = 0;
    CHECK_THROWS_AS(solve_regular({2, 2, ones_factor(2)}, o), ConfigError);
    o.tol = 1e-10;
    o.damping = 1.0;
    CHECK_THROWS_AS(solve_regular({2, 2, ones_factor(2)}, o), ConfigError);
  }
}

TEST_CASE("solve_fixed_type") {
  SolveOptions o;
  SUBCASE("ones factor") {
    const std::vector<double> nu{0.3, 0.7};
    auto [mp, rep] = solve_fixed_type({3, 4, ones_factor(4)}, nu, o);
    CHECK(rep.converged);
    check_uniform(mp.fv, 1e-12);
    CHECK(mp.vf[0] == doctest::Approx(0.3).epsilon(1e-10));
  }
  SUBCASE("(10,20) k=3 at nu=1/2 does not converge") {
    const std::vector<double> nu{0.5, 0.5};
    auto [mp, rep] = solve_fixed_type({10, 20, binary_csp_factor(20, 3)}, nu, o);
    CHECK_FALSE(rep.converged);
    check_normalized(mp.vf);
  }
  SUBCASE("passing within rounding of an unstable point is not convergence") {
    const std::vector<double> nu{0.5, 0.5};
    SolveOptions once = o;
    once.restarts = 0;
    // A strongly biased start maps to within ~1e-14 of uniform in one step.
    auto [mp, rep] = solve_fixed_type({10, 20, binary_csp_factor(20, 3)}, nu, once,
                                      std::vector<double>{0.9976069417102168, 0.0023930582897831124});
    CHECK_FALSE(rep.converged);
    // Nor does any of these seeds converge at nu=1/2.
    for (std::uint64_t seed = 0; seed < 200; seed += 37) {
      SolveOptions s = o;
      s.seed = seed;
      CHECK_FALSE(solve_fixed_type({10, 20, binary_csp_factor(20, 3)}, nu, s).second.converged);
    }
  }
  SUBCASE("(10,20) k=1 at nu=1/2 reaches the paramagnetic point") {
    const std::vector<double> nu{0.5, 0.5};
    auto [mp, rep] = solve_fixed_type({10, 20, binary_csp_factor(20, 1)}, nu, o);
    CHECK(rep.converged);
    check_uniform(mp.fv, 1e-9);
    check_uniform(mp.vf, 1e-9);
  }
  SUBCASE("the type of a regular fixed point reproduces it") {
    const RegularSpec spec{3, 4, build_factor_table(4, Alphabet(2), {{{0, 0, 0, 0}, 2.0}, {{0, 1, 1, 0}, 1.0},
                                                                    {{1, 1, 1, 1}, 0.5}, {{1, 0, 0, 1}, 1.0}})};
    auto [mp, rep] = solve_regular(spec, o);
    REQUIRE(rep.converged);
    const auto ta = types_from_messages(spec, mp);
    CHECK(fixed_type_residual(spec, ta.nu, mp) <= 10 * o.tol);
    auto [mp2, rep2] = solve_fixed_type(spec, ta.nu, o, mp.fv);
    CHECK(rep2.converged);
    CHECK(max_abs_diff(mp2.fv, mp.fv) <= 1e-8);
  }
}

TEST_CASE("solve_poisson") {
  SolveOptions o;
  SUBCASE("ones factor") {
    auto [st, rep] = solve_poisson({0.7, 3, ones_factor(3)}, o);
    CHECK(rep.converged);
    check_uniform(st.messages.vf, 1e-12);
    // e sum_x m_vf m_fv equals alpha k at the fixed point.
    CHECK(st.e * std::inner_product(st.messages.vf.begin(), st.messages.vf.end(), st.messages.fv.begin(), 0.0) ==
          doctest::Approx(0.7 * 3).epsilon(1e-10));
    CHECK(poisson_objective({0.7, 3, ones_factor(3)}, st) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("not-equal, alpha=1") {
    auto [st, rep] = solve_poisson({1.0, 2, not_equal_factor()}, o);
    CHECK(rep.converged);
    check_uniform(st.messages.vf, 1e-9);
    CHECK(st.e * std::inner_product(st.messages.vf.begin(), st.messages.vf.end(), st.messages.fv.begin(), 0.0) ==
          doctest::Approx(2.0).epsilon(1e-10));
    CHECK(std::abs(poisson_objective({1.0, 2, not_equal_factor()}, st)) <= 1e-10);
  }
  SUBCASE("equality, alpha=0.1 against the type formula") {
    const double alpha = 0.1;
    auto [st, rep] = solve_poisson({alpha, 2, equality_factor(2)}, o);
    CHECK(rep.converged);
    const double grid = max_on_unit_interval(
        [&](double t) { return entropy2(t) + alpha * std::log(t * t + (1 - t) * (1 - t)); });
    CHECK(rep.objective == doctest::Approx(grid).epsilon(1e-9));
  }
}

TEST_CASE("solve_irregular") {
  SolveOptions o;
  SUBCASE("single degrees follow the regular trajectory") {
    IrregularSpec irr;
    irr.L = {{3, 1.0}};
    irr.R = {{4, 1.0}};
    const auto f = build_factor_table(4, Alphabet(2), {{{0, 0, 0, 0}, 2.0}, {{0, 1, 1, 0}, 1.0}, {{1, 1, 1, 1}, 0.5}});
    irr.factors.emplace(4, f);
    o.restarts = 0;
    for (int iters : {1, 3, 10}) {
      o.max_iters = iters;
      const MessagePair init{{0.3, 0.7}, {0.5, 0.5}};
      auto [a, ra] = solve_regular({3, 4, f}, o, init);
      auto [b, rb] = solve_irregular(irr, o, init);
      CHECK(max_abs_diff(a.vf, b.messages.vf) <= 1e-14);
      CHECK(max_abs_diff(a.fv, b.messages.fv) <= 1e-14);
    }
  }
  SUBCASE("ones factors give uniform messages") {
    IrregularSpec irr;
    irr.L = {{2, 0.3}, {5, 0.7}};
    irr.R = {{3, 0.5}, {4, 0.5}};
    irr.factors.emplace(3, ones_factor(3, 3));
    irr.factors.emplace(4, ones_factor(4, 3));
    auto [st, rep] = solve_irregular(irr, o);
    CHECK(rep.converged);
    check_uniform(st.messages.vf, 1e-12);
    CHECK(irregular_objective(irr, st.messages) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
  SUBCASE("parity with mixed variable degrees") {
    IrregularSpec irr;
    irr.L = {{2, 0.5}, {4, 0.5}};
    irr.R = {{6, 1.0}};
    irr.factors.emplace(6, parity_check_factor(6));
    auto [st, rep] = solve_irregular(irr, o);
    CHECK(rep.converged);
    check_uniform(st.messages.fv, 1e-9);
    double lsum = 0.0;
    for (const auto& [i, w] : st.l_w) lsum += w;
    CHECK(lsum == doctest::Approx(1.0));
    CHECK(irregular_objective(irr, st.messages) == doctest::Approx((1.0 - 3.0 / 6.0) * std::log(2.0)).epsilon(1e-10));
  }
}
