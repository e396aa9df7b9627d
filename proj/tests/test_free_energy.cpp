#include <doctest.h>

#include <cmath>
#include <functional>

#include "annealed/bp.hpp"
#include "annealed/errors.hpp"
#include "annealed/free_energy.hpp"
#include "annealed/numeric.hpp"
#include "annealed/oracle.hpp"

using namespace annealed;

namespace {

const double kLog2 = std::log(2.0);

double h2(double p) {
  double h = 0.0;
  if (p > 0) h -= p * std::log(p);
  if (p < 1) h -= (1 - p) * std::log(1 - p);
  return h;
}

// Golden-section polish of a 1-D maximum found on a grid of [lo, hi].
double maximize_1d(const std::function<double(double)>& g, double lo = 0.0, double hi = 1.0, int grid = 2000) {
  int best = 0;
  double best_v = g(lo);
  for (int i = 1; i <= grid; ++i) {
    const double v = g(lo + (hi - lo) * i / grid);
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  double a = lo + (hi - lo) * std::max(0, best - 1) / grid, b = lo + (hi - lo) * std::min(grid, best + 1) / grid;
  const double phi = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 200; ++it) {
    const double c = b - phi * (b - a), d = a + phi * (b - a);
    if (g(c) > g(d)) b = d;
    else a = c;
  }
  return std::max(best_v, g(0.5 * (a + b)));
}

FactorTable skewed_pair() {
  return build_factor_table(2, Alphabet(2), {{{0, 0}, 1.0}, {{0, 1}, 0.5}, {{1, 0}, 0.5}, {{1, 1}, 2.0}});
}

}  // namespace

TEST_CASE("bethe_type_objective") {
  SUBCASE("uniform types of the ones factor") {
    const RegularSpec spec{3, 4, ones_factor(4, 3)};
    TypeAssignment ta{uniform_vector(3), uniform_vector(81)};
    CHECK(bethe_type_objective(spec, ta) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }
  SUBCASE("product type of the ones factor gives H(nu)") {
    const RegularSpec spec{3, 3, ones_factor(3)};
    const std::vector<double> nu{0.3, 0.7};
    std::vector<double> mu(8);
    for (std::size_t i = 0; i < 8; ++i) {
      mu[i] = 1.0;
      for (int x : spec.factor.tuple_of(i)) mu[i] *= nu[x];
    }
    const double v = bethe_type_objective(spec, {nu, mu});
    CHECK(v == doctest::Approx(h2(0.3)).epsilon(1e-13));
    CHECK(v == doctest::Approx(0.610864).epsilon(1e-6));
  }
  SUBCASE("parity, uniform on the support") {
    const RegularSpec spec{3, 6, parity_check_factor(6)};
    std::vector<double> mu(64);
    for (std::size_t i = 0; i < 64; ++i) mu[i] = spec.factor.at(i) / 32.0;
    CHECK(bethe_type_objective(spec, {uniform_vector(2), mu}) == doctest::Approx(0.5 * kLog2).epsilon(1e-14));
  }
  SUBCASE("mass on a zero of f and inconsistency") {
    const RegularSpec spec{2, 2, not_equal_factor()};
    CHECK(bethe_type_objective(spec, {uniform_vector(2), uniform_vector(4)}) == kNegInf);
    CHECK_THROWS_AS(bethe_type_objective(spec, {std::vector<double>{0.9, 0.1}, uniform_vector(4)}), ConfigError);
  }
}

TEST_CASE("annealed_regular_at") {
  const auto u2 = uniform_vector(2);
  CHECK(annealed_regular_at({u2, u2}, {3, 5, ones_factor(5)}) == doctest::Approx(kLog2).epsilon(1e-14));
  for (const auto& spec : {RegularSpec{10, 20, binary_csp_factor(20, 1)}, RegularSpec{10, 20, binary_csp_factor(20, 3)},
                           RegularSpec{3, 6, parity_check_factor(6)}, RegularSpec{4, 4, binary_csp_factor(4, 2)}})
    CHECK(annealed_regular_at({u2, u2}, spec) == doctest::Approx(design_rate(spec)).epsilon(1e-13));
  CHECK(annealed_regular_at({u2, u2}, {3, 6, parity_check_factor(6)}) == doctest::Approx(0.346574).epsilon(1e-6));
  CHECK_THROWS_AS(annealed_regular_at({{1.0, 0.0}, {0.0, 1.0}}, {2, 2, ones_factor(2)}), NumericalFailure);
}

TEST_CASE("evaluator identity at converged fixed points") {
  for (const auto& spec : {RegularSpec{3, 4, build_factor_table(4, Alphabet(2), {{{0, 0, 0, 0}, 2.0},
                                                                                 {{0, 1, 1, 0}, 1.0},
                                                                                 {{1, 1, 1, 1}, 0.5}})},
                           RegularSpec{3, 2, skewed_pair()}, RegularSpec{2, 3, ones_factor(3, 3)}}) {
    auto [mp, rep] = solve_regular(spec, SolveOptions{});
    REQUIRE(rep.converged);
    const auto ta = types_from_messages(spec, mp);
    CHECK(consistency_error(spec.factor, ta) <= 1e-9);
    CHECK(annealed_regular_at(mp, spec) == doctest::Approx(bethe_type_objective(spec, ta, 1e-9)).epsilon(1e-9));
  }
}

TEST_CASE("stationarity of the message functionals") {
  const RegularSpec spec{3, 2, skewed_pair()};
  auto [mp, rep] = solve_regular(spec, SolveOptions{});
  REQUIRE(rep.converged);
  const auto g = regular_objective_gradient(spec, mp);
  for (double d : g.d_vf) CHECK(std::abs(d) <= 1e-8);
  for (double d : g.d_fv) CHECK(std::abs(d) <= 1e-8);
  // Central differences of the functional itself.
  for (std::size_t x = 0; x < 2; ++x) {
    auto up = mp, dn = mp;
    up.vf[x] += 1e-6;
    dn.vf[x] -= 1e-6;
    CHECK(std::abs(regular_objective(spec, up) - regular_objective(spec, dn)) / 2e-6 <= 1e-5);
    up = mp;
    dn = mp;
    up.fv[x] += 1e-6;
    dn.fv[x] -= 1e-6;
    CHECK(std::abs(regular_objective(spec, up) - regular_objective(spec, dn)) / 2e-6 <= 1e-5);
  }
}

TEST_CASE("growth_rate_fixed_type") {
  SUBCASE("ones factor gives the entropy") {
    const std::vector<double> nu{0.3, 0.7};
    const auto p = growth_rate_fixed_type({3, 6, ones_factor(6)}, nu);
    CHECK(p.value == doctest::Approx(0.610864).epsilon(1e-6));
    CHECK(p.value == doctest::Approx(h2(0.3)).epsilon(1e-12));
  }
  SUBCASE("single-configuration type") {
    const auto f = build_factor_table(3, Alphabet(2), {{{0, 0, 0}, 2.5}, {{0, 1, 1}, 1.0}, {{1, 1, 1}, 1.0}});
    const std::vector<double> delta{1.0, 0.0};
    CHECK(growth_rate_fixed_type({4, 3, f}, delta).value == doctest::Approx(4.0 / 3.0 * std::log(2.5)).epsilon(1e-12));
  }
  SUBCASE("parity at one half") {
    const auto p = growth_rate_fixed_type({3, 6, parity_check_factor(6)}, uniform_vector(2));
    CHECK(p.value == doctest::Approx(0.346574).epsilon(1e-6));
    CHECK(p.converged);
  }
  SUBCASE("infeasible type") {
    const std::vector<double> nu{0.8, 0.2};
    const auto p = growth_rate_fixed_type({2, 2, not_equal_factor()}, nu);
    CHECK(p.solver == "infeasible");
    CHECK(p.value == kNegInf);
  }
  SUBCASE("symmetric curves") {
    for (const auto& spec : {RegularSpec{10, 20, binary_csp_factor(20, 2)}, RegularSpec{3, 6, parity_check_factor(6)}}) {
      for (double t : {0.05, 0.17, 0.33, 0.41}) {
        const std::vector<double> a{1 - t, t}, b{t, 1 - t};
        CHECK(std::abs(growth_rate_fixed_type(spec, a).value - growth_rate_fixed_type(spec, b).value) <= 1e-9);
      }
    }
  }
}

TEST_CASE("annealed_regular") {
  SUBCASE("ones factor") {
    const auto r = annealed_regular({3, 5, ones_factor(5)});
    CHECK(r.value == doctest::Approx(kLog2).epsilon(1e-12));
    CHECK(r.converged);
  }
  SUBCASE("(10,20) k=1 peaks off one half") {
    const RegularSpec spec{10, 20, binary_csp_factor(20, 1)};
    const auto r = annealed_regular(spec);
    const double half = growth_rate_fixed_type(spec, uniform_vector(2)).value;
    CHECK(r.value > half + 1e-3);
    CHECK(std::abs(r.nu[1] - 0.5) > 0.05);
  }
  SUBCASE("(2,2) not-equal") { CHECK(std::abs(annealed_regular({2, 2, not_equal_factor()}).value) <= 1e-9); }
  SUBCASE("dominates every section") {
    const RegularSpec spec{3, 2, skewed_pair()};
    const auto r = annealed_regular(spec);
    for (int i = 0; i <= 40; ++i) {
      const std::vector<double> nu{1 - i / 40.0, i / 40.0};
      CHECK(r.value >= growth_rate_fixed_type(spec, nu).value - 1e-12);
    }
  }
  SUBCASE("matches a dense 1-D maximization of the growth rate") {
    const RegularSpec spec{3, 2, skewed_pair()};
    const double oracle = maximize_1d([&](double t) {
      const std::vector<double> nu{1 - t, t};
      return growth_rate_fixed_type(spec, nu).value;
    }, 0.0, 1.0, 400);
    CHECK(annealed_regular(spec).value == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("annealed_field") {
  const RegularSpec spec{3, 2, skewed_pair()};
  SUBCASE("unit field") {
    CHECK(annealed_field(spec, FieldSpec{{1.0, 1.0}}).value ==
          doctest::Approx(annealed_regular(spec).value).epsilon(1e-12));
  }
  SUBCASE("field supported on one symbol") {
    CHECK(annealed_field(spec, FieldSpec{{0.0, 3.0}}).value ==
          doctest::Approx(1.5 * std::log(2.0) + std::log(3.0)).epsilon(1e-10));
  }
  SUBCASE("Legendre transform of the growth rate") {
    const std::vector<double> h{1.0, 0.6};
    const double oracle = maximize_1d([&](double t) {
      const std::vector<double> nu{1 - t, t};
      return growth_rate_fixed_type(spec, nu).value + (1 - t) * std::log(h[0]) + t * std::log(h[1]);
    }, 0.0, 1.0, 400);
    CHECK(annealed_field(spec, FieldSpec{h}).value == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("annealed_random_field") {
  const RegularSpec spec{3, 2, skewed_pair()};
  SUBCASE("single field") {
    const FieldSpec h{{1.0, 0.6}};
    CHECK(annealed_random_field(spec, RandomFieldSpec{{h}, {1.0}}).value ==
          doctest::Approx(annealed_field(spec, h).value).epsilon(1e-9));
  }
  SUBCASE("unit field") {
    CHECK(annealed_random_field(spec, RandomFieldSpec{{FieldSpec{{1.0, 1.0}}}, {1.0}}).value ==
          doctest::Approx(annealed_regular(spec).value).epsilon(1e-9));
  }
  SUBCASE("two-field mixture on (2,2) equality") {
    const RegularSpec eq{2, 2, equality_factor(2)};
    const RandomFieldSpec rf{{FieldSpec{{1.0, 2.0}}, FieldSpec{{1.0, 0.5}}}, {0.5, 0.5}};
    const double value = annealed_random_field(eq, rf).value;
    // Type route: for each nu split the ones between the two field classes
    // (concave in the split), then pay the fixed-type growth rate of nu in place
    // of its entropy.
    auto best_split = [&](double t) {
      const double lo = std::max(0.0, 2 * t - 1), hi = std::min(1.0, 2 * t);
      return maximize_1d([&](double pa) {
        const double pb = 2 * t - pa;
        return 0.5 * (h2(pa) + pa * std::log(2.0)) + 0.5 * (h2(pb) + pb * std::log(0.5));
      }, lo, hi, 200);
    };
    const double oracle = maximize_1d([&](double t) {
      const std::vector<double> nu{1 - t, t};
      return best_split(t) + growth_rate_fixed_type(eq, nu).value - h2(t);
    }, 0.0, 1.0, 200);
    CHECK(value == doctest::Approx(oracle).epsilon(1e-8));
    // The finite-N exact average approaches it from above.
    double prev = kInf;
    for (int N : {10, 20, 40, 80}) {
      const double fin = exact_random_field_finite(N, eq, rf);
      CHECK(fin > value);
      CHECK(fin - value < prev);
      prev = fin - value;
    }
  }
}

TEST_CASE("annealed_irregular") {
  SUBCASE("single degrees match the regular ensemble") {
    const auto f = skewed_pair();
    IrregularSpec irr;
    irr.L = {{3, 1.0}};
    irr.R = {{2, 1.0}};
    irr.factors.emplace(2, f);
    CHECK(annealed_irregular(irr).value == doctest::Approx(annealed_regular({3, 2, f}).value).epsilon(1e-10));
  }
  SUBCASE("ones factors") {
    IrregularSpec irr;
    irr.L = {{1, 0.2}, {3, 0.8}};
    irr.R = {{2, 0.6}, {5, 0.4}};
    irr.factors.emplace(2, ones_factor(2));
    irr.factors.emplace(5, ones_factor(5));
    CHECK(annealed_irregular(irr).value == doctest::Approx(kLog2).epsilon(1e-12));
  }
  SUBCASE("parity with L'(1) = 3, r = 3") {
    IrregularSpec irr;
    irr.L = {{2, 0.5}, {4, 0.5}};
    irr.R = {{3, 1.0}};
    irr.factors.emplace(3, parity_check_factor(3));
    const MessagePair u{uniform_vector(2), uniform_vector(2)};
    CHECK(std::abs(irregular_objective(irr, u)) <= 1e-14);
  }
}

TEST_CASE("annealed_poisson") {
  CHECK(annealed_poisson({0.8, 3, ones_factor(3, 3)}).value == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(std::abs(annealed_poisson({1.0, 2, not_equal_factor()}).value) <= 1e-10);
  const double alpha = 0.25;
  const double oracle = maximize_1d([&](double t) {
    return h2(t) + (t > 0 && t < 1 ? alpha * std::log(2 * t * (1 - t)) : kNegInf);
  }, 1e-12, 1 - 1e-12);
  CHECK(annealed_poisson({alpha, 2, not_equal_factor()}).value == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("moment_exponent") {
  const RegularSpec spec{3, 2, skewed_pair()};
  CHECK(moment_exponent(spec, 1).value == annealed_regular(spec).value);
  CHECK(moment_exponent({2, 3, ones_factor(3)}, 2).value == doctest::Approx(2 * kLog2).epsilon(1e-12));
  SUBCASE("(2,2) not-equal second moment against the pair-alphabet oracle") {
    const RegularSpec ne{2, 2, not_equal_factor()};
    const double asym = moment_exponent(ne, 2).value;
    CHECK(std::abs(asym) <= 1e-9);
    const RegularSpec pair{2, 2, replicate_factor(ne.factor, 2)};
    double prev = kInf;
    for (int N : {2, 4, 6, 8, 10}) {
      const double fin = exact_annealed_finite(N, pair);
      CHECK(fin < prev);
      CHECK(fin > asym);
      prev = fin;
    }
  }
}

TEST_CASE("LDPC closed form") {
  SUBCASE("weight one half") {
    const auto p = ldpc_growth_rate_closed_form(3, 6, 0.5);
    CHECK(std::abs(p.h) <= 1e-12);
    CHECK(std::abs(p.y) <= 1e-12);
    CHECK(std::abs(p.z) <= 1e-12);
    CHECK(p.value == doctest::Approx(0.5 * kLog2).epsilon(1e-12));
  }
  SUBCASE("small weights approach zero from below") {
    double prev = kNegInf;
    for (double w : {1e-2, 1e-3, 1e-4}) {
      const auto p = ldpc_growth_rate_closed_form(3, 6, w);
      CHECK(p.value < 0.0);
      CHECK(p.value > prev);
      prev = p.value;
    }
    CHECK(prev > -1e-3);
  }
  SUBCASE("equals the fixed-type growth rate of the parity factor") {
    for (auto [l, r] : {std::pair{3, 6}, std::pair{3, 5}, std::pair{4, 8}})
      for (double w : {0.05, 0.2, 0.35, 0.6}) {
        const std::vector<double> nu{1 - w, w};
        const auto p = ldpc_growth_rate_closed_form(l, r, w);
        CHECK(p.residual <= 1e-10);
        CHECK(p.value == doctest::Approx(growth_rate_fixed_type({l, r, parity_check_factor(r)}, nu).value).epsilon(1e-8));
      }
  }
  CHECK_THROWS_AS(ldpc_growth_rate_closed_form(3, 6, 0.0), ConfigError);
}

TEST_CASE("linear constraints") {
  const RegularSpec spec{3, 2, skewed_pair()};
  SUBCASE("indicator constraint fixes the type") {
    for (double b : {0.2, 0.5, 0.7}) {
      const std::vector<double> nu{1 - b, b};
      const auto r = maximize_with_linear_constraints(spec, {NuConstraint{{0.0, 1.0}, b}}, {});
      CHECK(r.value == doctest::Approx(growth_rate_fixed_type(spec, nu).value).epsilon(1e-10));
    }
  }
  SUBCASE("no constraints") {
    CHECK(maximize_with_linear_constraints(spec, {}, {}).value ==
          doctest::Approx(annealed_regular(spec).value).epsilon(1e-9));
  }
  SUBCASE("factor-type moment against lattice types at N = 8") {
    // (2,2), f = (1, 1/2, 1/2, 1), fraction of disagreeing edges fixed to 1/4.
    const RegularSpec s{2, 2, build_factor_table(2, Alphabet(2), {{{0, 0}, 1.0}, {{0, 1}, 0.5}, {{1, 0}, 0.5}, {{1, 1}, 1.0}})};
    const MuConstraint c{{0.0, 1.0, 1.0, 0.0}, 0.25};
    const double value = maximize_with_linear_constraints(s, {}, {c}).value;
    // Every integer type pair at N = 8 (M = 8 factors) meeting the constraint.
    const int M = 8;
    double lattice = kNegInf;
    for (const auto& u : compositions(M, 4)) {
      if (u[1] + u[2] != 2) continue;
      const int s0 = 2 * u[0] + u[1] + u[2];
      if (s0 % 2 != 0) continue;
      const std::vector<double> nu{s0 / 16.0, 1 - s0 / 16.0};
      std::vector<double> mu(4);
      for (int k = 0; k < 4; ++k) mu[k] = u[k] / double(M);
      const double v = bethe_type_objective(s, {nu, mu});
      CHECK(v <= value + 1e-12);
      lattice = std::max(lattice, v);
    }
    CHECK(value == doctest::Approx(lattice).epsilon(1e-8));
    CHECK(value == doctest::Approx(h2(0.25) + 0.25 * std::log(0.5)).epsilon(1e-10));
  }
  SUBCASE("infeasible constraints") {
    CHECK_THROWS_AS(maximize_with_linear_constraints(spec, {NuConstraint{{1.0, 1.0}, 2.0}}, {}), InfeasibleError);
  }
}
