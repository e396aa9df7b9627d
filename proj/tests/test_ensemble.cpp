#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "annealed/ensemble.hpp"
#include "annealed/errors.hpp"

using namespace annealed;

namespace {

// Binomial coefficient by Pascal's triangle, independent of the library.
double pascal(int n, int k) {
  std::vector<double> row{1.0};
  for (int i = 1; i <= n; ++i) {
    std::vector<double> next(i + 1, 1.0);
    for (int j = 1; j < i; ++j) next[j] = row[j - 1] + row[j];
    row = next;
  }
  return (k < 0 || k > n) ? 0.0 : row[k];
}

int weight(const Tuple& t) { return std::accumulate(t.begin(), t.end(), 0); }

}  // namespace

TEST_CASE("alphabet labels and lookup") {
  Alphabet a(3);
  CHECK(a.size() == 3);
  CHECK(a.labels()[2] == "2");
  CHECK(a.index_of("1") == 1);
  CHECK_FALSE(a.index_of("x").has_value());
  CHECK_THROWS_AS(Alphabet(1), ConfigError);
  CHECK_THROWS_AS(Alphabet(std::vector<std::string>{"a", "a"}), ConfigError);
}

TEST_CASE("build_factor_table examples") {
  SUBCASE("uniform unary factor") {
    auto f = build_factor_table(1, Alphabet(2), {{{0}, 1.0}, {{1}, 1.0}});
    CHECK(f.total() == 2.0);
    CHECK(f.at(Tuple{0}) == 1.0);
    CHECK(f.perm_invariant());
  }
  SUBCASE("not-equal is permutation invariant") {
    auto f = build_factor_table(2, Alphabet(2), {{{0, 1}, 1.0}, {{1, 0}, 1.0}});
    CHECK(f.perm_invariant());
    CHECK(f.at(Tuple{0, 0}) == 0.0);
  }
  SUBCASE("asymmetric table is detected") {
    auto f = build_factor_table(2, Alphabet(2), {{{0, 1}, 1.0}});
    CHECK_FALSE(f.perm_invariant());
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(build_factor_table(2, Alphabet(2), {{{0, 1}, -1.0}}), ConfigError);
    CHECK_THROWS_AS(build_factor_table(2, Alphabet(2), {{{0, 1}, 0.0}}), ConfigError);
    CHECK_THROWS_AS(build_factor_table(2, Alphabet(2), {{{0, 1, 1}, 1.0}}), ConfigError);
    CHECK_THROWS_AS(build_factor_table(2, Alphabet(2), {{{0, 2}, 1.0}}), ConfigError);
  }
}

TEST_CASE("tuple indexing puts the first position first") {
  auto f = ones_factor(3, 3);
  CHECK(f.index_of({1, 0, 0}) == 9);
  CHECK(f.tuple_of(9) == Tuple{1, 0, 0});
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f.index_of(f.tuple_of(i)) == i);
}

TEST_CASE("binary CSP factor") {
  SUBCASE("r=4, k=1 vanishes exactly on weight-2 tuples") {
    auto f = binary_csp_factor(4, 1);
    int zeros = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const bool zero = f.at(i) == 0.0;
      zeros += zero;
      CHECK(zero == (weight(f.tuple_of(i)) == 2));
    }
    CHECK(zeros == 6);
  }
  SUBCASE("r=20, k=3 satisfying count is a binomial sum") {
    double expect = 0.0;
    for (int i = 0; i <= 20; ++i)
      if (i <= 7 || i >= 13) expect += pascal(20, i);
    CHECK(binary_csp_factor(20, 3).total() == expect);
  }
  SUBCASE("r=2, k=1 is the equality factor") {
    auto f = binary_csp_factor(2, 1);
    CHECK(f.values()[0] == 1.0);
    CHECK(f.values()[1] == 0.0);
    CHECK(f.values()[2] == 0.0);
    CHECK(f.values()[3] == 1.0);
  }
  SUBCASE("always permutation invariant") {
    for (int r = 2; r <= 12; r += 2)
      for (int k = 1; k <= r / 2; ++k) CHECK(binary_csp_factor(r, k).perm_invariant());
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(binary_csp_factor(5, 1), ConfigError);
    CHECK_THROWS_AS(binary_csp_factor(6, 0), ConfigError);
    CHECK_THROWS_AS(binary_csp_factor(6, 4), ConfigError);
  }
}

TEST_CASE("parity check factor") {
  auto p2 = parity_check_factor(2);
  auto eq = equality_factor(2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p2.at(i) == eq.at(i));
  CHECK(parity_check_factor(3).total() == 4.0);
  CHECK(parity_check_factor(6).total() == 32.0);
  CHECK(parity_check_factor(6).perm_invariant());
}

TEST_CASE("replicate_factor") {
  SUBCASE("n=1 is the identity") {
    auto f = binary_csp_factor(4, 1);
    auto g = replicate_factor(f, 1);
    REQUIRE(g.size() == f.size());
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(g.at(i) == f.at(i));
  }
  SUBCASE("n=2 not-equal") {
    auto g = replicate_factor(not_equal_factor(), 2);
    CHECK(g.q() == 4);
    CHECK(g.size() == 16);
    CHECK(g.total() == 4.0);
    CHECK(g.alphabet().labels()[1] == "0:1");
  }
  SUBCASE("n=2 ones") {
    auto g = replicate_factor(ones_factor(2), 2);
    for (double v : g.values()) CHECK(v == 1.0);
  }
  SUBCASE("N_f(replicated) = N_f^n") {
    for (const auto& f : {binary_csp_factor(4, 1), parity_check_factor(3), not_equal_factor(3)})
      for (int n = 1; n <= 3; ++n) CHECK(replicate_factor(f, n).total() == doctest::Approx(std::pow(f.total(), n)));
  }
  SUBCASE("budget") { CHECK_THROWS_AS(replicate_factor(parity_check_factor(6), 3, 1000), BudgetExceeded); }
}

TEST_CASE("branch sums by direct enumeration") {
  for (const auto& f : {binary_csp_factor(6, 2), parity_check_factor(5), not_equal_factor(3),
                        build_factor_table(2, Alphabet(2), {{{0, 1}, 2.0}, {{1, 1}, 0.5}})}) {
    std::vector<double> s(f.q(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i)
      for (int x : f.tuple_of(i)) s[x] += f.at(i);
    for (std::size_t x = 0; x < f.q(); ++x) CHECK(f.branch_sums()[x] == doctest::Approx(s[x]).epsilon(1e-14));
  }
}

TEST_CASE("design rate") {
  for (int l = 1; l <= 4; ++l)
    for (int r = 1; r <= 5; ++r) CHECK(design_rate({l, r, ones_factor(r)}) == doctest::Approx(std::log(2.0)));
  CHECK(design_rate({3, 6, parity_check_factor(6)}) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-14));
  double nf = 0.0;
  for (int i = 0; i <= 20; ++i)
    if (i != 10) nf += pascal(20, i);
  CHECK(design_rate({10, 20, binary_csp_factor(20, 1)}) ==
        doctest::Approx(std::log(2.0) + 0.5 * std::log(nf / std::pow(2.0, 20))).epsilon(1e-14));
  auto skew = build_factor_table(2, Alphabet(2), {{{0, 0}, 1.0}, {{0, 1}, 1.0}, {{1, 0}, 1.0}});
  CHECK_THROWS_AS(design_rate({2, 2, skew}), PreconditionError);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS((RegularSpec{2, 3, ones_factor(2)}.validate()), ConfigError);
  CHECK_THROWS_AS((RegularSpec{0, 2, ones_factor(2)}.validate()), ConfigError);
  CHECK_NOTHROW((RegularSpec{2, 2, ones_factor(2)}.validate()));

  IrregularSpec irr;
  irr.L = {{2, 0.5}, {4, 0.5}};
  irr.R = {{6, 1.0}};
  irr.factors.emplace(6, parity_check_factor(6));
  CHECK_NOTHROW(irr.validate());
  CHECK(irr.mean_variable_degree() == 3.0);
  CHECK(irr.mean_factor_degree() == 6.0);
  irr.L = {{2, 0.5}, {4, 0.4}};
  CHECK_THROWS_AS(irr.validate(), ConfigError);

  CHECK_THROWS_AS((PoissonSpec{0.0, 2, ones_factor(2)}.validate()), ConfigError);
  CHECK_THROWS_AS((PoissonSpec{1.0, 3, ones_factor(2)}.validate()), ConfigError);
  CHECK_THROWS_AS((FieldSpec{{0.0, 0.0}}.validate(2)), ConfigError);
  CHECK_THROWS_AS((FieldSpec{{1.0, -1.0}}.validate(2)), ConfigError);
  CHECK_THROWS_AS(FieldSpec{{1.0}}.validate(2), ConfigError);
  CHECK_THROWS_AS((RandomFieldSpec{{FieldSpec{{1.0, 1.0}}}, {0.5}}.validate(2)), ConfigError);
  CHECK_THROWS_AS((RandomFieldSpec{{}, {}}.validate(2)), ConfigError);
}

TEST_CASE("factor file round trip") {
  auto f = build_factor_table(3, Alphabet(std::vector<std::string>{"a", "b", "c"}),
                              {{{0, 1, 2}, 0.1}, {{2, 2, 2}, 1.0 / 3.0}, {{1, 0, 0}, 7.0}});
  std::stringstream ss;
  write_factor_table(ss, f);
  auto g = read_factor_table(ss);
  CHECK(g.arity() == 3);
  CHECK(g.q() == 3);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(g.at(i) == f.at(i));

  std::istringstream in("# pairwise\n2 2\n0 1 1\n1 0 1 # comment\n");
  auto ne = read_factor_table(in);
  CHECK(ne.total() == 2.0);
  CHECK(ne.perm_invariant());

  std::istringstream dup("2 2\n0 1 1\n0 1 2\n");
  CHECK_THROWS_AS(read_factor_table(dup), ConfigError);
  std::istringstream bad("2 2\n0 5 1\n");
  CHECK_THROWS_AS(read_factor_table(bad), ConfigError);
  std::istringstream big("30 2\n");
  CHECK_THROWS_AS(read_factor_table(big), BudgetExceeded);
}
