#pragma once

// Alphabets, dense factor tables and the ensemble descriptions built on them.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace annealed {

inline constexpr std::size_t kDefaultMaxEntries = 10'000'000;

class Alphabet {
 public:
  /// Symbols labelled "0", "1", ..., "q-1".
  explicit Alphabet(std::size_t q);
  explicit Alphabet(std::vector<std::string> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::optional<int> index_of(std::string_view label) const;

  bool operator==(const Alphabet&) const = default;

 private:
  std::vector<std::string> labels_;
};

using Tuple = std::vector<int>;

/// Factor values aggregated by count vector. For a tuple x in X^r let
/// c(x) count the occurrences of each symbol; `weight[k]` is the sum of f
/// over the tuples with c(x) == counts[k]. Only classes with positive
/// weight are stored. Every update in this library that is symmetric in the
/// tuple positions depends on f only through this profile.
struct CountProfile {
  std::vector<std::vector<int>> counts;
  std::vector<double> weight;
  std::vector<double> log_weight;
  /// Number of tuples in each class (multinomial coefficient).
  std::vector<double> multiplicity;
  /// f value of the class when the table is permutation invariant.
  std::vector<double> class_value;
};

/// Nonnegative function on X^r stored densely. Tuples are indexed with the
/// first position as the most significant digit. Immutable and cheap to copy.
class FactorTable {
 public:
  /// Throws ConfigError on negative or all-zero values, BudgetExceeded when
  /// q^arity exceeds `max_entries`. Permutation invariance is decided exhaustively.
  FactorTable(int arity, Alphabet alphabet, std::vector<double> values,
              std::size_t max_entries = kDefaultMaxEntries);

  int arity() const noexcept { return data_->arity; }
  const Alphabet& alphabet() const noexcept { return data_->alphabet; }
  std::size_t q() const noexcept { return data_->alphabet.size(); }
  std::size_t size() const noexcept { return data_->values.size(); }
  std::span<const double> values() const noexcept { return data_->values; }
  double at(std::size_t index) const { return data_->values.at(index); }
  double at(const Tuple& t) const { return data_->values.at(index_of(t)); }
  bool perm_invariant() const noexcept { return data_->perm_invariant; }
  const CountProfile& profile() const noexcept { return data_->profile; }

  /// N_f = sum of all values.
  double total() const noexcept { return data_->total; }
  /// S_x = sum_i sum_{x : x_i = x} f(x), for every symbol x.
  const std::vector<double>& branch_sums() const noexcept { return data_->branch_sums; }
  /// True when S_x agrees across symbols within a relative 1e-12.
  bool uniform_branch_sums() const;

  std::size_t index_of(const Tuple& t) const;
  Tuple tuple_of(std::size_t index) const;

 private:
  struct Data {
    int arity;
    Alphabet alphabet;
    std::vector<double> values;
    bool perm_invariant;
    double total;
    std::vector<double> branch_sums;
    CountProfile profile;
  };
  std::shared_ptr<const Data> data_;
};

/// Builds a dense table from sparse entries; absent tuples are 0.
FactorTable build_factor_table(int arity, const Alphabet& alphabet,
                               const std::map<Tuple, double>& entries,
                               std::size_t max_entries = kDefaultMaxEntries);

/// f(x) = 0 iff r/2 - k < sum x_i < r/2 + k, else 1 (binary alphabet).
FactorTable binary_csp_factor(int r, int k);
/// f(x) = 1 iff sum x_i is even (binary alphabet).
FactorTable parity_check_factor(int r);
/// f(x1, x2) = 1 iff x1 != x2.
FactorTable not_equal_factor(std::size_t q = 2);
/// f(x) = 1 iff all entries agree.
FactorTable equality_factor(int r, std::size_t q = 2);
/// f == 1.
FactorTable ones_factor(int r, std::size_t q = 2);

/// Factor on the alphabet X^n with value prod_i f(x^(i)).
FactorTable replicate_factor(const FactorTable& f, int n,
                             std::size_t max_entries = kDefaultMaxEntries);

/// Text format: header "arity q", then one "s_1 ... s_r value" line per
/// nonzero entry, symbols written by label.
FactorTable read_factor_table(std::istream& in, std::size_t max_entries = kDefaultMaxEntries);
void write_factor_table(std::ostream& out, const FactorTable& f);

struct RegularSpec {
  int l = 0;
  int r = 0;
  FactorTable factor;
  void validate() const;
};

struct IrregularSpec {
  std::map<int, double> L;  // variable degree -> node fraction
  std::map<int, double> R;  // factor degree -> node fraction
  std::map<int, FactorTable> factors;
  void validate() const;
  /// L'(1) = sum_i i L_i.
  double mean_variable_degree() const;
  /// R'(1) = sum_j j R_j.
  double mean_factor_degree() const;
};

struct PoissonSpec {
  double alpha = 0.0;
  int k = 0;
  FactorTable factor;
  void validate() const;
};

struct FieldSpec {
  std::vector<double> h;
  void validate(std::size_t q) const;
};

struct RandomFieldSpec {
  std::vector<FieldSpec> fields;
  std::vector<double> probs;
  void validate(std::size_t q) const;
};

struct EnsembleSpec {
  std::variant<RegularSpec, IrregularSpec, PoissonSpec> ensemble;
  std::optional<FieldSpec> field;
  std::optional<RandomFieldSpec> random_field;
};

/// log q + (l/r) log(N_f / q^r). Throws PreconditionError unless S_x is constant.
double design_rate(const RegularSpec& spec);

}  // namespace annealed
