#include "annealed/ensemble.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "annealed/errors.hpp"

namespace annealed {

namespace {

std::size_t checked_power(std::size_t base, int exp, std::size_t cap) {
  std::size_t n = 1;
  for (int i = 0; i < exp; ++i) {
    if (n > cap / base) throw BudgetExceeded("table of " + std::to_string(base) + "^" + std::to_string(exp) +
                                             " entries exceeds the cap of " + std::to_string(cap));
    n *= base;
  }
  return n;
}

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

// Walks every tuple in index order, keeping the symbol counts current.
template <class Fn>
void for_each_tuple(int r, std::size_t q, Fn&& fn) {
  Tuple t(r, 0);
  std::vector<int> counts(q, 0);
  counts[0] = r;
  std::size_t index = 0;
  while (true) {
    fn(index, t, counts);
    ++index;
    int pos = r - 1;
    while (pos >= 0 && t[pos] == static_cast<int>(q) - 1) {
      --counts[t[pos]];
      t[pos] = 0;
      ++counts[0];
      --pos;
    }
    if (pos < 0) break;
    --counts[t[pos]];
    ++t[pos];
    ++counts[t[pos]];
  }
}

}  // namespace

Alphabet::Alphabet(std::size_t q) {
  if (q < 2) throw ConfigError("alphabet needs at least 2 symbols");
  for (std::size_t i = 0; i < q; ++i) labels_.push_back(std::to_string(i));
}

Alphabet::Alphabet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) throw ConfigError("alphabet needs at least 2 symbols");
  std::set<std::string> seen(labels_.begin(), labels_.end());
  if (seen.size() != labels_.size()) throw ConfigError("alphabet labels must be distinct");
}

std::optional<int> Alphabet::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return static_cast<int>(i);
  return std::nullopt;
}

FactorTable::FactorTable(int arity, Alphabet alphabet, std::vector<double> values, std::size_t max_entries) {
  if (arity < 1) throw ConfigError("factor arity must be positive");
  const std::size_t q = alphabet.size();
  const std::size_t n = checked_power(q, arity, max_entries);
  if (values.size() != n)
    throw ConfigError("factor table has " + std::to_string(values.size()) + " values, expected " + std::to_string(n));
  bool any_positive = false;
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("factor values must be finite and nonnegative");
    any_positive = any_positive || v > 0.0;
  }
  if (!any_positive) throw ConfigError("factor table is identically zero");

  auto d = std::make_shared<Data>(Data{arity, std::move(alphabet), std::move(values), true, 0.0, {}, {}});
  d->branch_sums.assign(q, 0.0);

  // Classes are keyed by the base-(r+1) encoding of the count vector when it fits.
  bool small_key = true;
  {
    double bits = static_cast<double>(q) * std::log2(static_cast<double>(arity) + 1.0);
    small_key = bits < 62.0;
  }
  std::unordered_map<std::uint64_t, std::size_t> small_index;
  std::map<std::vector<int>, std::size_t> large_index;
  std::vector<std::vector<int>> counts_list;
  std::vector<double> weight, first_value;

  for_each_tuple(arity, q, [&](std::size_t idx, const Tuple&, const std::vector<int>& c) {
    const double v = d->values[idx];
    d->total += v;
    for (std::size_t x = 0; x < q; ++x) d->branch_sums[x] += v * c[x];
    std::size_t cls;
    if (small_key) {
      std::uint64_t key = 0;
      for (std::size_t x = 0; x < q; ++x) key = key * static_cast<std::uint64_t>(arity + 1) + c[x];
      auto [it, inserted] = small_index.try_emplace(key, counts_list.size());
      cls = it->second;
      if (inserted) {
        counts_list.push_back(c);
        weight.push_back(0.0);
        first_value.push_back(v);
      }
    } else {
      auto [it, inserted] = large_index.try_emplace(c, counts_list.size());
      cls = it->second;
      if (inserted) {
        counts_list.push_back(c);
        weight.push_back(0.0);
        first_value.push_back(v);
      }
    }
    weight[cls] += v;
    if (d->perm_invariant) {
      const double ref = first_value[cls];
      if (std::abs(v - ref) > 1e-12 * std::max(std::abs(v), std::abs(ref))) d->perm_invariant = false;
    }
  });

  // Keep positive classes in lexicographic order of their count vectors.
  std::vector<std::size_t> order(counts_list.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return counts_list[a] < counts_list[b]; });
  CountProfile& prof = d->profile;
  for (std::size_t i : order) {
    if (!(weight[i] > 0.0)) continue;
    double lm = log_factorial(arity);
    for (int c : counts_list[i]) lm -= log_factorial(c);
    const double mult = std::round(std::exp(lm));
    prof.counts.push_back(counts_list[i]);
    prof.weight.push_back(weight[i]);
    prof.log_weight.push_back(std::log(weight[i]));
    prof.multiplicity.push_back(mult);
    prof.class_value.push_back(weight[i] / mult);
  }
  data_ = std::move(d);
}

bool FactorTable::uniform_branch_sums() const {
  const auto& s = data_->branch_sums;
  const double mx = *std::max_element(s.begin(), s.end());
  const double mn = *std::min_element(s.begin(), s.end());
  return mx - mn <= 1e-12 * mx;
}

std::size_t FactorTable::index_of(const Tuple& t) const {
  if (static_cast<int>(t.size()) != arity()) throw ConfigError("tuple length does not match factor arity");
  std::size_t idx = 0;
  for (int x : t) {
    if (x < 0 || static_cast<std::size_t>(x) >= q()) throw ConfigError("tuple symbol outside the alphabet");
    idx = idx * q() + static_cast<std::size_t>(x);
  }
  return idx;
}

Tuple FactorTable::tuple_of(std::size_t index) const {
  Tuple t(arity());
  for (int i = arity() - 1; i >= 0; --i) {
    t[i] = static_cast<int>(index % q());
    index /= q();
  }
  return t;
}

FactorTable build_factor_table(int arity, const Alphabet& alphabet, const std::map<Tuple, double>& entries,
                               std::size_t max_entries) {
  if (arity < 1) throw ConfigError("factor arity must be positive");
  const std::size_t q = alphabet.size();
  std::vector<double> values(checked_power(q, arity, max_entries), 0.0);
  for (const auto& [t, v] : entries) {
    if (static_cast<int>(t.size()) != arity) throw ConfigError("tuple length does not match factor arity");
    std::size_t idx = 0;
    for (int x : t) {
      if (x < 0 || static_cast<std::size_t>(x) >= q) throw ConfigError("tuple symbol outside the alphabet");
      idx = idx * q + static_cast<std::size_t>(x);
    }
    if (v < 0.0) throw ConfigError("factor values must be nonnegative");
    values[idx] = v;
  }
  return FactorTable(arity, alphabet, std::move(values), max_entries);
}

namespace {

template <class Pred>
FactorTable binary_by_weight(int r, Pred keep) {
  if (r < 1) throw ConfigError("factor arity must be positive");
  const std::size_t n = checked_power(2, r, kDefaultMaxEntries);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = keep(std::popcount(i)) ? 1.0 : 0.0;
  return FactorTable(r, Alphabet(2), std::move(values));
}

}  // namespace

FactorTable binary_csp_factor(int r, int k) {
  if (r < 2 || r % 2 != 0) throw ConfigError("binary CSP factor needs an even arity");
  if (k < 1 || k > r / 2) throw ConfigError("binary CSP parameter k must satisfy 1 <= k <= r/2");
  const int half = r / 2;
  return binary_by_weight(r, [=](int w) { return !(half - k < w && w < half + k); });
}

FactorTable parity_check_factor(int r) {
  return binary_by_weight(r, [](int w) { return w % 2 == 0; });
}

FactorTable not_equal_factor(std::size_t q) {
  std::vector<double> values(q * q, 1.0);
  for (std::size_t x = 0; x < q; ++x) values[x * q + x] = 0.0;
  return FactorTable(2, Alphabet(q), std::move(values));
}

FactorTable equality_factor(int r, std::size_t q) {
  const std::size_t n = checked_power(q, r, kDefaultMaxEntries);
  std::vector<double> values(n, 0.0);
  std::size_t step = 0;
  for (int i = 0; i < r; ++i) step = step * q + 1;  // index of (1,...,1)
  for (std::size_t x = 0; x < q; ++x) values[x * step] = 1.0;
  return FactorTable(r, Alphabet(q), std::move(values));
}

FactorTable ones_factor(int r, std::size_t q) {
  return FactorTable(r, Alphabet(q), std::vector<double>(checked_power(q, r, kDefaultMaxEntries), 1.0));
}

FactorTable replicate_factor(const FactorTable& f, int n, std::size_t max_entries) {
  if (n < 1) throw ConfigError("replica count must be positive");
  if (n == 1) return f;
  const std::size_t q = f.q();
  const int r = f.arity();
  const std::size_t qn = checked_power(q, n, max_entries);
  const std::size_t total = checked_power(qn, r, max_entries);

  std::vector<std::string> labels;
  for (std::size_t s = 0; s < qn; ++s) {
    std::string label;
    std::size_t rest = s;
    std::vector<std::string> parts(n);
    for (int i = n - 1; i >= 0; --i) {
      parts[i] = f.alphabet().labels()[rest % q];
      rest /= q;
    }
    for (int i = 0; i < n; ++i) label += (i ? ":" : "") + parts[i];
    labels.push_back(label);
  }

  // Replicated symbol s encodes (x^(1), ..., x^(n)) with replica 1 most significant.
  std::vector<double> values(total);
  std::vector<std::size_t> replica_index(n);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    std::fill(replica_index.begin(), replica_index.end(), 0);
    std::size_t place = 1;
    for (int pos = r - 1; pos >= 0; --pos) {
      std::size_t sym = rest % qn;
      rest /= qn;
      for (int i = n - 1; i >= 0; --i) {
        replica_index[i] += (sym % q) * place;
        sym /= q;
      }
      place *= q;
    }
    double v = 1.0;
    for (int i = 0; i < n && v != 0.0; ++i) v *= f.at(replica_index[i]);
    values[idx] = v;
  }
  return FactorTable(r, Alphabet(std::move(labels)), std::move(values), max_entries);
}

FactorTable read_factor_table(std::istream& in, std::size_t max_entries) {
  std::string line;
  int arity = 0;
  std::size_t q = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw ConfigError("factor file is empty");
  {
    std::istringstream hs(line);
    if (!(hs >> arity >> q)) throw ConfigError("factor file header must be 'arity q'");
  }
  if (q < 2) throw ConfigError("factor file alphabet size must be at least 2");
  Alphabet alphabet(q);
  std::map<Tuple, double> entries;
  while (next_line()) {
    std::istringstream ls(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
    if (static_cast<int>(tokens.size()) != arity + 1)
      throw ConfigError("factor file line '" + line + "' does not have arity+1 fields");
    Tuple t;
    for (int i = 0; i < arity; ++i) {
      auto x = alphabet.index_of(tokens[i]);
      if (!x) throw ConfigError("unknown symbol '" + tokens[i] + "' in factor file");
      t.push_back(*x);
    }
    double v;
    try {
      std::size_t used = 0;
      v = std::stod(tokens.back(), &used);
      if (used != tokens.back().size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ConfigError("bad factor value '" + tokens.back() + "'");
    }
    if (entries.count(t)) throw ConfigError("duplicate tuple in factor file");
    entries[t] = v;
  }
  return build_factor_table(arity, alphabet, entries, max_entries);
}

void write_factor_table(std::ostream& out, const FactorTable& f) {
  out << f.arity() << ' ' << f.q() << '\n';
  const auto prec = out.precision(17);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.at(i) == 0.0) continue;
    for (int x : f.tuple_of(i)) out << x << ' ';
    out << f.at(i) << '\n';
  }
  out.precision(prec);
}

void RegularSpec::validate() const {
  if (l < 1) throw ConfigError("variable degree l must be at least 1");
  if (r < 1) throw ConfigError("factor degree r must be at least 1");
  if (factor.arity() != r) throw ConfigError("factor arity does not match r");
}

namespace {

void check_distribution(const std::map<int, double>& m, const char* name) {
  if (m.empty()) throw ConfigError(std::string(name) + " degree distribution is empty");
  double s = 0.0;
  for (const auto& [deg, p] : m) {
    if (deg < 1) throw ConfigError(std::string(name) + " degrees must be at least 1");
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError(std::string(name) + " probabilities must be nonnegative");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError(std::string(name) + " degree distribution must sum to 1");
}

}  // namespace

void IrregularSpec::validate() const {
  check_distribution(L, "variable");
  check_distribution(R, "factor");
  std::optional<std::size_t> q;
  for (const auto& [j, p] : R) {
    if (p == 0.0) continue;
    auto it = factors.find(j);
    if (it == factors.end()) throw ConfigError("no factor table given for factor degree " + std::to_string(j));
    if (it->second.arity() != j) throw ConfigError("factor for degree " + std::to_string(j) + " has the wrong arity");
    if (q && *q != it->second.q()) throw ConfigError("factor tables use different alphabets");
    q = it->second.q();
  }
}

double IrregularSpec::mean_variable_degree() const {
  double s = 0.0;
  for (const auto& [i, p] : L) s += i * p;
  return s;
}

double IrregularSpec::mean_factor_degree() const {
  double s = 0.0;
  for (const auto& [j, p] : R) s += j * p;
  return s;
}

void PoissonSpec::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("factor density alpha must be positive");
  if (k < 1) throw ConfigError("factor degree k must be at least 1");
  if (factor.arity() != k) throw ConfigError("factor arity does not match k");
}

void FieldSpec::validate(std::size_t q) const {
  if (h.size() != q) throw ConfigError("field has " + std::to_string(h.size()) + " entries, expected " + std::to_string(q));
  bool any = false;
  for (double v : h) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("field values must be finite and nonnegative");
    any = any || v > 0.0;
  }
  if (!any) throw ConfigError("field is identically zero");
}

void RandomFieldSpec::validate(std::size_t q) const {
  if (fields.empty()) throw ConfigError("random field needs at least one field");
  if (fields.size() != probs.size()) throw ConfigError("random field needs one probability per field");
  double s = 0.0;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    fields[i].validate(q);
    if (!(probs[i] >= 0.0)) throw ConfigError("field probabilities must be nonnegative");
    s += probs[i];
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("field probabilities must sum to 1");
}

double design_rate(const RegularSpec& spec) {
  spec.validate();
  const FactorTable& f = spec.factor;
  if (!f.uniform_branch_sums())
    throw PreconditionError("branch sums S_x are not constant; the uniform point is not a fixed point");
  const double q = static_cast<double>(f.q());
  return std::log(q) + static_cast<double>(spec.l) / spec.r * (std::log(f.total()) - spec.r * std::log(q));
}

}  // namespace annealed
