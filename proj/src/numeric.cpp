#include "annealed/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

namespace annealed {

double log_sum_exp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  if (mx == kInf) return kInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

bool normalize_log(std::span<const double> logw, std::vector<double>& out) {
  out.assign(logw.size(), 0.0);
  double mx = kNegInf;
  for (double x : logw) mx = std::max(mx, x);
  if (mx == kNegInf || !std::isfinite(mx)) return false;
  double s = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    out[i] = std::exp(logw[i] - mx);
    s += out[i];
  }
  for (double& x : out) x /= s;
  return true;
}

bool normalize(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  if (!(s > 0.0) || !std::isfinite(s)) return false;
  for (double& x : v) x /= s;
  return true;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

std::vector<double> log_vector(std::span<const double> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? std::log(v[i]) : kNegInf;
  return out;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

std::vector<double> random_simplex_point(std::size_t q, std::mt19937_64& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> p(q);
  for (double& x : p) x = expo(rng);
  normalize(p);
  return p;
}

std::vector<double> uniform_vector(std::size_t q) {
  return std::vector<double>(q, 1.0 / static_cast<double>(q));
}

std::vector<std::vector<int>> compositions(int total, int parts) {
  std::vector<std::vector<int>> out;
  if (parts <= 0) return out;
  std::vector<int> cur(parts, 0);
  std::function<void(int, int)> rec = [&](int pos, int left) {
    if (pos == parts - 1) {
      cur[pos] = left;
      out.push_back(cur);
      return;
    }
    for (int c = left; c >= 0; --c) {
      cur[pos] = c;
      rec(pos + 1, left - c);
    }
  };
  rec(0, total);
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<std::vector<double>> simplex_grid(std::size_t q, int resolution) {
  std::vector<std::vector<double>> grid;
  for (const auto& c : compositions(resolution, static_cast<int>(q))) {
    std::vector<double> p(q);
    for (std::size_t i = 0; i < q; ++i) p[i] = static_cast<double>(c[i]) / resolution;
    grid.push_back(std::move(p));
  }
  return grid;
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return std::round(b);
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace annealed
