#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace tetrys {

struct Summary {
  double min = 0;
  double max = 0;
  double mean = 0;
  std::vector<double> quantiles;  // same order as the requested percentiles
};

// Nearest-rank percentile: the ceil(q/100 * N)-th smallest value.
inline double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("percentile of an empty series");
  if (q < 0 || q > 100) throw std::invalid_argument("percentile outside [0, 100]");
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

inline Summary percentiles(std::span<const double> series, std::span<const double> qs) {
  if (series.empty()) throw std::invalid_argument("percentiles of an empty series");
  std::vector<double> v(series.begin(), series.end());
  std::sort(v.begin(), v.end());
  Summary s;
  s.min = v.front();
  s.max = v.back();
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double q : qs) s.quantiles.push_back(percentile_sorted(v, q));
  return s;
}

inline constexpr double kFigurePercentiles[] = {5, 10, 25, 50, 75, 90, 95};

// Probability mass function over integer values.
using Pmf = std::map<long, double>;

template <typename Int>
Pmf empirical_pmf(std::span<const Int> samples) {
  Pmf pmf;
  if (samples.empty()) return pmf;
  for (Int v : samples) pmf[static_cast<long>(v)] += 1.0;
  const double n = static_cast<double>(samples.size());
  for (auto& [v, p] : pmf) p /= n;
  return pmf;
}

inline double pmf_mass(const Pmf& p) {
  double s = 0;
  for (const auto& [v, m] : p) s += m;
  return s;
}

inline double pmf_mean(const Pmf& p) {
  double s = 0;
  for (const auto& [v, m] : p) s += static_cast<double>(v) * m;
  return s;
}

inline double total_variation(const Pmf& a, const Pmf& b) {
  double s = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      s += std::abs(ia++->second);
    } else if (ia == a.end() || ib->first < ia->first) {
      s += std::abs(ib++->second);
    } else {
      s += std::abs(ia++->second - ib++->second);
    }
  }
  return 0.5 * s;
}

template <typename T>
double mean_of(std::span<const T> v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (T x : v) s += static_cast<double>(x);
  return s / static_cast<double>(v.size());
}

enum class KsMode {
  both_sides,  // sup over both sides of every jump
  at_atoms,    // only at the observed values, for lattice-valued samples
};

// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and `cdf`.
template <typename Cdf>
double ks_distance(std::span<const double> samples, Cdf&& cdf, KsMode mode = KsMode::both_sides) {
  if (samples.empty()) throw std::invalid_argument("KS distance of an empty sample");
  std::vector<double> v(samples.begin(), samples.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    const double f = cdf(v[i]);
    d = std::max(d, std::abs(static_cast<double>(j) / n - f));
    if (mode == KsMode::both_sides) d = std::max(d, std::abs(static_cast<double>(i) / n - f));
    i = j;
  }
  return d;
}

}  // namespace tetrys
