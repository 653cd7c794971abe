#pragma once

// Analytical model of Tetrys over a Bernoulli(p) channel with one repair
// every k sources.
//
// Y_n counts lost sources not yet covered by a received repair after block
// n. Per block Y moves by X = (losses among k+1 packets) - 1 and is
// reflected at 0, giving a skip-free-to-the-left random walk that is
// positive recurrent iff 1/(k+1) > p. Hitting times of 0 yield the decoding
// delay, recurrence time and matrix size distributions, all measured in
// packet transmission slots.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "tetrys/stats.hpp"

namespace tetrys::markov {

inline double log_binom(unsigned n, unsigned u) {
  return std::lgamma(n + 1.0) - std::lgamma(u + 1.0) - std::lgamma(n - u + 1.0);
}

// P(Bin(n, p) = u), evaluated in log space.
inline double binom_pmf(unsigned n, unsigned u, double p) {
  if (u > n) return 0.0;
  if (p <= 0.0) return u == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return u == n ? 1.0 : 0.0;
  return std::exp(log_binom(n, u) + u * std::log(p) + (n - u) * std::log1p(-p));
}

// out[u] = P(X = u - 1), u = 0..k+1.
inline std::vector<double> x_distribution(unsigned k, double p) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(p >= 0.0 && p < 1.0)) throw std::domain_error("loss probability must lie in [0, 1)");
  std::vector<double> x(k + 2);
  for (unsigned u = 0; u <= k + 1; ++u) x[u] = binom_pmf(k + 1, u, p);
  return x;
}

inline bool positive_recurrent(unsigned k, double p) noexcept { return 1.0 / (k + 1) > p; }

struct NotPositiveRecurrent : std::domain_error {
  NotPositiveRecurrent()
      : std::domain_error("redundancy does not exceed the loss rate; the chain is not positive recurrent") {}
};

// Banded transition matrix of Y on {0..y_max}; mass above y_max is folded
// into y_max.
class YChain {
 public:
  YChain(unsigned k, double p, std::size_t y_max) : k_(k), p_(p), y_max_(y_max), x_(x_distribution(k, p)) {
    if (y_max < 1) throw std::invalid_argument("y_max must be at least 1");
  }

  unsigned k() const noexcept { return k_; }
  double p() const noexcept { return p_; }
  std::size_t y_max() const noexcept { return y_max_; }
  const std::vector<double>& x_pmf() const noexcept { return x_; }
  bool positive_recurrent() const noexcept { return markov::positive_recurrent(k_, p_); }

  double a(std::size_t i, std::size_t j) const noexcept {
    if (i > y_max_ || j > y_max_) return 0.0;
    double s = 0;
    for (std::size_t u = 0; u < x_.size(); ++u) {
      if (target(i, u) == j) s += x_[u];
    }
    return s;
  }

  // One step of the distribution: out = in * A.
  void step(const std::vector<double>& in, std::vector<double>& out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i <= y_max_; ++i) {
      if (in[i] == 0.0) continue;
      for (std::size_t u = 0; u < x_.size(); ++u) {
        out[target(i, u)] += in[i] * x_[u];
      }
    }
  }

  // g_s = sum_{j>=1} a(s, j) f_j for s >= 1; g_0 = 0.
  void first_passage_step(const std::vector<double>& f, std::vector<double>& g) const {
    g[0] = 0.0;
    for (std::size_t s = 1; s <= y_max_; ++s) {
      double v = 0;
      for (std::size_t u = 0; u < x_.size(); ++u) {
        if (const std::size_t j = target(s, u); j != 0) v += x_[u] * f[j];
      }
      g[s] = v;
    }
  }

 private:
  // State reached from i when u of the k+1 packets are lost.
  std::size_t target(std::size_t i, std::size_t u) const noexcept {
    return std::min(y_max_, i + u == 0 ? 0 : i + u - 1);
  }

  unsigned k_;
  double p_;
  std::size_t y_max_;
  std::vector<double> x_;
};

// Power iteration to an L1 residual of 1e-12, starting from the point mass
// at 0.
inline std::vector<double> stationary(const YChain& chain, std::size_t max_iter = 5'000'000) {
  if (!chain.positive_recurrent()) throw NotPositiveRecurrent();
  std::vector<double> pi(chain.y_max() + 1, 0.0), next(pi.size());
  pi[0] = 1.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    chain.step(pi, next);
    double diff = 0;
    for (std::size_t i = 0; i < pi.size(); ++i) diff += std::abs(next[i] - pi[i]);
    pi.swap(next);
    if (diff < 1e-12) {
      double s = 0;
      for (double v : pi) s += v;
      for (double& v : pi) v /= s;
      return pi;
    }
  }
  throw std::runtime_error("stationary distribution did not converge");
}

// Chain whose truncation holds less than `tail` stationary mass.
inline YChain build_chain(unsigned k, double p, std::size_t y_max = 0, double tail = 1e-9) {
  if (!positive_recurrent(k, p)) throw NotPositiveRecurrent();
  if (y_max != 0) return YChain(k, p, y_max);
  for (std::size_t y = 32;; y *= 2) {
    YChain c(k, p, y);
    const auto pi = stationary(c);
    if (pi.back() < tail || p == 0.0) return c;
    if (y > (std::size_t{1} << 20)) throw std::runtime_error("chain truncation did not converge");
  }
}

// P(H_i = h) for h = 0..h_max: steps needed to first reach 0 from i.
// H_0 = 0 by convention.
inline std::vector<double> hitting_time(const YChain& chain, std::size_t i, std::size_t h_max) {
  if (i > chain.y_max()) throw std::out_of_range("start state beyond truncation");
  std::vector<double> out(h_max + 1, 0.0);
  if (i == 0) {
    out[0] = 1.0;
    return out;
  }
  const std::size_t n = chain.y_max() + 1;
  std::vector<double> f(n), g(n);
  for (std::size_t s = 1; s < n; ++s) f[s] = chain.a(s, 0);
  if (h_max >= 1) out[1] = f[i];
  for (std::size_t h = 2; h <= h_max; ++h) {
    chain.first_passage_step(f, g);
    f.swap(g);
    out[h] = f[i];
  }
  return out;
}

struct ModelResult {
  unsigned k = 0;
  double p = 0;
  std::vector<double> stationary;
  std::vector<Pmf> delay_by_position;  // index j = 0..k-1
  Pmf delay;                           // positions pooled uniformly
  Pmf recurrence;
  Pmf matrix_size;
  std::size_t h_max = 0;
  double stationary_tail = 0;
  double delay_tail = 0;       // probability mass lost to the h truncation
  double recurrence_tail = 0;

  double mean_y() const {
    double s = 0;
    for (std::size_t y = 0; y < stationary.size(); ++y) s += static_cast<double>(y) * stationary[y];
    return s;
  }
};

// Evaluates every distribution with h grown until the truncated hitting
// mass falls below `tail`.
inline ModelResult analyze(unsigned k, double p, double tail = 1e-6, std::size_t h_cap = 2'000'000) {
  ModelResult r;
  r.k = k;
  r.p = p;
  const YChain chain = build_chain(k, p);
  r.stationary = stationary(chain);
  r.stationary_tail = r.stationary.back();
  const std::size_t n = chain.y_max() + 1;
  const auto& pi = r.stationary;

  // Position-independent part of the decoding delay: loss count among the
  // k other slots of the block.
  std::vector<double> cu(k + 1);
  for (unsigned u = 0; u <= k; ++u) cu[u] = binom_pmf(k, u, p);
  // Weight of each start state for the delay: sum_y sum_u cu[u] pi[y] at y+u.
  std::vector<double> w_delay(n, 0.0);
  for (std::size_t y = 0; y < n; ++y) {
    for (unsigned u = 0; u <= k; ++u) w_delay[std::min(n - 1, y + u)] += cu[u] * pi[y];
  }
  if (p == 0.0) {
    // Every slot arrives: delays sit at their block offset and no loss
    // starts a recurrence.
    r.delay_by_position.assign(k, Pmf{});
    for (unsigned j = 0; j < k; ++j) {
      r.delay_by_position[j][static_cast<long>(k - j)] = 1.0;
      r.delay[static_cast<long>(k - j)] += 1.0 / k;
    }
    return r;
  }
  // Recurrence: norm * sum_u C(k-j,u) p^{u+1} (1-p)^{k-u} at start state u.
  const double q = 1.0 - p;
  const double norm = 1.0 / (1.0 - std::pow(q, k));
  std::vector<std::vector<double>> w_rec(k, std::vector<double>(k + 1, 0.0));
  for (unsigned j = 0; j < k; ++j) {
    for (unsigned u = 0; u <= k - j; ++u) {
      w_rec[j][u] = norm * std::exp(log_binom(k - j, u)) * std::pow(p, u + 1) * std::pow(q, k - u);
    }
  }

  std::vector<double> delay_h, rec_h;  // mass at each h, positions merged
  std::vector<std::vector<double>> rec_jh(k);
  auto accumulate = [&](const std::vector<double>& f) {
    double d = 0;
    for (std::size_t s = 0; s < n; ++s) d += w_delay[s] * f[s];
    delay_h.push_back(d);
    double rsum = 0;
    for (unsigned j = 0; j < k; ++j) {
      double v = 0;
      for (unsigned u = 0; u <= k - j && u < n; ++u) v += w_rec[j][u] * f[u];
      rec_jh[j].push_back(v);
      rsum += v;
    }
    rec_h.push_back(rsum);
  };

  std::vector<double> f(n, 0.0), g(n);
  f[0] = 1.0;  // h = 0
  accumulate(f);
  f[0] = 0.0;
  for (std::size_t s = 1; s < n; ++s) f[s] = chain.a(s, 0);
  double delay_mass = delay_h[0], rec_mass = rec_h[0];
  for (std::size_t h = 1;; ++h) {
    accumulate(f);
    delay_mass += delay_h.back();
    rec_mass += rec_h.back();
    if ((1.0 - delay_mass < tail && 1.0 - rec_mass < tail) || h >= h_cap) break;
    chain.first_passage_step(f, g);
    f.swap(g);
  }
  r.h_max = delay_h.size() - 1;
  r.delay_tail = std::max(0.0, 1.0 - delay_mass);
  r.recurrence_tail = std::max(0.0, 1.0 - rec_mass);

  const long kk = k;
  r.delay_by_position.assign(k, Pmf{});
  for (unsigned j = 0; j < k; ++j) {
    for (std::size_t h = 0; h < delay_h.size(); ++h) {
      const long d = kk - static_cast<long>(j) + static_cast<long>(h) * (kk + 1);
      r.delay_by_position[j][d] = delay_h[h];
      r.delay[d] += delay_h[h] / k;
      r.recurrence[d] += rec_jh[j][h];
    }
  }

  // Matrix size: during a recurrence with h extra blocks, each of the h
  // repairs arrives with probability 1-p, plus the repair that completes
  // the decoding.
  for (std::size_t h = 0; h < rec_h.size(); ++h) {
    if (rec_h[h] < 1e-300) continue;
    const auto hh = static_cast<unsigned>(h);
    for (unsigned i = 0; i <= hh; ++i) {
      const double b = binom_pmf(hh, i, q);
      if (b > 0) r.matrix_size[static_cast<long>(i) + 1] += rec_h[h] * b;
    }
  }
  return r;
}

inline Pmf decoding_delay_dist(unsigned k, double p, unsigned j) {
  if (j >= k) throw std::out_of_range("position must lie in [0, k)");
  return analyze(k, p).delay_by_position[j];
}

inline Pmf recurrence_dist(unsigned k, double p) { return analyze(k, p).recurrence; }

inline Pmf matrix_size_dist(unsigned k, double p) { return analyze(k, p).matrix_size; }

struct BufferExpectation {
  double bs = 0;   // sender window
  double brs = 0;  // receiver source buffer
  double brr = 0;  // receiver repair buffer
};

// rtt in slots; a SACK every s*rtt slots.
inline BufferExpectation expected_buffers(const ModelResult& m, double s, double rtt) {
  const double k = m.k, p = m.p;
  const double share = k / (k + 1);
  BufferExpectation e;
  e.bs = rtt * share * (s / 2 + s / (1 - p)) + m.mean_y();
  e.brs = share * (1 - p) * (rtt + (k + 1 + s * rtt) * (0.5 + 1 / (1 - p)));
  double num = 0;
  for (const auto& [u, prob] : m.recurrence) {
    const long h = u / static_cast<long>(m.k + 1);  // u = k-j+h(k+1), 1 <= k-j <= k
    if (h > 0) num += (1 - p) * static_cast<double>(h) * static_cast<double>(u) * prob;
  }
  e.brr = num / (2 * m.stationary.at(0));
  return e;
}

inline BufferExpectation expected_buffers(unsigned k, double p, double s, double rtt) {
  return expected_buffers(analyze(k, p), s, rtt);
}

}  // namespace tetrys::markov
