#pragma once

// Idealized MDS (n, k) block code used as a comparison baseline. Any k of
// the n symbols of a block recover it, so delivery is a counting outcome.
// Positions 0..k-1 carry sources, k..n-1 repairs; position i is received
// i time units after the block starts.

#include <algorithm>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace tetrys {

struct FecConfig {
  unsigned k = 4;
  unsigned n = 5;

  void validate() const {
    if (k < 1 || n <= k) throw std::invalid_argument("FEC block needs 1 <= k < n");
  }
};

// Per source position: delivery delay in time units, nullopt if lost for good.
inline std::vector<std::optional<int>> fec_block_outcome(const FecConfig& cfg,
                                                         std::span<const bool> lost) {
  cfg.validate();
  if (lost.size() != cfg.n) throw std::invalid_argument("loss flags must cover one block");
  std::vector<std::optional<int>> out(cfg.k);
  std::optional<int> complete_at;
  unsigned received = 0;
  for (unsigned i = 0; i < cfg.n; ++i) {
    if (!lost[i] && ++received == cfg.k) {
      complete_at = static_cast<int>(i);
      break;
    }
  }
  for (unsigned j = 0; j < cfg.k; ++j) {
    if (!lost[j]) {
      out[j] = 0;
    } else if (complete_at) {
      out[j] = *complete_at - static_cast<int>(j);
    }
  }
  return out;
}

// All source delays over a trace of whole blocks.
inline std::vector<std::optional<int>> fec_trace_delays(const FecConfig& cfg,
                                                        std::span<const bool> trace) {
  cfg.validate();
  if (trace.size() % cfg.n != 0) throw std::invalid_argument("trace length must be a multiple of n");
  std::vector<std::optional<int>> out;
  out.reserve(trace.size() / cfg.n * cfg.k);
  for (std::size_t b = 0; b < trace.size(); b += cfg.n) {
    const auto blk = fec_block_outcome(cfg, trace.subspan(b, cfg.n));
    out.insert(out.end(), blk.begin(), blk.end());
  }
  return out;
}

// Empirical CDF of the delays at each grid point. Lost packets count in the
// denominator only, so the curve plateaus below 1 when any are lost.
inline std::vector<double> delay_cdf(std::span<const std::optional<int>> delays,
                                     std::span<const int> grid) {
  std::vector<double> out(grid.size(), 0.0);
  if (delays.empty()) return out;
  int max_d = 0;
  for (const auto& d : delays) {
    if (d) max_d = std::max(max_d, *d);
  }
  std::vector<std::size_t> hist(static_cast<std::size_t>(max_d) + 1, 0);
  for (const auto& d : delays) {
    if (d) ++hist[static_cast<std::size_t>(*d)];
  }
  std::vector<std::size_t> cum(hist.size());
  std::size_t acc = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) cum[i] = acc += hist[i];
  const double total = static_cast<double>(delays.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (grid[g] < 0) continue;
    const auto idx = std::min(static_cast<std::size_t>(grid[g]), cum.size() - 1);
    out[g] = static_cast<double>(cum[idx]) / total;
  }
  return out;
}

inline std::vector<double> fec_delay_cdf(const FecConfig& cfg, std::span<const bool> trace,
                                         std::span<const int> grid) {
  const auto delays = fec_trace_delays(cfg, trace);
  return delay_cdf(delays, grid);
}

}  // namespace tetrys
