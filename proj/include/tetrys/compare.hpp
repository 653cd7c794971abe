#pragma once

// Tetrys against block FEC on one loss trace. The FEC trace is the data
// channel's draw sequence from the Tetrys run, so both see the same losses
// slot for slot.

#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "tetrys/fecblock.hpp"
#include "tetrys/sim.hpp"

namespace tetrys {

struct FecCurve {
  FecConfig code;
  std::vector<double> cdf;  // on Comparison::grid
};

struct Comparison {
  std::vector<int> grid;  // delays 0..max, in slots
  std::vector<double> tetrys;
  std::vector<FecCurve> fec;
  SimMetrics metrics;  // of the Tetrys run
};

inline Comparison compare_fec(const SimConfig& cfg, std::span<const FecConfig> codes) {
  std::size_t block_lcm = 1;
  for (const auto& c : codes) {
    c.validate();
    block_lcm = std::lcm(block_lcm, static_cast<std::size_t>(c.n));
  }

  Comparison out;
  out.metrics = run_simulation(cfg);
  std::vector<std::optional<int>> delays;
  delays.reserve(out.metrics.availability_delay.size());
  int max_delay = 0;
  for (int d : out.metrics.availability_delay) {
    if (d == kNeverDelivered) {
      delays.emplace_back();
    } else {
      delays.emplace_back(d);
      max_delay = std::max(max_delay, d);
    }
  }
  for (const auto& c : codes) max_delay = std::max(max_delay, static_cast<int>(c.n) - 1);
  out.grid.resize(static_cast<std::size_t>(max_delay) + 1);
  std::iota(out.grid.begin(), out.grid.end(), 0);
  out.tetrys = delay_cdf(delays, out.grid);
  if (codes.empty()) return out;

  const std::size_t main_slots = cfg.n_source + cfg.n_source / cfg.k;
  const std::size_t len = main_slots / block_lcm * block_lcm;
  if (len == 0) throw std::invalid_argument("run too short for one block of every FEC code");
  Channel ch(cfg.data, stream_seed(cfg.seed, SimStream::data_channel));
  const auto lost = std::make_unique<bool[]>(len);
  for (std::size_t i = 0; i < len; ++i) lost[i] = ch.step();
  const std::span<const bool> trace(lost.get(), len);
  for (const auto& c : codes) out.fec.push_back({c, fec_delay_cdf(c, trace, out.grid)});
  return out;
}

}  // namespace tetrys
