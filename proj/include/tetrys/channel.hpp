#pragma once

#include <cmath>
#include <stdexcept>
#include <variant>

#include "tetrys/splitmix.hpp"

namespace tetrys {

// Two-state loss process. p1 = P(loss | previous packet received),
// p2 = P(loss | previous packet lost). Mean loss rate p1/(1+p1-p2), mean
// burst length 1/(1-p2).
struct GeParams {
  double p1 = 0.0;
  double p2 = 0.0;

  double plr() const noexcept { return p1 / (1.0 + p1 - p2); }
  double mean_burst() const noexcept { return 1.0 / (1.0 - p2); }
};

inline GeParams ge_params_from(double plr, double burst) {
  if (!(plr > 0.0 && plr < 1.0)) throw std::domain_error("loss rate must lie in (0, 1)");
  if (!(burst >= 1.0) || !std::isfinite(burst)) throw std::domain_error("mean burst must be >= 1");
  const double p2 = 1.0 - 1.0 / burst;
  const double p1 = plr * (1.0 - p2) / (1.0 - plr);
  if (p1 < 0.0 || p1 >= 1.0 || p2 >= 1.0) {
    throw std::domain_error("loss rate and burst length are not jointly achievable");
  }
  return {p1, p2};
}

struct Bernoulli {
  double p = 0.0;
};

using ChannelSpec = std::variant<Bernoulli, GeParams>;

class Channel {
 public:
  Channel(ChannelSpec spec, std::uint64_t seed) : spec_(spec), rng_(seed) {
    std::visit(
        [](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Bernoulli>) {
            if (!(s.p >= 0.0 && s.p <= 1.0)) throw std::domain_error("loss probability outside [0,1]");
          } else {
            if (!(s.p1 >= 0.0 && s.p1 <= 1.0 && s.p2 >= 0.0 && s.p2 < 1.0)) {
              throw std::domain_error("Gilbert-Elliott parameters outside [0,1)");
            }
          }
        },
        spec_);
  }

  // True when the packet is lost.
  bool step() noexcept {
    const double u = rng_.uniform();
    if (const auto* b = std::get_if<Bernoulli>(&spec_)) return u < b->p;
    const auto& g = std::get<GeParams>(spec_);
    last_lost_ = u < (last_lost_ ? g.p2 : g.p1);
    return last_lost_;
  }

  const ChannelSpec& spec() const noexcept { return spec_; }

 private:
  ChannelSpec spec_;
  SplitMix64 rng_;
  bool last_lost_ = false;
};

}  // namespace tetrys
