#pragma once

// Redundancy allocation from a Weibull model of the recovery delay of lost
// packets. Shape and scale are linear-in-margin fits indexed by channel
// class and block length, where the margin is 1/n - p.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tetrys::alloc {

struct WeibullParams {
  double scale = 1;  // lambda, in packets
  double shape = 1;  // kappa

  double cdf(double x) const noexcept {
    if (x <= 0) return 0.0;
    return -std::expm1(-std::pow(x / scale, shape));
  }

  // Smallest x with cdf(x) >= f, for f in [0, 1).
  double quantile(double f) const {
    if (!(f >= 0 && f < 1)) throw std::domain_error("Weibull quantile needs f in [0, 1)");
    return scale * std::pow(-std::log1p(-f), 1.0 / shape);
  }
};

enum class ChannelClass { ber, b2, b3 };

inline ChannelClass parse_channel_class(const std::string& s) {
  if (s == "ber") return ChannelClass::ber;
  if (s == "b2") return ChannelClass::b2;
  if (s == "b3") return ChannelClass::b3;
  throw std::invalid_argument("unknown channel class '" + s + "' (expected ber, b2 or b3)");
}

inline const char* to_string(ChannelClass c) noexcept {
  switch (c) {
    case ChannelClass::ber: return "ber";
    case ChannelClass::b2: return "b2";
    case ChannelClass::b3: return "b3";
  }
  return "?";
}

// How the table index relates to the block length n = 1/R.
enum class TableIndex {
  block_length,  // N = n
  sources,       // N = n - 1
};

struct LinearCoeff {
  double a = 0;
  double b = 0;
  bool operator==(const LinearCoeff&) const = default;
};

inline constexpr std::size_t kTableRows = 7;

// Per channel class, rows N = 1..7.
struct CoeffTables {
  std::array<std::array<LinearCoeff, kTableRows>, 3> shape{};
  std::array<std::array<LinearCoeff, kTableRows>, 3> scale{};
  bool operator==(const CoeffTables&) const = default;

  static const CoeffTables& builtin() {
    static const CoeffTables t = [] {
      CoeffTables c;
      const double sa[3][7] = {{0.72, 1.25, 2.0, 2.65, 3.44, 3.866, 5.6},
                               {0.48, 1.31, 1.92, 2.15, 3.69, 5.15, 4},
                               {0.62, 1.8, 2.8, 4, 4.54, 5.5, 5.4}};
      const double sb[3][7] = {{0.473, 0.51, 0.512, 0.525, 0.53, 0.55, 0.46},
                               {0.57, 0.6, 0.61, 0.62, 0.56, 0.48, 0.67},
                               {0.65, 0.61, 0.57, 0.53, 0.6, 0.62, 0.72}};
      const double la[3][7] = {{0.83, 0.35, 0.35, 0.35, 0.35, 0.35, 0.35},
                               {4.2, 7.15, 9.9, 10.48, 5.6, 2.7, 6.3},
                               {11.8, 11.4, 18.2, 9.3, 7.1, 19.1, 36}};
      const double lb[3][7] = {{1.815, 2, 2, 2, 2, 2, 2},
                               {1.14, 1.35, 1.3, 1.3, 1.65, 1.94, 1.57},
                               {1.04, 1.44, 1.3, 1.6, 1.7, 1.28, 1.05}};
      for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t n = 0; n < kTableRows; ++n) {
          c.shape[ch][n] = {sa[ch][n], sb[ch][n]};
          c.scale[ch][n] = {la[ch][n], lb[ch][n]};
        }
      }
      return c;
    }();
    return t;
  }

  // CSV with header `kind,channel,N,a,b`, kind in {shape, scale}.
  static CoeffTables load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open coefficient file " + path);
    CoeffTables c;
    std::array<std::array<bool, kTableRows>, 6> filled{};
    std::string line;
    std::getline(in, line);
    if (line.rfind("kind,channel,N,a,b", 0) != 0) throw std::runtime_error("unexpected coefficient header");
    while (std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      std::stringstream ss(line);
      std::string kind, channel, n_str, a_str, b_str;
      std::getline(ss, kind, ',');
      std::getline(ss, channel, ',');
      std::getline(ss, n_str, ',');
      std::getline(ss, a_str, ',');
      std::getline(ss, b_str, ',');
      const auto ch = static_cast<std::size_t>(parse_channel_class(channel));
      const int n = std::stoi(n_str);
      if (n < 1 || n > static_cast<int>(kTableRows)) throw std::runtime_error("table index out of range");
      const LinearCoeff v{std::stod(a_str), std::stod(b_str)};
      const auto row = static_cast<std::size_t>(n - 1);
      if (kind == "shape") {
        c.shape[ch][row] = v;
        filled[ch][row] = true;
      } else if (kind == "scale") {
        c.scale[ch][row] = v;
        filled[3 + ch][row] = true;
      } else {
        throw std::runtime_error("unknown coefficient kind " + kind);
      }
    }
    for (const auto& t : filled) {
      for (bool f : t) {
        if (!f) throw std::runtime_error("coefficient file is missing entries");
      }
    }
    return c;
  }
};

struct Infeasible : std::domain_error {
  using std::domain_error::domain_error;
};

struct Unsupported : std::out_of_range {
  using std::out_of_range::out_of_range;
};

inline std::size_t table_row(unsigned n, TableIndex idx) {
  const long N = idx == TableIndex::block_length ? static_cast<long>(n) : static_cast<long>(n) - 1;
  if (N < 1 || N > static_cast<long>(kTableRows)) {
    throw Unsupported("no coefficients for block length n=" + std::to_string(n));
  }
  return static_cast<std::size_t>(N - 1);
}

// Weibull model of the recovery delay at redundancy 1/n and loss rate p.
inline WeibullParams shape_scale(unsigned n, double p, ChannelClass c,
                                 TableIndex idx = TableIndex::block_length,
                                 const CoeffTables& tables = CoeffTables::builtin()) {
  if (n < 1) throw std::invalid_argument("block length must be at least 1");
  const double margin = 1.0 / n - p;
  if (!(margin > 0)) throw Infeasible("redundancy does not exceed the loss rate");
  const std::size_t row = table_row(n, idx);
  const auto ch = static_cast<std::size_t>(c);
  const LinearCoeff sh = tables.shape[ch][row];
  const LinearCoeff sc = tables.scale[ch][row];
  return {sc.a / std::pow(margin, sc.b), sh.a * margin + sh.b};
}

struct AppRequest {
  double pkt_min = 0.95;  // required on-time fraction
  double d_max = 0.3;     // deadline, s
  double interval = 0.01; // time between packets, s
  double one_way = 0.1;   // one-way delay, s
  double p = 0.0;         // loss rate
  ChannelClass channel = ChannelClass::ber;
  TableIndex index = TableIndex::block_length;
};

// Delivery-time CDF at time t for redundancy 1/n: received packets arrive
// at exactly one_way, lost ones one_way plus a Weibull number of intervals.
inline double theta_cdf(double t, const AppRequest& req, unsigned n) {
  if (t < req.one_way) return 0.0;
  if (req.p <= 0) return 1.0;
  const WeibullParams w = shape_scale(n, req.p, req.channel, req.index);
  return (1 - req.p) + req.p * w.cdf((t - req.one_way) / req.interval);
}

// Smallest t with theta_cdf(t) >= q.
inline double theta_quantile(double q, const AppRequest& req, unsigned n) {
  if (!(q > 0 && q < 1)) throw std::domain_error("quantile level must lie in (0, 1)");
  if (q <= 1 - req.p) return req.one_way;
  const WeibullParams w = shape_scale(n, req.p, req.channel, req.index);
  return req.one_way + req.interval * w.quantile((q - (1 - req.p)) / req.p);
}

inline bool psi(const AppRequest& req, unsigned n) {
  if (req.pkt_min <= 0) return true;
  if (req.d_max < req.one_way) return false;
  if (!(1.0 / n - req.p > 0)) return 1 - req.p >= req.pkt_min;
  return theta_cdf(req.d_max, req, n) >= req.pkt_min;
}

// Candidate block lengths, largest first (smallest redundancy first).
inline std::vector<unsigned> redundancy_grid(TableIndex idx = TableIndex::block_length) {
  std::vector<unsigned> g;
  const unsigned largest = idx == TableIndex::block_length ? kTableRows : kTableRows + 1;
  const unsigned smallest = idx == TableIndex::block_length ? 1 : 2;
  for (unsigned n = largest; n >= smallest; --n) g.push_back(n);
  return g;
}

// Block length n of the smallest feasible redundancy 1/n, or nullopt.
inline std::optional<unsigned> r_min(const AppRequest& req) {
  for (unsigned n : redundancy_grid(req.index)) {
    if (!(1.0 / n - req.p > 0)) continue;
    if (psi(req, n)) return n;
  }
  return std::nullopt;
}

// Least-squares fit of ln(-ln(1-F)) = shape*ln x - shape*ln scale with
// median-rank plotting positions F_i = (i - 0.3)/(N + 0.4). Tied samples form
// one point, ranked at the last member of the tie.
inline WeibullParams fit_weibull(std::span<const double> samples) {
  if (samples.size() < 100) throw std::invalid_argument("Weibull fit needs at least 100 samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  if (x.front() <= 0) throw std::invalid_argument("Weibull fit needs positive samples");
  if (x.front() == x.back()) throw std::invalid_argument("Weibull fit on degenerate samples");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, points = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i + 1 < x.size() && x[i + 1] == x[i]) continue;
    const double f = (static_cast<double>(i + 1) - 0.3) / (n + 0.4);
    const double lx = std::log(x[i]);
    const double ly = std::log(-std::log1p(-f));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    points += 1;
  }
  const double slope = (points * sxy - sx * sy) / (points * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / points;
  if (!(slope > 0)) throw std::runtime_error("Weibull fit produced a non-positive shape");
  return {std::exp(-intercept / slope), slope};
}

}  // namespace tetrys::alloc
