#pragma once

// Experiment runner. Each subcommand writes CSV tables with a header row
// and a manifest.txt recording the version and every flag, so a run can be
// repeated byte for byte.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <type_traits>
#include <vector>

#include "tetrys/tetrys.hpp"

#ifndef TETRYS_VERSION
#define TETRYS_VERSION "unknown"
#endif

namespace tetrys::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Flags that parse but do not describe a runnable experiment.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::initializer_list<std::string_view> header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    write_row(std::vector<std::string>(header.begin(), header.end()));
  }

  template <typename... T>
  void row(const T&... cells) {
    write_row({cell(cells)...});
  }

  void write_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
    if (!out_) throw std::runtime_error("write failed");
  }

 private:
  template <typename T>
  static std::string cell(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
      return v ? "1" : "0";
    } else if constexpr (std::is_integral_v<T>) {
      return std::to_string(v);
    } else if constexpr (std::is_floating_point_v<T>) {
      return num(v);
    } else if constexpr (std::is_same_v<T, std::optional<double>>) {
      return v ? num(*v) : std::string();
    } else {
      return std::string(v);
    }
  }

  std::ofstream out_;
};

struct FlowFlags {
  unsigned k = 3;
  double redundancy = 0;  // alternative to k: 1/(k+1)
  unsigned field = 256;
  double plr = 0.1;
  double burst = 1.0;     // 1: Bernoulli losses
  double ack_plr = -1;    // negative: the data channel's law
  double rtt_ms = 200;
  double rate = 100;      // packets per second
  double sack_factor = 1;
  std::size_t packets = 100'000;
  std::uint64_t seed = 1;
  double flush_cap = 0;
};

inline void add_channel_flags(CLI::App* app, FlowFlags& f) {
  app->add_option("--rtt-ms", f.rtt_ms, "Round-trip time, ms")->check(CLI::NonNegativeNumber)->capture_default_str();
  app->add_option("--rate", f.rate, "Packets per second")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--sack-factor", f.sack_factor, "SACK period in RTTs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app->add_option("--ack-plr", f.ack_plr, "SACK loss rate (default: data channel law)");
  app->add_option("--packets", f.packets, "Source packets")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--seed", f.seed, "Master seed")->capture_default_str();
  app->add_option("--flush-cap", f.flush_cap, "Tail flush limit in slots (0: automatic)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

inline void add_flow_flags(CLI::App* app, FlowFlags& f) {
  auto* k = app->add_option("--k", f.k, "Source packets per repair")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--redundancy", f.redundancy, "Repair fraction 1/(k+1), instead of --k")
      ->check(CLI::Range(0.0, 0.5))
      ->excludes(k);
  app->add_option("--field", f.field, "Field size q = 2^m, m in 1..8")->capture_default_str();
  app->add_option("--plr", f.plr, "Data loss rate")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  app->add_option("--burst", f.burst, "Mean loss burst (1: Bernoulli)")->check(CLI::Range(1.0, 1e6))->capture_default_str();
  add_channel_flags(app, f);
}

inline unsigned k_from_redundancy(double r) {
  const double k = 1.0 / r - 1.0;
  const double rounded = std::round(k);
  if (!(r > 0) || rounded < 1 || std::abs(k - rounded) > 1e-9) {
    throw UsageError("redundancy must be 1/(k+1) for an integer k >= 1, got " + num(r));
  }
  return static_cast<unsigned>(rounded);
}

inline unsigned field_bits(unsigned q) {
  for (unsigned m = 1; m <= 8; ++m) {
    if (q == (1u << m)) return m;
  }
  throw UsageError("field size must be 2^m with m in 1..8, got " + std::to_string(q));
}

inline ChannelSpec channel_spec(double plr, double burst) {
  if (burst == 1.0) return Bernoulli{plr};
  try {
    return ge_params_from(plr, burst);
  } catch (const std::domain_error& e) {
    throw UsageError(e.what());
  }
}

inline unsigned resolve_k(const FlowFlags& f) { return f.redundancy > 0 ? k_from_redundancy(f.redundancy) : f.k; }

inline SimConfig to_sim_config(const FlowFlags& f) {
  SimConfig c;
  c.k = resolve_k(f);
  c.field_bits = field_bits(f.field);
  c.rate = f.rate;
  c.rtt = f.rtt_ms / 1000.0;
  c.sack_factor = f.sack_factor;
  c.data = channel_spec(f.plr, f.burst);
  c.ack = f.ack_plr < 0 ? c.data : channel_spec(f.ack_plr, f.burst);
  c.n_source = f.packets;
  c.seed = f.seed;
  c.flush_cap = f.flush_cap;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

inline std::filesystem::path output_dir(const std::string& flag, const std::string& subcommand) {
  std::filesystem::path dir;
  if (!flag.empty()) {
    dir = flag;
  } else if (const char* root = std::getenv("TETRYS_OUT_DIR"); root && *root) {
    dir = std::filesystem::path(root) / subcommand;
  } else {
    dir = std::filesystem::path("tetrys-out") / subcommand;
  }
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_manifest(const std::filesystem::path& dir, const CLI::App& sub, std::span<const char* const> args) {
  std::ofstream out(dir / "manifest.txt");
  out << "version=\"" << TETRYS_VERSION << "\"\n";
  out << "command=\"";
  for (std::size_t i = 0; i < args.size(); ++i) out << (i ? " " : "") << args[i];
  out << "\"\n";
  out << "subcommand=\"" << sub.get_name() << "\"\n";
  out << sub.config_to_str(true, false);
  if (!out) throw std::runtime_error("cannot write manifest");
}

template <typename Int>
void write_pmf(const std::filesystem::path& path, std::span<const Int> samples) {
  CsvWriter csv(path, {"value", "probability"});
  if (samples.empty()) return;
  for (const auto& [v, prob] : empirical_pmf<Int>(samples)) csv.row(v, prob);
}

inline void write_pmf(const std::filesystem::path& path, const Pmf& pmf) {
  CsvWriter csv(path, {"value", "probability"});
  for (const auto& [v, prob] : pmf) {
    if (prob > 0) csv.row(v, prob);
  }
}

template <typename T>
std::vector<double> as_doubles(std::span<const T> v) {
  return {v.begin(), v.end()};
}

template <typename T>
std::optional<double> mean_or_empty(std::span<const T> v) {
  if (v.empty()) return std::nullopt;
  return mean_of<T>(v);
}

inline void write_buffer_percentiles(const std::filesystem::path& path, const SimMetrics& m) {
  CsvWriter csv(path, {"series", "min", "p5", "p10", "p25", "p50", "p75", "p90", "p95", "max", "mean"});
  const std::pair<const char*, const std::vector<std::uint32_t>*> series[] = {
      {"bs", &m.bs}, {"brs", &m.brs}, {"brr", &m.brr}};
  for (const auto& [name, v] : series) {
    if (v->empty()) continue;
    const auto d = as_doubles<std::uint32_t>(*v);
    const Summary s = percentiles(d, kFigurePercentiles);
    std::vector<std::string> cells = {name, num(s.min)};
    for (double q : s.quantiles) cells.push_back(num(q));
    cells.push_back(num(s.max));
    cells.push_back(num(s.mean));
    csv.write_row(cells);
  }
}

// --- simulate ---------------------------------------------------------------

inline void run_simulate(const FlowFlags& f, const std::filesystem::path& dir) {
  const SimConfig cfg = to_sim_config(f);
  const SimMetrics m = run_simulation(cfg);

  {
    CsvWriter csv(dir / "summary.csv", {"metric", "value"});
    csv.row("k", cfg.k);
    csv.row("redundancy", cfg.redundancy());
    csv.row("loss_rate", mean_loss_rate(cfg.data));
    csv.row("source_packets", m.n_source);
    csv.row("slots", m.slots);
    csv.row("sources_lost", m.sources_lost);
    csv.row("repairs_sent", m.repairs_sent);
    csv.row("repairs_lost", m.repairs_lost);
    csv.row("repairs_useful", m.repairs_useful);
    csv.row("repairs_dependent", m.repairs_dependent);
    csv.row("sacks_sent", m.sacks_sent);
    csv.row("sacks_lost", m.sacks_lost);
    csv.row("delivered", m.delivered);
    csv.row("residual_lost", m.residual_lost);
    csv.row("payload_mismatch", m.payload_mismatch);
    csv.row("order_violations", m.order_violations);
    csv.row("flush_slots", m.flush_slots);
    csv.row("flush_capped", m.flush_capped);
    csv.row("mean_decoding_delay", mean_or_empty<int>(m.decode_delay));
    csv.row("mean_recurrence", mean_or_empty<int>(m.recurrence));
    csv.row("mean_matrix_size", mean_or_empty<int>(m.matrix_size));
    char digest[24];
    std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(m.stream_digest));
    csv.row("stream_digest", std::string(digest));
  }
  write_pmf<int>(dir / "delay_pmf.csv", m.decode_delay);
  write_pmf<int>(dir / "recurrence_pmf.csv", m.recurrence);
  write_pmf<int>(dir / "matrix_size_pmf.csv", m.matrix_size);
  {
    CsvWriter csv(dir / "delay_by_position.csv", {"position", "value", "probability"});
    for (unsigned j = 0; j < cfg.k; ++j) {
      std::vector<int> d;
      for (std::size_t i = 0; i < m.decode_delay.size(); ++i) {
        if (m.decode_position[i] == j) d.push_back(m.decode_delay[i]);
      }
      if (d.empty()) continue;
      for (const auto& [v, prob] : empirical_pmf<int>(d)) csv.row(j, v, prob);
    }
  }
  write_buffer_percentiles(dir / "buffers.csv", m);
  {
    CsvWriter csv(dir / "delivery.csv", {"seq", "availability_slots", "delivery_slots"});
    const auto cell = [](int d) { return d == kNeverDelivered ? std::string() : std::to_string(d); };
    for (std::size_t i = 0; i < m.n_source; ++i) {
      csv.row(i + 1, cell(m.availability_delay[i]), cell(m.delivery_delay[i]));
    }
  }
  std::cout << "delivered " << m.delivered << "/" << m.n_source << ", residual lost " << m.residual_lost
            << ", mean decoding delay " << num(mean_or_empty<int>(m.decode_delay).value_or(0)) << " slots\n";
}

// --- analyze ----------------------------------------------------------------

inline void run_analyze(const FlowFlags& f, const std::filesystem::path& dir) {
  const unsigned k = resolve_k(f);
  if (f.burst != 1.0) throw UsageError("the analytical model covers Bernoulli losses only");
  if (!markov::positive_recurrent(k, f.plr)) {
    throw UsageError("the model needs redundancy 1/(k+1) above the loss rate");
  }
  const markov::ModelResult r = markov::analyze(k, f.plr);
  const double rtt_slots = f.rtt_ms / 1000.0 * f.rate;
  const markov::BufferExpectation e = markov::expected_buffers(r, f.sack_factor, rtt_slots);

  write_pmf(dir / "delay_pmf.csv", r.delay);
  write_pmf(dir / "recurrence_pmf.csv", r.recurrence);
  write_pmf(dir / "matrix_size_pmf.csv", r.matrix_size);
  {
    CsvWriter csv(dir / "delay_by_position.csv", {"position", "value", "probability"});
    for (unsigned j = 0; j < k; ++j) {
      for (const auto& [v, prob] : r.delay_by_position[j]) {
        if (prob > 0) csv.row(j, v, prob);
      }
    }
  }
  {
    CsvWriter csv(dir / "stationary.csv", {"y", "probability"});
    for (std::size_t y = 0; y < r.stationary.size(); ++y) {
      if (r.stationary[y] > 0) csv.row(y, r.stationary[y]);
    }
  }
  {
    CsvWriter csv(dir / "buffers.csv", {"series", "expected"});
    csv.row("bs", e.bs);
    csv.row("brs", e.brs);
    csv.row("brr", e.brr);
  }
  {
    CsvWriter csv(dir / "summary.csv", {"metric", "value"});
    csv.row("k", k);
    csv.row("loss_rate", f.plr);
    csv.row("mean_decoding_delay", pmf_mean(r.delay));
    csv.row("mean_recurrence", pmf_mean(r.recurrence));
    csv.row("mean_matrix_size", pmf_mean(r.matrix_size));
    csv.row("mean_uncovered", r.mean_y());
    csv.row("delay_tail", r.delay_tail);
    csv.row("recurrence_tail", r.recurrence_tail);
    csv.row("stationary_tail", r.stationary_tail);
  }
  std::cout << "mean decoding delay " << num(pmf_mean(r.delay)) << ", mean recurrence " << num(pmf_mean(r.recurrence))
            << ", mean matrix size " << num(pmf_mean(r.matrix_size)) << "\n";
}

// --- compare-fec ------------------------------------------------------------

struct FecFlags {
  std::string list;  // "k/n,k/n,..."
  std::vector<unsigned> k;
  std::vector<unsigned> n;
};

inline std::vector<FecConfig> parse_fec_list(const std::string& s) {
  std::vector<FecConfig> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto slash = item.find('/');
    FecConfig c;
    try {
      if (slash == std::string::npos) throw std::invalid_argument("missing '/'");
      std::size_t used = 0;
      c.k = static_cast<unsigned>(std::stoul(item.substr(0, slash), &used));
      if (used != slash) throw std::invalid_argument("trailing characters");
      const std::string n_str = item.substr(slash + 1);
      c.n = static_cast<unsigned>(std::stoul(n_str, &used));
      if (used != n_str.size()) throw std::invalid_argument("trailing characters");
      c.validate();
    } catch (const std::exception&) {
      throw UsageError("bad FEC code '" + item + "', expected k/n with 1 <= k < n");
    }
    out.push_back(c);
  }
  if (out.empty()) throw UsageError("empty FEC list");
  return out;
}

inline std::vector<FecConfig> resolve_fec(const FecFlags& f) {
  if (!f.list.empty()) return parse_fec_list(f.list);
  if (!f.k.empty() || !f.n.empty()) {
    if (f.k.size() != f.n.size()) throw UsageError("--fec-k and --fec-n need the same number of entries");
    std::vector<FecConfig> out;
    for (std::size_t i = 0; i < f.k.size(); ++i) {
      FecConfig c{f.k[i], f.n[i]};
      try {
        c.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      out.push_back(c);
    }
    return out;
  }
  std::vector<FecConfig> out;
  for (unsigned k = 4; k <= 32; k += 4) out.push_back({k, 5 * k / 4});
  return out;
}

inline void run_compare_fec(const FlowFlags& f, const FecFlags& ff, const std::filesystem::path& dir) {
  const SimConfig cfg = to_sim_config(f);
  const std::vector<FecConfig> codes = resolve_fec(ff);
  const Comparison cmp = compare_fec(cfg, codes);
  const double slot_ms = 1000.0 / cfg.rate;

  std::vector<std::string> header = {"delay_slots", "delay_ms", "tetrys"};
  for (const auto& c : codes) header.push_back("fec_" + std::to_string(c.k) + "_" + std::to_string(c.n));
  {
    std::ofstream out(dir / "cdf.csv");
    if (!out) throw std::runtime_error("cannot write cdf.csv");
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (std::size_t g = 0; g < cmp.grid.size(); ++g) {
      out << cmp.grid[g] << ',' << num(cmp.grid[g] * slot_ms) << ',' << num(cmp.tetrys[g]);
      for (const auto& curve : cmp.fec) out << ',' << num(curve.cdf[g]);
      out << '\n';
    }
  }
  {
    CsvWriter csv(dir / "summary.csv", {"scheme", "final_cdf"});
    csv.row("tetrys", cmp.tetrys.back());
    for (const auto& curve : cmp.fec) {
      csv.row(std::to_string(curve.code.k) + "/" + std::to_string(curve.code.n), curve.cdf.back());
    }
  }
  std::cout << "tetrys reaches " << num(cmp.tetrys.back()) << " within " << cmp.grid.back() << " slots\n";
}

// --- allocate ---------------------------------------------------------------

struct AllocFlags {
  double plr = 0.1;
  std::string channel = "ber";
  std::string index = "block";
  double dmax_ms = 300;
  double pktmin = 0.95;
  double oneway_ms = 100;
  double rate = 100;
};

inline void run_allocate(const AllocFlags& f, const std::filesystem::path& dir) {
  alloc::AppRequest req;
  req.p = f.plr;
  req.pkt_min = f.pktmin;
  req.d_max = f.dmax_ms / 1000.0;
  req.one_way = f.oneway_ms / 1000.0;
  req.interval = 1.0 / f.rate;
  try {
    req.channel = alloc::parse_channel_class(f.channel);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  req.index = f.index == "sources" ? alloc::TableIndex::sources : alloc::TableIndex::block_length;

  CsvWriter csv(dir / "allocation.csv", {"n", "redundancy", "margin", "feasible", "on_time_fraction", "p95_delay_ms"});
  for (unsigned n : alloc::redundancy_grid(req.index)) {
    const double margin = 1.0 / n - req.p;
    if (!(margin > 0)) {
      csv.row(n, 1.0 / n, margin, false, std::optional<double>{}, std::optional<double>{});
      continue;
    }
    const double on_time = alloc::theta_cdf(req.d_max, req, n);
    csv.row(n, 1.0 / n, margin, alloc::psi(req, n), on_time, 1000.0 * alloc::theta_quantile(0.95, req, n));
  }
  const auto n = alloc::r_min(req);
  if (!n) {
    std::cout << "no feasible redundancy\n";
    return;
  }
  std::cout << "r_min 1/" << *n << " (" << num(1.0 / *n) << "), predicted p95 delay "
            << num(1000.0 * alloc::theta_quantile(0.95, req, *n)) << " ms\n";
}

// --- fit-weibull ------------------------------------------------------------

inline std::vector<double> read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    const std::string field = line.substr(0, line.find(','));
    if (field.empty() || field == "\r") continue;
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str()) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw std::runtime_error("not a number in " + path + ": " + field);
    }
    first = false;
    out.push_back(v);
  }
  return out;
}

inline void run_fit_weibull(const FlowFlags& f, const std::string& input, const std::filesystem::path& dir) {
  std::vector<double> samples;
  if (!input.empty()) {
    samples = read_samples(input);
  } else {
    const SimMetrics m = run_simulation(to_sim_config(f));
    samples.assign(m.decode_delay.begin(), m.decode_delay.end());
  }
  const alloc::WeibullParams w = alloc::fit_weibull(samples);
  const auto cdf = [&](double x) { return w.cdf(x); };
  const double ks_atoms = ks_distance(samples, cdf, KsMode::at_atoms);
  const double ks_both = ks_distance(samples, cdf, KsMode::both_sides);
  CsvWriter csv(dir / "weibull.csv", {"samples", "shape", "scale", "ks_at_atoms", "ks_both_sides"});
  csv.row(samples.size(), w.shape, w.scale, ks_atoms, ks_both);
  std::cout << "shape " << num(w.shape) << ", scale " << num(w.scale) << ", KS " << num(ks_atoms) << "\n";
}

// --- sweep ------------------------------------------------------------------

struct SweepFlags {
  std::vector<unsigned> k = {3};
  std::vector<unsigned> field = {256};
  std::vector<double> plr = {0.05, 0.1, 0.15, 0.2};
  std::vector<double> burst = {1.0};
  unsigned jobs = 0;  // 0: hardware threads
};

struct SweepRow {
  FlowFlags flow;
  SimMetrics metrics;
  std::optional<markov::ModelResult> model;
};

inline void run_sweep(const FlowFlags& base, const SweepFlags& s, const std::filesystem::path& dir) {
  std::vector<SweepRow> rows;
  for (unsigned k : s.k) {
    for (unsigned q : s.field) {
      for (double p : s.plr) {
        for (double b : s.burst) {
          FlowFlags f = base;
          f.k = k;
          f.redundancy = 0;
          f.field = q;
          f.plr = p;
          f.burst = b;
          to_sim_config(f);  // reject bad combinations before any run starts
          rows.push_back({f, {}, std::nullopt});
        }
      }
    }
  }

  // Sub-runs are independent: each owns its RNG streams and result slot.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(rows.size());
  const auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      try {
        SweepRow& r = rows[i];
        r.metrics = run_simulation(to_sim_config(r.flow));
        if (r.flow.burst == 1.0 && markov::positive_recurrent(r.flow.k, r.flow.plr)) {
          r.model = markov::analyze(r.flow.k, r.flow.plr);
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, s.jobs ? s.jobs : std::thread::hardware_concurrency());
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < std::min<std::size_t>(jobs, rows.size()); ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  CsvWriter csv(dir / "sweep.csv",
                {"k", "field", "plr", "burst", "packets", "sources_lost", "residual_lost", "flush_capped",
                 "mean_decoding_delay", "p95_decoding_delay", "mean_recurrence", "mean_matrix_size", "mean_bs",
                 "p50_brs", "model_mean_decoding_delay", "model_mean_recurrence", "model_mean_matrix_size"});
  for (const auto& r : rows) {
    const SimMetrics& m = r.metrics;
    std::optional<double> p95, p50_brs;
    const double q95[] = {95}, q50[] = {50};
    if (!m.decode_delay.empty()) p95 = percentiles(as_doubles<int>(m.decode_delay), q95).quantiles[0];
    if (!m.brs.empty()) p50_brs = percentiles(as_doubles<std::uint32_t>(m.brs), q50).quantiles[0];
    const auto model_mean = [&](const Pmf markov::ModelResult::*pmf) -> std::optional<double> {
      if (!r.model) return std::nullopt;
      return pmf_mean((*r.model).*pmf);
    };
    csv.row(r.flow.k, r.flow.field, r.flow.plr, r.flow.burst, m.n_source, m.sources_lost, m.residual_lost,
            m.flush_capped, mean_or_empty<int>(m.decode_delay), p95, mean_or_empty<int>(m.recurrence),
            mean_or_empty<int>(m.matrix_size), mean_or_empty<std::uint32_t>(m.bs), p50_brs,
            model_mean(&markov::ModelResult::delay), model_mean(&markov::ModelResult::recurrence),
            model_mean(&markov::ModelResult::matrix_size));
  }
  std::cout << rows.size() << " runs written to " << (dir / "sweep.csv").string() << "\n";
}

}  // namespace detail

// Runs one experiment. Exit codes: 0 success, 2 usage error, 1 runtime error.
inline int run_cli(std::span<const char* const> args, std::ostream& err = std::cerr) {
  CLI::App app{"Tetrys erasure coding experiments", "tetrys"};
  app.set_version_flag("--version", TETRYS_VERSION);
  app.require_subcommand(1);

  detail::FlowFlags flow;
  detail::FecFlags fec;
  detail::AllocFlags alloc_flags;
  detail::SweepFlags sweep;
  std::string out;
  std::string input;

  auto* simulate = app.add_subcommand("simulate", "Simulate one flow and write its metrics");
  detail::add_flow_flags(simulate, flow);

  auto* analyze = app.add_subcommand("analyze", "Evaluate the Markov model of the loss walk");
  detail::add_flow_flags(analyze, flow);

  auto* compare = app.add_subcommand("compare-fec", "Delivery CDFs of Tetrys and block FEC on one loss trace");
  detail::add_flow_flags(compare, flow);
  auto* fec_list = compare->add_option("--fec", fec.list, "Codes as k/n pairs, e.g. 4/5,8/10");
  auto* fec_k = compare->add_option("--fec-k", fec.k, "FEC source counts")->delimiter(',')->excludes(fec_list);
  compare->add_option("--fec-n", fec.n, "FEC block lengths")->delimiter(',')->excludes(fec_list)->needs(fec_k);
  fec_k->needs("--fec-n");

  auto* allocate = app.add_subcommand("allocate", "Smallest redundancy meeting a delay target");
  allocate->add_option("--plr", alloc_flags.plr, "Loss rate")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  allocate->add_option("--channel", alloc_flags.channel, "Coefficient class")
      ->check(CLI::IsMember({"ber", "b2", "b3"}))
      ->capture_default_str();
  allocate->add_option("--index", alloc_flags.index, "Table row for block length n: block (n) or sources (n-1)")
      ->check(CLI::IsMember({"block", "sources"}))
      ->capture_default_str();
  allocate->add_option("--dmax-ms", alloc_flags.dmax_ms, "Delivery deadline, ms")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  allocate->add_option("--pktmin", alloc_flags.pktmin, "Required on-time fraction")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  allocate->add_option("--oneway-ms", alloc_flags.oneway_ms, "One-way delay, ms")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  allocate->add_option("--rate", alloc_flags.rate, "Packets per second")->check(CLI::PositiveNumber)->capture_default_str();

  auto* fit = app.add_subcommand("fit-weibull", "Fit a Weibull law to delay samples");
  fit->add_option("--input", input, "Samples, one per line (default: simulate with the flow flags)")
      ->check(CLI::ExistingFile);
  detail::add_flow_flags(fit, flow);

  auto* sw = app.add_subcommand("sweep", "Simulate every combination of the listed parameters");
  sw->add_option("--k", sweep.k, "Source packets per repair")->delimiter(',')->capture_default_str();
  sw->add_option("--field", sweep.field, "Field sizes")->delimiter(',')->capture_default_str();
  sw->add_option("--plr", sweep.plr, "Loss rates")->delimiter(',')->capture_default_str();
  sw->add_option("--burst", sweep.burst, "Mean burst lengths")->delimiter(',')->capture_default_str();
  sw->add_option("--jobs", sweep.jobs, "Parallel sub-runs (0: hardware threads)")->capture_default_str();
  detail::add_channel_flags(sw, flow);

  for (auto* sub : {simulate, analyze, compare, allocate, fit, sw}) {
    sub->add_option("--out", out, "Output directory (default: $TETRYS_OUT_DIR/<subcommand>)");
  }

  try {
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cout, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    const auto dir = detail::output_dir(out, sub->get_name());
    if (sub == simulate) detail::run_simulate(flow, dir);
    if (sub == analyze) detail::run_analyze(flow, dir);
    if (sub == compare) detail::run_compare_fec(flow, fec, dir);
    if (sub == allocate) detail::run_allocate(alloc_flags, dir);
    if (sub == fit) detail::run_fit_weibull(flow, input, dir);
    if (sub == sw) detail::run_sweep(flow, sweep, dir);
    detail::write_manifest(dir, *sub, args);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  return run_cli(std::span<const char* const>(argv, static_cast<std::size_t>(argc)), err);
}

}  // namespace tetrys::cli
