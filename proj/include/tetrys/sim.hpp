#pragma once

// Discrete-event simulation of one Tetrys flow. Time is measured in slots:
// the sender transmits one packet per slot, k sources then one repair, and
// every datagram crosses its channel as encoded bytes after a fixed one-way
// delay of rtt/2. Once all sources are out, the sender keeps emitting one
// repair per slot until the receiver holds everything or the flush cap is
// reached.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <queue>
#include <stdexcept>
#include <vector>

#include "tetrys/channel.hpp"
#include "tetrys/codec.hpp"
#include "tetrys/fecblock.hpp"
#include "tetrys/splitmix.hpp"
#include "tetrys/stats.hpp"
#include "tetrys/wire.hpp"

namespace tetrys {

struct SimConfig {
  unsigned k = 3;
  unsigned field_bits = 8;
  double rate = 100.0;        // packets per second
  double rtt = 0.2;           // seconds
  double sack_factor = 1.0;   // one SACK every sack_factor * rtt
  ChannelSpec data = Bernoulli{0.0};
  ChannelSpec ack = Bernoulli{0.0};
  std::size_t n_source = 10000;
  std::uint64_t seed = 1;
  std::size_t payload_min = 4;
  std::size_t payload_max = 24;
  double flush_cap = 0;       // slots; 0 selects max(1000, 50/(R-p))

  double rtt_slots() const noexcept { return rtt * rate; }
  double one_way_slots() const noexcept { return rtt_slots() / 2; }
  double sack_interval_slots() const noexcept { return std::max(1.0, sack_factor * rtt_slots()); }
  double redundancy() const noexcept { return 1.0 / (k + 1); }

  void validate() const {
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (!(rate > 0)) throw std::invalid_argument("packet rate must be positive");
    if (!(rtt >= 0)) throw std::invalid_argument("rtt must be non-negative");
    if (!(sack_factor > 0)) throw std::invalid_argument("SACK factor must be positive");
    if (payload_min > payload_max) throw std::invalid_argument("payload_min exceeds payload_max");
    if (payload_max > 0xFFFF) throw std::invalid_argument("payload_max too large");
  }
};

inline double mean_loss_rate(const ChannelSpec& spec) {
  if (const auto* b = std::get_if<Bernoulli>(&spec)) return b->p;
  return std::get<GeParams>(spec).plr();
}

// Deterministic payload of source `seq`.
inline Bytes sim_payload(std::uint64_t payload_seed, Seq seq, std::size_t min_len, std::size_t max_len) {
  SplitMix64 g(derive_seed(payload_seed, seq));
  const std::size_t len = min_len + static_cast<std::size_t>(g.next() % (max_len - min_len + 1));
  Bytes out(len);
  for (std::size_t i = 0; i < len; i += 8) {
    std::uint64_t w = g.next();
    for (std::size_t b = i; b < std::min(len, i + 8); ++b, w >>= 8) out[b] = static_cast<std::uint8_t>(w);
  }
  return out;
}

enum class SimStream : std::uint64_t { data_channel = 0, ack_channel = 1, coefficients = 2, payload = 3 };

inline std::uint64_t stream_seed(std::uint64_t seed, SimStream s) {
  return derive_seed(seed, static_cast<std::uint64_t>(s));
}

inline constexpr int kNeverDelivered = -1;

struct SimMetrics {
  // One entry per decoded packet: slots from its transmission to the
  // transmission of the repair that decoded it, and its position in its block.
  std::vector<int> decode_delay;
  std::vector<std::uint8_t> decode_position;
  std::vector<int> recurrence;   // slots from a loss at Y = 0 to the next full decoding
  std::vector<int> matrix_size;  // packets recovered per full decoding
  // Sampled at each data or repair reception.
  std::vector<std::uint32_t> bs, brs, brr;
  std::vector<std::uint32_t> y;  // uncovered losses after each block
  // Per source seq - 1: slots from transmission until the receiver holds
  // it, kNeverDelivered if it never does.
  std::vector<int> availability_delay;
  // Per source seq - 1: slots from transmission until in-order delivery.
  std::vector<int> delivery_delay;

  std::size_t n_source = 0;
  std::size_t delivered = 0;         // in order, payload verified
  std::size_t residual_lost = 0;
  std::size_t payload_mismatch = 0;
  std::size_t order_violations = 0;
  std::size_t walk_mismatch = 0;     // decoder state disagreed with the loss walk
  std::size_t slots = 0;
  std::size_t sources_lost = 0;
  std::size_t repairs_sent = 0;
  std::size_t repairs_lost = 0;
  std::size_t repairs_useful = 0;
  std::size_t repairs_dependent = 0;
  std::size_t sacks_sent = 0;
  std::size_t sacks_lost = 0;
  std::size_t flush_slots = 0;
  bool flush_capped = false;
  std::uint64_t stream_digest = 0xcbf29ce484222325ull;  // FNV-1a of the delivered stream

  bool operator==(const SimMetrics&) const = default;
};

namespace detail {

inline void fnv_mix(std::uint64_t& h, std::uint8_t b) {
  h ^= b;
  h *= 0x100000001b3ull;
}

}  // namespace detail

class Simulator {
 public:
  explicit Simulator(SimConfig cfg)
      : cfg_(cfg),
        encoder_(EncoderConfig{cfg.k, cfg.field_bits, stream_seed(cfg.seed, SimStream::coefficients),
                               kDefaultMtu}),
        decoder_(cfg.field_bits),
        data_ch_(cfg.data, stream_seed(cfg.seed, SimStream::data_channel)),
        ack_ch_(cfg.ack, stream_seed(cfg.seed, SimStream::ack_channel)),
        payload_seed_(stream_seed(cfg.seed, SimStream::payload)) {
    cfg_.validate();
    if (cfg_.payload_max > encoder_.max_payload()) throw std::invalid_argument("payload_max exceeds MTU");
  }

  SimMetrics run() {
    m_ = SimMetrics{};
    m_.n_source = cfg_.n_source;
    m_.availability_delay.assign(cfg_.n_source, kNeverDelivered);
    m_.delivery_delay.assign(cfg_.n_source, kNeverDelivered);
    send_slot_.assign(cfg_.n_source + 1, 0);

    const double p = mean_loss_rate(cfg_.data);
    const double margin = cfg_.redundancy() - p;
    const double cap = cfg_.flush_cap > 0 ? cfg_.flush_cap
                                          : (margin > 0 ? std::max(1000.0, 50.0 / margin) : 1000.0);
    const double sack_every = cfg_.sack_interval_slots();

    std::size_t sources_sent = 0;
    std::uint64_t slot = 0;
    std::uint64_t flush_start = 0;
    bool sending = true;
    double next_sack = sack_every;

    push({0.0, Prio::send, {}, 0, 0});
    while (!events_.empty()) {
      Event ev = events_.top();
      events_.pop();
      switch (ev.prio) {
        case Prio::sack_arrival:
          encoder_.on_sack(std::get<SackPacket>(decode_packet(ev.bytes)));
          break;
        case Prio::data_arrival:
          on_arrival(ev);
          break;
        case Prio::sack_timer: {
          if (!sending) break;
          const Bytes bytes = encode_packet(decoder_.make_sack());
          ++m_.sacks_sent;
          if (ack_ch_.step()) {
            ++m_.sacks_lost;
          } else {
            push({ev.time + cfg_.one_way_slots(), Prio::sack_arrival, bytes, 0, 0});
          }
          next_sack += sack_every;
          push({next_sack, Prio::sack_timer, {}, 0, 0});
          break;
        }
        case Prio::send: {
          if (!sending) break;
          const bool main_phase = sources_sent < cfg_.n_source;
          const bool repair_slot = !main_phase || slot % (cfg_.k + 1) == cfg_.k;
          if (!main_phase) {
            if (flush_start == 0) flush_start = slot;
            if (decoder_.next_delivery() > cfg_.n_source) {
              sending = false;
              break;
            }
            if (static_cast<double>(slot - flush_start) >= cap) {
              m_.flush_capped = true;
              sending = false;
              break;
            }
            ++m_.flush_slots;
          }
          if (repair_slot) {
            send_repair(slot, main_phase);
          } else {
            send_source(slot);
            ++sources_sent;
          }
          ++slot;
          if (slot == 1) push({sack_every, Prio::sack_timer, {}, 0, 0});
          push({static_cast<double>(slot), Prio::send, {}, 0, 0});
          break;
        }
      }
    }
    m_.slots = slot;

    for (int d : m_.availability_delay) {
      if (d == kNeverDelivered) ++m_.residual_lost;
    }
    return m_;
  }

  const Encoder& encoder() const noexcept { return encoder_; }
  const Decoder& decoder() const noexcept { return decoder_; }

 private:
  // Same-time events run in this order.
  enum class Prio { sack_arrival = 0, data_arrival = 1, sack_timer = 2, send = 3 };

  struct Event {
    double time;
    Prio prio;
    Bytes bytes;
    std::uint64_t slot;     // transmission slot of a data packet
    std::uint32_t walk_y;   // uncovered losses right after this packet was sent
    std::uint64_t order = 0;
  };

  struct Later {
    bool operator()(const Event& a, const Event& b) const noexcept {
      if (a.time != b.time) return a.time > b.time;
      if (a.prio != b.prio) return a.prio > b.prio;
      return a.order > b.order;
    }
  };

  void push(Event e) {
    e.order = order_++;
    events_.push(std::move(e));
  }

  void send_source(std::uint64_t slot) {
    const Seq seq = encoder_.next_seq();
    const Bytes payload = sim_payload(payload_seed_, seq, cfg_.payload_min, cfg_.payload_max);
    const SourcePacket pkt = encoder_.push_source(payload);
    send_slot_[seq] = slot;
    if (data_ch_.step()) {
      ++m_.sources_lost;
      lost_slots_.push_back(slot);
      ++walk_y_;
      return;
    }
    push({static_cast<double>(slot) + cfg_.one_way_slots(), Prio::data_arrival, encode_packet(pkt), slot,
          walk_y_});
  }

  void send_repair(std::uint64_t slot, bool main_phase) {
    const bool lost = data_ch_.step();
    if (encoder_.window_size() == 0) return;  // nothing to protect
    ++m_.repairs_sent;
    const RepairPacket pkt = encoder_.make_repair();
    if (lost) {
      ++m_.repairs_lost;
    } else if (walk_y_ > 0) {
      --walk_y_;
    }
    if (main_phase) m_.y.push_back(walk_y_);
    if (lost) return;
    push({static_cast<double>(slot) + cfg_.one_way_slots(), Prio::data_arrival, encode_packet(pkt), slot,
          walk_y_});
  }

  void on_arrival(const Event& ev) {
    const Packet pkt = decode_packet(ev.bytes);
    if (const auto* src = std::get_if<SourcePacket>(&pkt)) {
      m_.availability_delay[src->seq - 1] = 0;
      deliver(decoder_.on_source(*src), ev.slot);
    } else {
      const RepairResult res = decoder_.on_repair(std::get<RepairPacket>(pkt));
      if (res.outcome == RepairOutcome::useful) ++m_.repairs_useful;
      if (res.outcome == RepairOutcome::dependent) ++m_.repairs_dependent;
      if (!res.decoded.empty()) {
        for (Seq s : res.decoded) {
          const int d = static_cast<int>(ev.slot - send_slot_[s]);
          m_.decode_delay.push_back(d);
          m_.decode_position.push_back(static_cast<std::uint8_t>(send_slot_[s] % (cfg_.k + 1)));
          m_.availability_delay[s - 1] = d;
        }
        decoded_since_full_ += res.decoded.size();
        // Full decoding: every loss sent before this repair is recovered.
        // The recurrence runs from the first of them; partial decodings
        // since the previous full one belong to this event.
        if (decoder_.lost_pending() == 0) {
          m_.matrix_size.push_back(static_cast<int>(decoded_since_full_));
          decoded_since_full_ = 0;
          if (!lost_slots_.empty() && lost_slots_.front() < ev.slot) {
            m_.recurrence.push_back(static_cast<int>(ev.slot - lost_slots_.front()));
            while (!lost_slots_.empty() && lost_slots_.front() < ev.slot) lost_slots_.pop_front();
          }
        }
      }
      deliver(res.delivered, ev.slot);
      // Uncovered losses known to the decoder must match the walk.
      const std::size_t uncovered = decoder_.lost_pending() - decoder_.seen_count();
      if (uncovered != ev.walk_y) ++m_.walk_mismatch;
    }
    m_.bs.push_back(static_cast<std::uint32_t>(encoder_.window_size()));
    m_.brs.push_back(static_cast<std::uint32_t>(decoder_.source_buffer_size()));
    m_.brr.push_back(static_cast<std::uint32_t>(decoder_.repair_buffer_size()));
  }

  // `slot` is the send slot of the packet whose arrival released `ds`.
  void deliver(const std::vector<Delivery>& ds, std::uint64_t slot) {
    for (const auto& d : ds) {
      if (d.seq != next_expected_) ++m_.order_violations;
      if (d.seq >= 1 && d.seq <= cfg_.n_source) {
        m_.delivery_delay[d.seq - 1] = static_cast<int>(slot - send_slot_[d.seq]);
      }
      next_expected_ = d.seq + 1;
      if (d.payload != sim_payload(payload_seed_, d.seq, cfg_.payload_min, cfg_.payload_max)) {
        ++m_.payload_mismatch;
      }
      ++m_.delivered;
      detail::fnv_mix(m_.stream_digest, static_cast<std::uint8_t>(d.seq >> 24));
      detail::fnv_mix(m_.stream_digest, static_cast<std::uint8_t>(d.seq >> 16));
      detail::fnv_mix(m_.stream_digest, static_cast<std::uint8_t>(d.seq >> 8));
      detail::fnv_mix(m_.stream_digest, static_cast<std::uint8_t>(d.seq));
      for (auto b : d.payload) detail::fnv_mix(m_.stream_digest, b);
    }
  }

  SimConfig cfg_;
  Encoder encoder_;
  Decoder decoder_;
  Channel data_ch_;
  Channel ack_ch_;
  std::uint64_t payload_seed_;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  std::uint64_t order_ = 0;
  std::vector<std::uint64_t> send_slot_;
  SimMetrics m_;
  std::deque<std::uint64_t> lost_slots_;  // send slots of losses since the last full decoding
  std::uint32_t walk_y_ = 0;
  std::size_t decoded_since_full_ = 0;
  Seq next_expected_ = 1;
};

inline SimMetrics run_simulation(const SimConfig& cfg) { return Simulator(cfg).run(); }

}  // namespace tetrys
