#pragma once

// Tetrys endpoints.
//
// The encoder keeps every source packet that is not yet acknowledged and,
// on demand, emits one repair combining the whole window. The decoder keeps
// its repair equations in reduced row-echelon form over the lost packets it
// knows about; the pivot of each row is a "seen" packet and may be
// acknowledged before it is decoded.
//
// Source payloads travel with a 2-byte big-endian length prefix so repairs
// can zero-pad shorter packets and the decoder can restore exact lengths.
// SourcePacket::payload always holds the prefixed form.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tetrys/gf.hpp"
#include "tetrys/splitmix.hpp"
#include "tetrys/wire.hpp"

namespace tetrys {

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kLengthPrefix = 2;

inline Bytes frame_payload(std::span<const std::uint8_t> payload) {
  if (payload.size() > 0xFFFF) throw std::length_error("payload longer than 65535 bytes");
  Bytes out;
  out.reserve(payload.size() + kLengthPrefix);
  out.push_back(static_cast<std::uint8_t>(payload.size() >> 8));
  out.push_back(static_cast<std::uint8_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

// Strips the length prefix. `framed` may carry trailing zero padding.
inline Bytes unframe_payload(std::span<const std::uint8_t> framed) {
  if (framed.size() < kLengthPrefix) throw ProtocolError("framed payload shorter than its prefix");
  const std::size_t len = (std::size_t{framed[0]} << 8) | framed[1];
  if (len + kLengthPrefix > framed.size()) throw ProtocolError("length prefix exceeds payload");
  return Bytes(framed.begin() + kLengthPrefix,
               framed.begin() + static_cast<std::ptrdiff_t>(kLengthPrefix + len));
}

// Coefficient generator shared by both endpoints. Each coefficient consumes
// one SplitMix64 output, scanned in m-bit chunks from the least significant
// end; the first nonzero chunk is the coefficient. An output with no
// nonzero chunk is discarded and the next one drawn.
class CoeffStream {
 public:
  CoeffStream(std::uint64_t seed, const gf::FieldTable& field) : rng_(seed), field_(&field) {}

  gf::Element next() {
    const unsigned m = field_->bits();
    const std::uint64_t mask = (std::uint64_t{1} << m) - 1;
    for (;;) {
      std::uint64_t word = rng_.next();
      for (unsigned used = 0; used + m <= 64; used += m, word >>= m) {
        if (const auto c = static_cast<gf::Element>(word & mask); c != 0) return c;
      }
    }
  }

 private:
  SplitMix64 rng_;
  const gf::FieldTable* field_;
};

inline std::vector<gf::Element> coeff_stream(std::uint64_t seed, std::size_t window_size,
                                             const gf::FieldTable& field) {
  CoeffStream gen(seed, field);
  std::vector<gf::Element> out(window_size);
  for (auto& c : out) c = gen.next();
  return out;
}

struct EncoderConfig {
  unsigned k = 3;            // source packets per repair
  unsigned field_bits = 8;
  std::uint64_t seed = 1;    // drives the per-repair coefficient seeds
  std::size_t mtu = kDefaultMtu;
};

class Encoder {
 public:
  struct Output {
    SourcePacket source;
    std::optional<RepairPacket> repair;
  };

  explicit Encoder(EncoderConfig cfg)
      : cfg_(cfg), field_(&gf::FieldTable::standard(cfg.field_bits)), seeds_(cfg.seed) {
    if (cfg.k < 1) throw std::invalid_argument("k must be at least 1");
    if (cfg.mtu < kLengthPrefix + field_->group_bytes()) throw std::invalid_argument("MTU too small");
  }

  const EncoderConfig& config() const noexcept { return cfg_; }
  const gf::FieldTable& field() const noexcept { return *field_; }

  // Largest application payload whose framed and padded form fits the MTU.
  std::size_t max_payload() const noexcept {
    return cfg_.mtu - kLengthPrefix - (field_->group_bytes() - 1);
  }

  // Sends one source packet; every k-th call also yields a repair.
  Output on_source(std::span<const std::uint8_t> payload) {
    Output out{push_source(payload), std::nullopt};
    if (++since_repair_ == cfg_.k) {
      since_repair_ = 0;
      if (window_size() > 0) out.repair = make_repair();
    }
    return out;
  }

  // Adds a source packet to the window without any repair scheduling.
  SourcePacket push_source(std::span<const std::uint8_t> payload) {
    if (payload.size() > max_payload()) throw std::length_error("source payload exceeds MTU");
    SourcePacket pkt{next_seq_++, frame_payload(payload)};
    window_.push_back({pkt.seq, pkt.payload, false});
    ++unacked_;
    return pkt;
  }

  // The repair window is the hull [oldest unacknowledged .. newest]. Every
  // position in the hull gets a coefficient, acknowledged ones included,
  // because the receiver cannot tell which of them the sender still holds.
  RepairPacket make_repair() {
    if (unacked_ == 0) throw std::logic_error("make_repair on an empty encoding window");
    RepairPacket r;
    r.repair_seq = next_repair_seq_++;
    r.window_start = window_.front().seq;
    r.window_end = window_.back().seq;
    r.coeff_seed = seeds_.next();
    r.field_id = static_cast<std::uint8_t>(field_->bits());

    std::size_t len = 0;
    for (const auto& e : window_) len = std::max(len, e.coded.size());
    const std::size_t gb = field_->group_bytes();
    len = (len + gb - 1) / gb * gb;
    r.payload.assign(len, 0);

    CoeffStream coeffs(r.coeff_seed, *field_);
    for (const auto& e : window_) field_->mul_add_slice(coeffs.next(), e.coded, r.payload);
    return r;
  }

  // Returns how many packets became acknowledged. Stale SACKs are harmless.
  std::size_t on_sack(const SackPacket& sack) {
    std::size_t pruned = 0;
    for (auto& e : window_) {
      if (!e.acked && sack.acknowledges(e.seq)) {
        e.acked = true;
        ++pruned;
      }
    }
    unacked_ -= pruned;
    while (!window_.empty() && window_.front().acked) window_.pop_front();
    return pruned;
  }

  // |BS|: sent and not yet acknowledged.
  std::size_t window_size() const noexcept { return unacked_; }
  // Number of positions the next repair would cover.
  std::size_t hull_span() const noexcept { return window_.size(); }
  Seq next_seq() const noexcept { return next_seq_; }
  bool contains(Seq seq) const noexcept {
    return std::any_of(window_.begin(), window_.end(),
                       [&](const Entry& e) { return e.seq == seq && !e.acked; });
  }

 private:
  struct Entry {
    Seq seq;
    Bytes coded;
    bool acked;
  };

  EncoderConfig cfg_;
  const gf::FieldTable* field_;
  SplitMix64 seeds_;
  std::deque<Entry> window_;  // front is always unacknowledged
  std::size_t unacked_ = 0;
  Seq next_seq_ = 1;
  std::uint32_t next_repair_seq_ = 1;
  unsigned since_repair_ = 0;
};

struct Delivery {
  Seq seq;
  Bytes payload;
  bool operator==(const Delivery&) const = default;
};

enum class RepairOutcome {
  useful,       // added a row and marked one packet seen
  dependent,    // reduced to zero against the stored rows
  no_unknowns,  // every packet in the window was already available
};

struct RepairResult {
  RepairOutcome outcome = RepairOutcome::no_unknowns;
  std::optional<Seq> seen;
  std::vector<Seq> decoded;
  std::vector<Delivery> delivered;
};

class Decoder {
 public:
  explicit Decoder(unsigned field_bits = 8) : field_(&gf::FieldTable::standard(field_bits)) {}

  const gf::FieldTable& field() const noexcept { return *field_; }

  std::vector<Delivery> on_source(const SourcePacket& pkt) {
    std::vector<Delivery> out;
    if (pkt.seq == 0) throw ProtocolError("sequence number 0 is reserved");
    if (pkt.seq > max_known_) {
      for (Seq s = max_known_ + 1; s < pkt.seq; ++s) lost_.insert(s);
      max_known_ = pkt.seq;
    } else if (lost_.count(pkt.seq) != 0) {
      substitute_late(pkt.seq, pkt.payload);
    } else {
      return out;  // duplicate
    }
    std::vector<Seq> decoded;
    make_available(pkt.seq, pkt.payload, out);
    collect_singletons(decoded, out);
    return out;
  }

  RepairResult on_repair(const RepairPacket& pkt) {
    if (pkt.field_id != field_->bits()) throw ProtocolError("repair field does not match decoder");
    if (pkt.window_start == 0 || pkt.window_start > pkt.window_end) {
      throw ProtocolError("malformed repair window");
    }
    RepairResult res;
    if (pkt.window_end > max_known_) {
      for (Seq s = max_known_ + 1; s <= pkt.window_end; ++s) lost_.insert(s);
      max_known_ = pkt.window_end;
    }

    Row eq;
    eq.rhs = pkt.payload;
    CoeffStream coeffs(pkt.coeff_seed, *field_);
    auto known = brs_.lower_bound(pkt.window_start);
    for (Seq s = pkt.window_start;; ++s) {
      const gf::Element c = coeffs.next();
      if (known != brs_.end() && known->first == s) {
        if (known->second.size() > eq.rhs.size()) throw ProtocolError("source longer than repair");
        field_->mul_add_slice(c, known->second, eq.rhs);
        ++known;
      } else if (lost_.count(s) != 0) {
        eq.cols.emplace_back(s, c);
      } else {
        throw ProtocolError("repair references a source that is no longer buffered");
      }
      if (s == pkt.window_end) break;
    }
    prune(pkt.window_start);

    if (eq.cols.empty()) {
      res.outcome = RepairOutcome::no_unknowns;
      return res;
    }
    reduce(eq);
    if (eq.cols.empty()) {
      res.outcome = RepairOutcome::dependent;
      return res;
    }
    res.outcome = RepairOutcome::useful;
    res.seen = insert_row(std::move(eq));
    collect_singletons(res.decoded, res.delivered);
    return res;
  }

  // Acknowledges received, decoded and seen packets.
  SackPacket make_sack() const {
    SackPacket s;
    s.base = max_known_ + 1;
    for (Seq q : lost_) {
      if (seen_.count(q) == 0) {
        s.base = q;
        break;
      }
    }
    if (s.base <= max_known_) {
      const std::size_t bits = max_known_ - s.base;
      s.bitmap.assign((bits + 7) / 8, 0);
      for (std::size_t b = 0; b < bits; ++b) {
        const Seq q = s.base + 1 + static_cast<Seq>(b);
        if (lost_.count(q) == 0 || seen_.count(q) != 0) {
          s.bitmap[b / 8] |= static_cast<std::uint8_t>(0x80u >> (b % 8));
        }
      }
      if (s.bitmap.size() > 0xFFFF) throw ProtocolError("sack bitmap exceeds 65535 bytes");
      s.bitmap_len = static_cast<std::uint16_t>(s.bitmap.size());
    }
    return s;
  }

  // Drops buffered sources that no future repair can reference.
  std::size_t prune(Seq window_start) {
    std::size_t n = 0;
    for (auto it = brs_.begin(); it != brs_.end() && it->first < window_start;) {
      it = brs_.erase(it);
      ++n;
    }
    return n;
  }

  std::size_t source_buffer_size() const noexcept { return brs_.size(); }   // BRS
  std::size_t repair_buffer_size() const noexcept { return rows_.size(); }  // BRR
  std::size_t lost_pending() const noexcept { return lost_.size(); }
  std::size_t seen_count() const noexcept { return seen_.size(); }
  bool is_seen(Seq s) const noexcept { return seen_.count(s) != 0; }
  bool is_lost(Seq s) const noexcept { return lost_.count(s) != 0; }
  Seq max_known() const noexcept { return max_known_; }
  // Every packet below this has been delivered.
  Seq next_delivery() const noexcept { return next_delivery_; }

 private:
  // Sparse equation: cols sorted by seq, rhs is the framed-payload combination.
  struct Row {
    std::vector<std::pair<Seq, gf::Element>> cols;
    Bytes rhs;
  };

  static gf::Element coeff_of(const Row& r, Seq s) noexcept {
    auto it = std::lower_bound(r.cols.begin(), r.cols.end(), std::pair<Seq, gf::Element>{s, 0},
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    return (it != r.cols.end() && it->first == s) ? it->second : gf::Element{0};
  }

  // dst += c * src
  void axpy(Row& dst, gf::Element c, const Row& src) const {
    std::vector<std::pair<Seq, gf::Element>> merged;
    merged.reserve(dst.cols.size() + src.cols.size());
    auto a = dst.cols.begin();
    auto b = src.cols.begin();
    while (a != dst.cols.end() || b != src.cols.end()) {
      if (b == src.cols.end() || (a != dst.cols.end() && a->first < b->first)) {
        merged.push_back(*a++);
      } else if (a == dst.cols.end() || b->first < a->first) {
        merged.emplace_back(b->first, field_->mul(c, b->second));
        ++b;
      } else {
        const gf::Element v = gf::add(a->second, field_->mul(c, b->second));
        if (v != 0) merged.emplace_back(a->first, v);
        ++a;
        ++b;
      }
    }
    dst.cols = std::move(merged);
    if (dst.rhs.size() < src.rhs.size()) dst.rhs.resize(src.rhs.size(), 0);
    field_->mul_add_slice(c, src.rhs, dst.rhs);
  }

  // Eliminates every pivot column from eq. Rows hold only their own pivot
  // plus non-pivot columns, so one pass over eq's pivots suffices.
  void reduce(Row& eq) const {
    std::vector<std::pair<Seq, gf::Element>> hits;
    for (const auto& [s, c] : eq.cols) {
      if (rows_.count(s) != 0) hits.emplace_back(s, c);
    }
    for (const auto& [s, c] : hits) axpy(eq, c, rows_.at(s));
  }

  // eq is reduced and nonempty; its lowest column becomes a new pivot.
  Seq insert_row(Row eq) {
    const Seq pivot = eq.cols.front().first;
    const gf::Element inv = field_->inv(eq.cols.front().second);
    for (auto& [s, c] : eq.cols) c = field_->mul(inv, c);
    field_->mul_slice(inv, eq.rhs, eq.rhs);
    for (auto& [s, row] : rows_) {
      if (const gf::Element c = coeff_of(row, pivot); c != 0) axpy(row, c, eq);
    }
    rows_.emplace(pivot, std::move(eq));
    seen_.insert(pivot);
    return pivot;
  }

  // A packet declared lost arrived after all. Its column is substituted; if
  // it was a pivot, the remainder of its row is re-inserted as a fresh
  // equation. Seen marks of other packets are unaffected.
  void substitute_late(Seq s, const Bytes& payload) {
    lost_.erase(s);
    seen_.erase(s);
    std::optional<Row> orphan;
    if (auto it = rows_.find(s); it != rows_.end()) {
      orphan = std::move(it->second);
      rows_.erase(it);
    }
    auto drop = [&](Row& r) {
      if (const gf::Element c = coeff_of(r, s); c != 0) {
        std::erase_if(r.cols, [&](const auto& e) { return e.first == s; });
        if (r.rhs.size() < payload.size()) throw ProtocolError("source longer than repair");
        field_->mul_add_slice(c, payload, r.rhs);
      }
    };
    for (auto& [p, row] : rows_) drop(row);
    if (orphan) {
      drop(*orphan);
      reduce(*orphan);
      if (!orphan->cols.empty()) insert_row(std::move(*orphan));
    }
  }

  void collect_singletons(std::vector<Seq>& decoded, std::vector<Delivery>& delivered) {
    for (auto it = rows_.begin(); it != rows_.end();) {
      if (it->second.cols.size() != 1) {
        ++it;
        continue;
      }
      const Seq s = it->first;
      Bytes framed = std::move(it->second.rhs);
      it = rows_.erase(it);
      const Bytes data = unframe_payload(framed);
      framed.resize(kLengthPrefix + data.size());
      lost_.erase(s);
      seen_.erase(s);
      decoded.push_back(s);
      make_available(s, framed, delivered);
    }
  }

  void make_available(Seq s, const Bytes& framed, std::vector<Delivery>& delivered) {
    brs_.insert_or_assign(s, framed);
    if (s < next_delivery_) return;
    pending_.emplace(s, unframe_payload(framed));
    for (auto it = pending_.begin(); it != pending_.end() && it->first == next_delivery_;) {
      delivered.push_back({it->first, std::move(it->second)});
      it = pending_.erase(it);
      ++next_delivery_;
    }
  }

  const gf::FieldTable* field_;
  std::map<Seq, Bytes> brs_;       // available framed sources still referenced
  std::map<Seq, Row> rows_;        // keyed by pivot
  std::set<Seq> lost_;             // known missing, not yet decoded
  std::set<Seq> seen_;             // pivots of rows_; subset of lost_
  std::map<Seq, Bytes> pending_;   // available but blocked behind a gap
  Seq max_known_ = 0;
  Seq next_delivery_ = 1;
};

}  // namespace tetrys
