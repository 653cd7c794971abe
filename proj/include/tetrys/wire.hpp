#pragma once

// Datagram layout shared by Tetrys endpoints. All integers are big-endian.
//
//   source: 0x00 | seq:u32 | payload...
//   repair: 0x01 | repair_seq:u32 | window_start:u32 | window_end:u32 |
//           coeff_seed:u64 | field_id:u8 | payload...
//   sack:   0x02 | base:u32 | bitmap_len:u16 | bitmap...
//
// Payload and bitmap run to the end of the datagram. In a SACK every
// sequence number below `base` is acknowledged, and bit b of the bitmap
// (MSB of byte 0 is b = 0) acknowledges base + 1 + b.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace tetrys {

using Bytes = std::vector<std::uint8_t>;
using Seq = std::uint32_t;

inline constexpr std::size_t kDefaultMtu = 1500;

struct SourcePacket {
  Seq seq = 0;
  Bytes payload;
  bool operator==(const SourcePacket&) const = default;
};

struct RepairPacket {
  std::uint32_t repair_seq = 0;
  Seq window_start = 0;
  Seq window_end = 0;  // inclusive
  std::uint64_t coeff_seed = 0;
  std::uint8_t field_id = 8;
  Bytes payload;
  bool operator==(const RepairPacket&) const = default;

  std::size_t window_size() const noexcept {
    return static_cast<std::size_t>(window_end) - window_start + 1;
  }
};

struct SackPacket {
  Seq base = 1;
  std::uint16_t bitmap_len = 0;
  Bytes bitmap;
  bool operator==(const SackPacket&) const = default;

  bool acknowledges(Seq seq) const noexcept {
    if (seq < base) return true;
    if (seq == base) return false;
    const std::size_t bit = static_cast<std::size_t>(seq - base - 1);
    const std::size_t byte = bit / 8;
    if (byte >= bitmap.size()) return false;
    return (bitmap[byte] >> (7 - bit % 8)) & 1u;
  }
};

using Packet = std::variant<SourcePacket, RepairPacket, SackPacket>;

enum class PacketType : std::uint8_t { source = 0, repair = 1, sack = 2 };

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EncodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int sh = 24; sh >= 0; sh -= 8) out.push_back(static_cast<std::uint8_t>(v >> sh));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int sh = 56; sh >= 0; sh -= 8) out.push_back(static_cast<std::uint8_t>(v >> sh));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename T>
  T get(const char* what) {
    if (data_.size() - pos_ < sizeof(T)) {
      throw ParseError(std::string("truncated header: ") + what);
    }
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v = static_cast<T>((v << 8) | data_[pos_ + i]);
    pos_ += sizeof(T);
    return v;
  }

  Bytes rest() {
    Bytes out(data_.begin() + static_cast<std::ptrdiff_t>(pos_), data_.end());
    pos_ = data_.size();
    return out;
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Bytes encode_packet(const Packet& pkt, std::size_t mtu = kDefaultMtu) {
  Bytes out;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SourcePacket>) {
          if (p.payload.size() > mtu) throw EncodeError("source payload exceeds MTU");
          out.reserve(5 + p.payload.size());
          out.push_back(static_cast<std::uint8_t>(PacketType::source));
          detail::put_u32(out, p.seq);
          out.insert(out.end(), p.payload.begin(), p.payload.end());
        } else if constexpr (std::is_same_v<T, RepairPacket>) {
          if (p.payload.size() > mtu) throw EncodeError("repair payload exceeds MTU");
          if (p.window_start > p.window_end) throw EncodeError("repair window is empty");
          out.reserve(22 + p.payload.size());
          out.push_back(static_cast<std::uint8_t>(PacketType::repair));
          detail::put_u32(out, p.repair_seq);
          detail::put_u32(out, p.window_start);
          detail::put_u32(out, p.window_end);
          detail::put_u64(out, p.coeff_seed);
          out.push_back(p.field_id);
          out.insert(out.end(), p.payload.begin(), p.payload.end());
        } else {
          if (p.bitmap.size() != p.bitmap_len) {
            throw EncodeError("sack bitmap_len does not match bitmap size");
          }
          out.reserve(7 + p.bitmap.size());
          out.push_back(static_cast<std::uint8_t>(PacketType::sack));
          detail::put_u32(out, p.base);
          detail::put_u16(out, p.bitmap_len);
          out.insert(out.end(), p.bitmap.begin(), p.bitmap.end());
        }
      },
      pkt);
  return out;
}

inline Packet decode_packet(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw ParseError("empty datagram");
  detail::Reader r(bytes.subspan(1));
  switch (bytes[0]) {
    case static_cast<std::uint8_t>(PacketType::source): {
      SourcePacket p;
      p.seq = r.get<std::uint32_t>("seq");
      p.payload = r.rest();
      return p;
    }
    case static_cast<std::uint8_t>(PacketType::repair): {
      RepairPacket p;
      p.repair_seq = r.get<std::uint32_t>("repair_seq");
      p.window_start = r.get<std::uint32_t>("window_start");
      p.window_end = r.get<std::uint32_t>("window_end");
      p.coeff_seed = r.get<std::uint64_t>("coeff_seed");
      p.field_id = r.get<std::uint8_t>("field_id");
      if (p.window_start > p.window_end) throw ParseError("repair window start after end");
      if (p.field_id < 1 || p.field_id > 8) throw ParseError("unknown field id");
      p.payload = r.rest();
      return p;
    }
    case static_cast<std::uint8_t>(PacketType::sack): {
      SackPacket p;
      p.base = r.get<std::uint32_t>("base");
      p.bitmap_len = r.get<std::uint16_t>("bitmap_len");
      if (r.remaining() != p.bitmap_len) throw ParseError("sack bitmap length mismatch");
      p.bitmap = r.rest();
      return p;
    }
    default:
      throw ParseError("unknown packet type " + std::to_string(bytes[0]));
  }
}

}  // namespace tetrys
