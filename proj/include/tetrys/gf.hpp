#pragma once

// Arithmetic over GF(2^m), 1 <= m <= 8, backed by log/exp tables.
//
// Elements are stored in a byte. For m < 8 a payload is read as a packed
// bitstream of m-bit symbols, most significant bit first.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tetrys::gf {

using Element = std::uint8_t;

inline constexpr Element add(Element a, Element b) noexcept { return a ^ b; }

struct FieldSpec {
  unsigned m = 8;       // bits per element
  unsigned poly = 0;    // reduction polynomial including the x^m term

  unsigned size() const noexcept { return 1u << m; }

  // Default primitive polynomials. m in {1,2,3,8} are the supported fields,
  // the others are provided for field-size sweeps.
  static FieldSpec standard(unsigned m) {
    static constexpr std::array<unsigned, 9> polys = {
        0, 0x3, 0x7, 0xB, 0x13, 0x25, 0x43, 0x89, 0x11D};
    if (m < 1 || m > 8) {
      throw std::invalid_argument("unsupported field exponent m=" + std::to_string(m));
    }
    return FieldSpec{m, polys[m]};
  }
};

class FieldTable {
 public:
  explicit FieldTable(FieldSpec spec) : spec_(spec) {
    if (spec.m < 1 || spec.m > 8) {
      throw std::invalid_argument("unsupported field exponent m=" + std::to_string(spec.m));
    }
    if ((spec.poly >> spec.m) != 1u) {
      throw std::invalid_argument("reduction polynomial degree does not match m");
    }
    const unsigned q = spec.size();
    const unsigned order = q - 1;
    exp_.assign(2 * order, 0);
    log_.assign(q, 0);

    // Walk the powers of x. The polynomial is primitive iff x has order q-1.
    std::vector<bool> hit(q, false);
    unsigned x = 1;
    for (unsigned i = 0; i < order; ++i) {
      if (x == 0 || hit[x]) {
        throw std::invalid_argument("reduction polynomial is not primitive");
      }
      hit[x] = true;
      exp_[i] = static_cast<Element>(x);
      exp_[i + order] = static_cast<Element>(x);
      log_[x] = i;
      x <<= 1;
      if (x & q) x ^= spec.poly;
    }
    if (x != 1) {
      throw std::invalid_argument("reduction polynomial is not primitive");
    }

    mul_.assign(q * q, 0);
    for (unsigned a = 1; a < q; ++a) {
      for (unsigned b = 1; b < q; ++b) {
        mul_[a * q + b] = exp_[log_[a] + log_[b]];
      }
    }

    // Bytes per whole number of symbols: lcm(8, m) / 8.
    group_bytes_ = spec.m / std::gcd(spec.m, 8u);

    // Byte maps for fields whose symbols tile a byte; for m = 8 the
    // multiplication table already is one.
    if (spec.m < 8 && 8 % spec.m == 0) {
      const unsigned mask = q - 1;
      byte_maps_.assign(q * 256, 0);
      for (unsigned c = 0; c < q; ++c) {
        for (unsigned v = 0; v < 256; ++v) {
          unsigned r = 0;
          for (unsigned sh = 0; sh < 8; sh += spec.m) {
            r |= static_cast<unsigned>(mul(static_cast<Element>(c),
                                           static_cast<Element>((v >> sh) & mask)))
                 << sh;
          }
          byte_maps_[c * 256 + v] = static_cast<std::uint8_t>(r);
        }
      }
    }
  }

  // Shared immutable tables for the standard polynomials.
  static const FieldTable& standard(unsigned m) {
    static const std::array<FieldTable, 8> tables = {
        FieldTable(FieldSpec::standard(1)), FieldTable(FieldSpec::standard(2)),
        FieldTable(FieldSpec::standard(3)), FieldTable(FieldSpec::standard(4)),
        FieldTable(FieldSpec::standard(5)), FieldTable(FieldSpec::standard(6)),
        FieldTable(FieldSpec::standard(7)), FieldTable(FieldSpec::standard(8))};
    if (m < 1 || m > 8) {
      throw std::invalid_argument("unsupported field exponent m=" + std::to_string(m));
    }
    return tables[m - 1];
  }

  const FieldSpec& spec() const noexcept { return spec_; }
  unsigned bits() const noexcept { return spec_.m; }
  unsigned size() const noexcept { return spec_.size(); }
  // Payload lengths that are a multiple of this hold whole symbols.
  std::size_t group_bytes() const noexcept { return group_bytes_; }

  std::span<const Element> exp_table() const noexcept {
    return {exp_.data(), size() - 1};
  }
  std::span<const unsigned> log_table() const noexcept { return log_; }

  Element mul(Element a, Element b) const noexcept { return mul_[a * size() + b]; }

  Element inv(Element a) const {
    if (a == 0) throw std::domain_error("zero has no multiplicative inverse");
    const unsigned order = size() - 1;
    return exp_[(order - log_[a]) % order];
  }

  Element div(Element a, Element b) const { return mul(a, inv(b)); }

  // out = coeff * in, symbol by symbol. out.size() must equal in.size().
  void mul_slice(Element coeff, std::span<const std::uint8_t> in,
                 std::span<std::uint8_t> out) const {
    if (out.size() != in.size()) throw std::invalid_argument("mul_slice size mismatch");
    transform(coeff, in, out, false);
  }

  std::vector<std::uint8_t> mul_slice(Element coeff, std::span<const std::uint8_t> in) const {
    std::vector<std::uint8_t> out(in.size());
    transform(coeff, in, out, false);
    return out;
  }

  // dst ^= coeff * src, with src zero-extended to dst's length.
  void mul_add_slice(Element coeff, std::span<const std::uint8_t> src,
                     std::span<std::uint8_t> dst) const {
    if (dst.size() < src.size()) throw std::invalid_argument("mul_add_slice destination too short");
    const std::size_t whole = std::min(dst.size(), (src.size() + group_bytes_ - 1) / group_bytes_ * group_bytes_);
    if (whole == src.size()) {
      transform(coeff, src, dst.first(src.size()), true);
      return;
    }
    // A symbol straddles the end of src; its product spills into the padding.
    std::vector<std::uint8_t> padded(src.begin(), src.end());
    padded.resize(whole, 0);
    transform(coeff, padded, dst.first(whole), true);
  }

 private:
  const std::uint8_t* byte_map(Element coeff) const noexcept {
    return spec_.m == 8 ? &mul_[coeff * 256u] : &byte_maps_[coeff * 256u];
  }

  void transform(Element coeff, std::span<const std::uint8_t> in,
                 std::span<std::uint8_t> out, bool accumulate) const {
    const std::size_t n = in.size();
    if (coeff == 0) {
      if (!accumulate) std::fill(out.begin(), out.end(), 0);
      return;
    }
    if (coeff == 1) {
      for (std::size_t i = 0; i < n; ++i) out[i] = accumulate ? out[i] ^ in[i] : in[i];
      return;
    }
    if (8 % spec_.m == 0) {
      const std::uint8_t* lut = byte_map(coeff);
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = accumulate ? out[i] ^ lut[in[i]] : lut[in[i]];
      }
      return;
    }

    // Symbols straddle bytes: process groups of lcm(8,m) bits. A trailing
    // partial group is zero-extended and only its present bytes are written,
    // which keeps the map linear.
    const unsigned m = spec_.m;
    const unsigned mask = (1u << m) - 1;
    const std::size_t gb = group_bytes_;
    const unsigned gbits = static_cast<unsigned>(gb * 8);
    for (std::size_t pos = 0; pos < n; pos += gb) {
      const std::size_t len = std::min(gb, n - pos);
      std::uint64_t word = 0;
      for (std::size_t b = 0; b < gb; ++b) {
        word = (word << 8) | (b < len ? in[pos + b] : 0u);
      }
      std::uint64_t res = 0;
      for (unsigned sh = 0; sh < gbits; sh += m) {
        res |= static_cast<std::uint64_t>(mul(coeff, static_cast<Element>((word >> sh) & mask))) << sh;
      }
      for (std::size_t b = 0; b < len; ++b) {
        const auto byte = static_cast<std::uint8_t>(res >> (8 * (gb - 1 - b)));
        out[pos + b] = accumulate ? out[pos + b] ^ byte : byte;
      }
    }
  }

  FieldSpec spec_;
  std::vector<Element> exp_;
  std::vector<unsigned> log_;
  std::vector<Element> mul_;
  std::vector<std::uint8_t> byte_maps_;
  std::size_t group_bytes_ = 1;
};

}  // namespace tetrys::gf
