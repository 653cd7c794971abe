#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <vector>

#include "tetrys/codec.hpp"
#include "tetrys/splitmix.hpp"

using namespace tetrys;

namespace {

Bytes data(std::initializer_list<int> v) {
  Bytes b;
  for (int x : v) b.push_back(static_cast<std::uint8_t>(x));
  return b;
}

Bytes random_bytes(SplitMix64& g, std::size_t n) {
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(g.next());
  return b;
}

std::vector<Seq> seqs(const std::vector<Delivery>& ds) {
  std::vector<Seq> out;
  for (const auto& d : ds) out.push_back(d.seq);
  return out;
}

// Dense Gauss-Jordan inverse over the field, independent of the decoder.
std::vector<std::vector<gf::Element>> invert(std::vector<std::vector<gf::Element>> a,
                                             const gf::FieldTable& f) {
  const std::size_t n = a.size();
  std::vector<std::vector<gf::Element>> inv(n, std::vector<gf::Element>(n, 0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    while (piv < n && a[piv][col] == 0) ++piv;
    if (piv == n) throw std::runtime_error("singular");
    std::swap(a[piv], a[col]);
    std::swap(inv[piv], inv[col]);
    const gf::Element s = f.inv(a[col][col]);
    for (std::size_t j = 0; j < n; ++j) {
      a[col][j] = f.mul(s, a[col][j]);
      inv[col][j] = f.mul(s, inv[col][j]);
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col || a[r][col] == 0) continue;
      const gf::Element c = a[r][col];
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] ^= f.mul(c, a[col][j]);
        inv[r][j] ^= f.mul(c, inv[col][j]);
      }
    }
  }
  return inv;
}

}  // namespace

TEST(Framing, RoundTrip) {
  const Bytes p = data({1, 2, 3});
  const Bytes f = frame_payload(p);
  EXPECT_EQ(f, data({0, 3, 1, 2, 3}));
  Bytes padded = f;
  padded.resize(9, 0);
  EXPECT_EQ(unframe_payload(padded), p);
  EXPECT_THROW(unframe_payload(data({0, 9, 1})), ProtocolError);
}

TEST(Encoder, RepairEveryKSources) {
  Encoder enc({2, 8, 1, kDefaultMtu});
  const auto o1 = enc.on_source(data({10}));
  EXPECT_EQ(o1.source.seq, 1u);
  EXPECT_FALSE(o1.repair);
  const auto o2 = enc.on_source(data({20}));
  EXPECT_EQ(o2.source.seq, 2u);
  ASSERT_TRUE(o2.repair);
  EXPECT_EQ(o2.repair->window_start, 1u);
  EXPECT_EQ(o2.repair->window_end, 2u);
  EXPECT_EQ(o2.repair->field_id, 8);
}

TEST(Encoder, WindowAdvancesAfterAck) {
  Encoder enc({2, 8, 1, kDefaultMtu});
  enc.on_source(data({1}));
  enc.on_source(data({2}));
  EXPECT_EQ(enc.on_sack(SackPacket{3, 0, {}}), 2u);
  enc.on_source(data({3}));
  const auto o = enc.on_source(data({4}));
  ASSERT_TRUE(o.repair);
  EXPECT_EQ(o.repair->window_start, 3u);
  EXPECT_EQ(o.repair->window_end, 4u);
}

TEST(Encoder, LostSackKeepsWindow) {
  Encoder enc({2, 8, 1, kDefaultMtu});
  for (int i = 0; i < 4; ++i) enc.on_source(data({i}));
  // A SACK reporting P1 and P2 missing acknowledges nothing.
  EXPECT_EQ(enc.on_sack(SackPacket{1, 0, {}}), 0u);
  EXPECT_EQ(enc.make_repair().window_start, 1u);
}

TEST(Encoder, StaleAndDuplicateSacksAreIdempotent) {
  Encoder enc({3, 8, 1, kDefaultMtu});
  for (int i = 0; i < 5; ++i) enc.on_source(data({i}));
  const SackPacket s{3, 1, {0b10000000}};  // acks 1, 2, 4
  EXPECT_EQ(enc.on_sack(s), 3u);
  EXPECT_EQ(enc.on_sack(s), 0u);
  EXPECT_EQ(enc.on_sack(SackPacket{2, 0, {}}), 0u);
  EXPECT_EQ(enc.window_size(), 2u);
  EXPECT_TRUE(enc.contains(3));
  EXPECT_FALSE(enc.contains(4));
  EXPECT_TRUE(enc.contains(5));
  EXPECT_EQ(enc.hull_span(), 3u);
}

TEST(Encoder, EmptyWindowEmitsNoRepair) {
  Encoder enc({1, 8, 1, kDefaultMtu});
  enc.push_source(data({1}));
  enc.on_sack(SackPacket{2, 0, {}});
  EXPECT_EQ(enc.window_size(), 0u);
  EXPECT_THROW(enc.make_repair(), std::logic_error);
  EXPECT_THROW(enc.push_source(Bytes(enc.max_payload() + 1)), std::length_error);
}

TEST(Encoder, SingleSourceRepairIsScaledCopy) {
  Encoder enc({1, 8, 9, kDefaultMtu});
  const auto o = enc.on_source(data({5, 6, 7}));
  ASSERT_TRUE(o.repair);
  const auto& f = gf::FieldTable::standard(8);
  const auto alpha = coeff_stream(o.repair->coeff_seed, 1, f)[0];
  EXPECT_EQ(o.repair->payload, f.mul_slice(alpha, o.source.payload));

  Decoder dec(8);
  const auto res = dec.on_repair(*o.repair);
  EXPECT_EQ(res.decoded, std::vector<Seq>{1});
  ASSERT_EQ(res.delivered.size(), 1u);
  EXPECT_EQ(res.delivered[0].payload, data({5, 6, 7}));
}

TEST(Encoder, RepairIsLinearCombination) {
  Encoder enc({2, 8, 3, kDefaultMtu});
  const auto a = enc.on_source(data({1, 2, 3, 4, 5}));
  const auto b = enc.on_source(data({9}));
  const RepairPacket& r = *b.repair;
  const auto& f = gf::FieldTable::standard(8);
  const auto c = coeff_stream(r.coeff_seed, 2, f);
  ASSERT_EQ(r.payload.size(), a.source.payload.size());
  Bytes rest = r.payload;
  f.mul_add_slice(c[0], a.source.payload, rest);
  Bytes expect = f.mul_slice(c[1], b.source.payload);
  expect.resize(rest.size(), 0);
  EXPECT_EQ(rest, expect);
}

TEST(Encoder, SubByteFieldsPadToWholeSymbols) {
  for (unsigned m : {1u, 2u, 3u}) {
    Encoder enc({2, m, 3, kDefaultMtu});
    enc.on_source(data({1, 2}));
    const auto o = enc.on_source(data({1}));
    ASSERT_TRUE(o.repair);
    EXPECT_EQ(o.repair->payload.size() % enc.field().group_bytes(), 0u);
    EXPECT_EQ(o.repair->field_id, m);
  }
}

TEST(Decoder, InOrderDelivery) {
  Decoder dec;
  EXPECT_EQ(seqs(dec.on_source({1, frame_payload(data({1}))})), std::vector<Seq>{1});
  EXPECT_TRUE(dec.on_source({3, frame_payload(data({3}))}).empty());
  EXPECT_TRUE(dec.is_lost(2));
  EXPECT_EQ(dec.lost_pending(), 1u);
  EXPECT_TRUE(dec.on_source({3, frame_payload(data({3}))}).empty());  // duplicate
  EXPECT_EQ(dec.next_delivery(), 2u);
}

TEST(Decoder, SackSemantics) {
  Decoder dec;
  const auto empty = dec.make_sack();
  EXPECT_EQ(empty.base, 1u);
  EXPECT_TRUE(empty.bitmap.empty());
  for (Seq s = 1; s <= 5; ++s) dec.on_source({s, frame_payload(data({int(s)}))});
  const auto all = dec.make_sack();
  EXPECT_EQ(all.base, 6u);
  EXPECT_TRUE(all.bitmap.empty());
  dec.on_source({8, frame_payload(data({8}))});
  const auto gap = dec.make_sack();
  EXPECT_EQ(gap.base, 6u);
  EXPECT_FALSE(gap.acknowledges(7));
  EXPECT_TRUE(gap.acknowledges(8));
  EXPECT_FALSE(gap.acknowledges(9));
}

TEST(Decoder, PruneBelowWindowStart) {
  Decoder dec;
  for (Seq s = 1; s <= 10; ++s) dec.on_source({s, frame_payload(data({int(s)}))});
  EXPECT_EQ(dec.prune(1), 0u);
  EXPECT_EQ(dec.prune(6), 5u);
  EXPECT_EQ(dec.source_buffer_size(), 5u);
}

TEST(Decoder, RejectsMismatchedFieldAndPrunedSources) {
  Encoder enc({2, 8, 1, kDefaultMtu});
  Decoder dec(3);
  enc.on_source(data({1}));
  const auto o = enc.on_source(data({2}));
  EXPECT_THROW(dec.on_repair(*o.repair), ProtocolError);

  Decoder d8(8);
  d8.on_source(o.source);
  d8.on_source({1, frame_payload(data({1}))});
  d8.prune(3);
  EXPECT_THROW(d8.on_repair(*o.repair), ProtocolError);
}

TEST(Decoder, NoLossRepairIsDiscarded) {
  Encoder enc({2, 8, 1, kDefaultMtu});
  Decoder dec;
  const auto a = enc.on_source(data({1}));
  const auto b = enc.on_source(data({2}));
  dec.on_source(a.source);
  dec.on_source(b.source);
  const auto res = dec.on_repair(*b.repair);
  EXPECT_EQ(res.outcome, RepairOutcome::no_unknowns);
  EXPECT_TRUE(res.decoded.empty());
  EXPECT_EQ(dec.repair_buffer_size(), 0u);
}

TEST(Decoder, DuplicateEquationIsDependent) {
  Encoder enc({2, 8, 1, kDefaultMtu});
  enc.on_source(data({1}));
  const auto o = enc.on_source(data({2}));
  Decoder dec;
  EXPECT_EQ(dec.on_repair(*o.repair).outcome, RepairOutcome::useful);
  const auto again = dec.on_repair(*o.repair);
  EXPECT_EQ(again.outcome, RepairOutcome::dependent);
  EXPECT_FALSE(again.seen);
  EXPECT_TRUE(again.decoded.empty());
  EXPECT_EQ(dec.repair_buffer_size(), 1u);
  EXPECT_EQ(dec.seen_count(), 1u);
}

// k = 2: P2 lost, R(1,2) rebuilds it. The SACK is lost, P3, P4 and R(1..4)
// are lost, and R(1..6), R(1..8) rebuild both.
TEST(Scenario, SimpleExchange) {
  Encoder enc({2, 8, 11, kDefaultMtu});
  Decoder dec;
  std::vector<Seq> delivered;
  auto take = [&](const std::vector<Delivery>& ds) {
    for (const auto& d : ds) delivered.push_back(d.seq);
  };
  auto o1 = enc.on_source(data({1}));
  auto o2 = enc.on_source(data({2}));
  take(dec.on_source(o1.source));
  auto r = dec.on_repair(*o2.repair);
  EXPECT_EQ(r.decoded, std::vector<Seq>{2});
  take(r.delivered);
  EXPECT_EQ(delivered, (std::vector<Seq>{1, 2}));
  (void)dec.make_sack();  // lost

  enc.on_source(data({3}));
  auto o4 = enc.on_source(data({4}));
  EXPECT_EQ(o4.repair->window_start, 1u);  // lost as well
  auto o5 = enc.on_source(data({5}));
  auto o6 = enc.on_source(data({6}));
  EXPECT_EQ(o6.repair->window_start, 1u);
  EXPECT_EQ(o6.repair->window_end, 6u);
  take(dec.on_source(o5.source));
  take(dec.on_source(o6.source));
  r = dec.on_repair(*o6.repair);
  EXPECT_EQ(r.seen, Seq{3});
  EXPECT_TRUE(r.decoded.empty());
  auto o7 = enc.on_source(data({7}));
  auto o8 = enc.on_source(data({8}));
  take(dec.on_source(o7.source));
  take(dec.on_source(o8.source));
  r = dec.on_repair(*o8.repair);
  EXPECT_EQ(r.decoded, (std::vector<Seq>{3, 4}));
  take(r.delivered);
  EXPECT_EQ(delivered, (std::vector<Seq>{1, 2, 3, 4, 5, 6, 7, 8}));
}

// k = 2 with seen packets: P1, P2, P3 lost; R(1,2), R(2..4), R(2..6) decode
// them; a later repair that excludes them lets the receiver drop them.
TEST(Scenario, SeenPacketsAndSelectiveAcks) {
  const auto& f = gf::FieldTable::standard(8);
  Encoder enc({2, 8, 5, kDefaultMtu});
  Decoder dec;
  std::vector<Bytes> sent(9);
  auto src = [&](int i) {
    auto o = enc.on_source(data({i, i * 3, i * 7}));
    sent[static_cast<std::size_t>(i)] = o.source.payload;
    return o;
  };

  src(1);
  auto o2 = src(2);
  const RepairPacket r12 = *o2.repair;
  auto res = dec.on_repair(r12);
  EXPECT_EQ(res.seen, Seq{1});
  const SackPacket sack1 = dec.make_sack();
  EXPECT_TRUE(sack1.acknowledges(1));
  EXPECT_FALSE(sack1.acknowledges(2));

  src(3);
  auto o4 = src(4);
  // The SACK reaches the sender before R(2..4) is built.
  EXPECT_EQ(o4.repair->window_start, 1u);
  enc.on_sack(sack1);
  const RepairPacket r24 = enc.make_repair();
  EXPECT_EQ(r24.window_start, 2u);
  EXPECT_EQ(r24.window_end, 4u);
  dec.on_source(o4.source);
  res = dec.on_repair(r24);
  EXPECT_EQ(res.seen, Seq{2});

  auto o5 = src(5);
  dec.on_source(o5.source);
  const SackPacket sack2 = dec.make_sack();
  for (Seq s : {1u, 2u, 4u, 5u}) EXPECT_TRUE(sack2.acknowledges(s)) << s;
  EXPECT_FALSE(sack2.acknowledges(3));

  auto o6 = src(6);
  ASSERT_TRUE(o6.repair);
  EXPECT_EQ(o6.repair->window_start, 2u);
  EXPECT_EQ(o6.repair->window_end, 6u);

  // Matrix shape: R(1,2) spans P1, P2; the later repairs have no P1 column.
  const auto c12 = coeff_stream(r12.coeff_seed, 2, f);
  EXPECT_NE(c12[0], 0);
  EXPECT_NE(c12[1], 0);

  dec.on_source(o6.source);
  res = dec.on_repair(*o6.repair);
  EXPECT_EQ(res.decoded, (std::vector<Seq>{1, 2, 3}));
  ASSERT_EQ(res.delivered.size(), 6u);
  for (const auto& d : res.delivered) {
    EXPECT_EQ(frame_payload(d.payload), sent[d.seq]) << d.seq;
  }
  EXPECT_EQ(dec.repair_buffer_size(), 0u);
  EXPECT_EQ(dec.source_buffer_size(), 6u);

  enc.on_sack(sack2);
  src(7);
  auto o8 = src(8);
  ASSERT_TRUE(o8.repair);
  EXPECT_EQ(o8.repair->window_start, 3u);
  EXPECT_EQ(o8.repair->window_end, 8u);
  EXPECT_EQ(enc.window_size(), 4u);  // 3, 6, 7, 8
  dec.on_source({7, sent[7]});
  dec.on_source({8, sent[8]});
  dec.on_repair(*o8.repair);
  EXPECT_EQ(dec.source_buffer_size(), 6u);  // 3..8
}

TEST(Decoder, MatchesDenseInverseOracle) {
  const auto& f = gf::FieldTable::standard(8);
  SplitMix64 g(31337);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5;
    std::vector<Bytes> framed(n);
    std::size_t len = 0;
    for (auto& p : framed) {
      p = frame_payload(random_bytes(g, 1 + g.next() % 30));
      len = std::max(len, p.size());
    }
    std::vector<std::vector<gf::Element>> G(n);
    std::vector<RepairPacket> repairs(n);
    for (std::size_t r = 0; r < n; ++r) {
      repairs[r] = RepairPacket{static_cast<std::uint32_t>(r + 1), 1, 5, g.next(), 8, Bytes(len, 0)};
      G[r] = coeff_stream(repairs[r].coeff_seed, n, f);
      for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t b = 0; b < framed[c].size(); ++b) {
          repairs[r].payload[b] ^= f.mul(G[r][c], framed[c][b]);
        }
      }
    }
    const auto Ginv = invert(G, f);
    std::vector<Bytes> oracle(n, Bytes(len, 0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t b = 0; b < len; ++b) oracle[i][b] ^= f.mul(Ginv[i][r], repairs[r].payload[b]);
      }
    }
    Decoder dec;
    std::vector<Delivery> got;
    for (const auto& r : repairs) {
      auto res = dec.on_repair(r);
      got.insert(got.end(), res.delivered.begin(), res.delivered.end());
    }
    ASSERT_EQ(got.size(), n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(unframe_payload(oracle[i]), got[i].payload);
      EXPECT_EQ(frame_payload(got[i].payload), framed[i]);
    }
  }
}

TEST(Decoder, LateSourceSubstitutesIntoRows) {
  Encoder enc({4, 8, 2, kDefaultMtu});
  std::vector<SourcePacket> src;
  std::optional<RepairPacket> rep;
  for (int i = 1; i <= 4; ++i) {
    auto o = enc.on_source(data({i, i}));
    src.push_back(o.source);
    if (o.repair) rep = o.repair;
  }
  Decoder dec;
  dec.on_source(src[0]);
  dec.on_source(src[3]);  // 2, 3 missing
  auto r = dec.on_repair(*rep);
  EXPECT_EQ(r.seen, Seq{2});
  EXPECT_TRUE(r.decoded.empty());
  // P2 shows up late: the row now isolates P3.
  const auto ds = dec.on_source(src[1]);
  EXPECT_EQ(seqs(ds), (std::vector<Seq>{2, 3, 4}));
  EXPECT_EQ(dec.lost_pending(), 0u);
}

// Random traces with random losses of every packet kind, including SACKs.
TEST(Codec, RandomTracesDeliverExactlyOnceInOrder) {
  SplitMix64 g(4242);
  for (int trace = 0; trace < 1000; ++trace) {
    const unsigned m = std::array<unsigned, 4>{1, 2, 3, 8}[g.next() % 4];
    const unsigned k = 1 + static_cast<unsigned>(g.next() % 6);
    const double p = g.uniform() * 0.6 / (k + 1);
    const double sack_loss = g.uniform();
    Encoder enc({k, m, g.next(), kDefaultMtu});
    Decoder dec(m);
    std::map<Seq, Bytes> originals;
    std::vector<Delivery> delivered;
    auto absorb = [&](std::vector<Delivery> ds) { delivered.insert(delivered.end(), ds.begin(), ds.end()); };
    std::vector<SackPacket> in_flight;
    const int n = 20 + static_cast<int>(g.next() % 60);
    for (int i = 0; i < n; ++i) {
      const Bytes payload = random_bytes(g, g.next() % 20);
      auto o = enc.on_source(payload);
      originals[o.source.seq] = payload;
      if (g.uniform() >= p) absorb(dec.on_source(o.source));
      if (o.repair && g.uniform() >= p) absorb(dec.on_repair(*o.repair).delivered);
      if (g.next() % 3 == 0) {
        in_flight.push_back(dec.make_sack());
        if (in_flight.size() > 2) {
          if (g.uniform() >= sack_loss) enc.on_sack(in_flight.front());
          in_flight.erase(in_flight.begin());
        }
      }
    }
    for (int flush = 0; flush < 5000 && dec.next_delivery() <= static_cast<Seq>(n); ++flush) {
      ASSERT_GT(enc.window_size(), 0u);
      const RepairPacket r = enc.make_repair();
      if (g.uniform() >= p) absorb(dec.on_repair(r).delivered);
      if (g.uniform() >= sack_loss) enc.on_sack(dec.make_sack());
    }
    ASSERT_EQ(delivered.size(), static_cast<std::size_t>(n)) << "trace " << trace << " m=" << m;
    for (std::size_t i = 0; i < delivered.size(); ++i) {
      ASSERT_EQ(delivered[i].seq, i + 1);
      ASSERT_EQ(delivered[i].payload, originals[delivered[i].seq]);
    }
  }
}
