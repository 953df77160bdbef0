// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <sstream>

#include "spiel/checkpoint.hpp"
#include "spiel/delta_store.hpp"
#include "spiel/error.hpp"
#include "test_util.hpp"

using namespace spiel;
using spiel::testing::random_slice;
using spiel::testing::random_vector;

namespace {

// Largest-remainder allocation over exact rationals, written independently
// of the library: sort by remainder with a plain comparison on cross
// products.
std::vector<uint64_t> reference_allocation(const std::vector<uint64_t>& sizes, uint64_t budget) {
  uint64_t total = 0;
  for (auto s : sizes) total += s;
  std::vector<uint64_t> out(sizes.size());
  std::vector<uint64_t> rem(sizes.size());
  uint64_t used = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    out[i] = sizes[i] * budget / total;
    rem[i] = sizes[i] * budget % total;
    used += out[i];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rem[a] != rem[b] ? rem[a] > rem[b] : a < b;
  });
  for (std::size_t k = 0; used < budget; ++k, ++used) ++out[order[k]];
  return out;
}

DeltaModel<double> model_of(std::vector<std::pair<std::string, DeltaSlice<double>>> parts,
                            uint64_t d_theta) {
  DeltaModel<double> m;
  for (auto& [name, s] : parts) m.add(name, d_theta, std::move(s));
  return m;
}

}  // namespace

TEST(AllocateBudget, SymmetricSizesSplitEvenly) {
  const std::vector<uint64_t> sizes{100, 100};
  EXPECT_EQ(allocate_budget(sizes, 20), (std::vector<uint64_t>{10, 10}));
}

TEST(AllocateBudget, ProportionalSplit) {
  const std::vector<uint64_t> sizes{30, 70};
  EXPECT_EQ(allocate_budget(sizes, 10), (std::vector<uint64_t>{3, 7}));
}

TEST(AllocateBudget, RejectsBudgetAboveTotal) {
  const std::vector<uint64_t> sizes{10};
  EXPECT_THROW(allocate_budget(sizes, 11), Error);
}

TEST(AllocateBudget, RejectsEmptySubvector) {
  const std::vector<uint64_t> sizes{10, 0};
  EXPECT_THROW(allocate_budget(sizes, 1), Error);
}

TEST(AllocateBudget, TiesGoToLowerPosition) {
  const std::vector<uint64_t> sizes{10, 10, 10};
  EXPECT_EQ(allocate_budget(sizes, 1), (std::vector<uint64_t>{1, 0, 0}));
  EXPECT_EQ(allocate_budget(sizes, 2), (std::vector<uint64_t>{1, 1, 0}));
}

TEST(AllocateBudget, MatchesLargestRemainderOracleOnRandomCases) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::uniform_int_distribution<int> count(1, 6);
    std::uniform_int_distribution<uint64_t> size(1, 5000);
    std::vector<uint64_t> sizes(count(rng));
    uint64_t total = 0;
    for (auto& s : sizes) total += (s = size(rng));
    const uint64_t budget = std::uniform_int_distribution<uint64_t>(0, total)(rng);
    const auto got = allocate_budget(sizes, budget);
    ASSERT_EQ(got, reference_allocation(sizes, budget));
    ASSERT_EQ(std::accumulate(got.begin(), got.end(), uint64_t{0}), budget);
    for (std::size_t i = 0; i < sizes.size(); ++i) ASSERT_LE(got[i], sizes[i]);
    ASSERT_EQ(got, allocate_budget(sizes, budget));  // deterministic
  }
}

TEST(ScatterAdd, ZeroBase) {
  const auto s = make_slice<double>({1, 4}, {0.5, -1.0}, 6);
  const std::vector<double> base(6, 0.0);
  EXPECT_EQ(scatter_add<double>(s, base), (std::vector<double>{0, 0.5, 0, 0, -1.0, 0}));
}

TEST(ScatterAdd, EmptySliceIsIdentity) {
  const auto s = make_slice<double>({}, {}, 3);
  const std::vector<double> base{4, 5, 6};
  EXPECT_EQ(scatter_add<double>(s, base), base);
}

TEST(ScatterAdd, ElementwiseAddition) {
  const auto s = make_slice<double>({0, 2}, {1, 1}, 3);
  const std::vector<double> base{1, 2, 3};
  EXPECT_EQ(scatter_add<double>(s, base), (std::vector<double>{2, 2, 4}));
  EXPECT_EQ(base, (std::vector<double>{1, 2, 3}));
}

TEST(ScatterAdd, LengthMismatchThrows) {
  const auto s = make_slice<double>({0, 2}, {1, 1}, 3);
  const std::vector<double> base{1, 2};
  EXPECT_THROW(scatter_add<double>(s, base), Error);
}

TEST(Gather, Definition) {
  const std::vector<double> dense{7, 8, 9};
  const std::vector<uint64_t> idx{2, 0};
  EXPECT_EQ(gather<double>(dense, idx), (std::vector<double>{9, 7}));
}

TEST(Gather, OutOfRangeThrows) {
  const std::vector<double> dense{1};
  const std::vector<uint64_t> idx{3};
  EXPECT_THROW(gather<double>(dense, idx), Error);
}

TEST(ScatterGather, RoundTripIsExactForRandomSlices) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const uint64_t d = std::uniform_int_distribution<uint64_t>(1, 300)(rng);
    const uint64_t n = std::uniform_int_distribution<uint64_t>(0, d)(rng);
    const auto s = random_slice<float>(d, n, rng);
    const std::vector<float> zeros(d, 0.0f);
    const auto dense = scatter_add<float>(s, zeros);
    ASSERT_EQ(gather<float>(dense, s.indices), s.values);
  }
}

TEST(ScatterAdd, ChangesExactlyTheActivePositions) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const uint64_t d = std::uniform_int_distribution<uint64_t>(1, 200)(rng);
    const uint64_t n = std::uniform_int_distribution<uint64_t>(0, d)(rng);
    auto s = random_slice<double>(d, n, rng);
    for (auto& v : s.values) v = v >= 0 ? v + 0.5 : v - 0.5;  // nonzero
    const auto base = random_vector<double>(d, rng, -0.1, 0.1);
    const auto out = scatter_add<double>(s, base);
    std::size_t changed = 0;
    for (uint64_t j = 0; j < d; ++j) changed += out[j] != base[j];
    ASSERT_EQ(changed, n);
  }
}

TEST(MakeSlice, RejectsUnsortedDuplicateAndOutOfRange) {
  EXPECT_THROW(make_slice<double>({2, 1}, {1, 1}, 5), Error);
  EXPECT_THROW(make_slice<double>({1, 1}, {1, 1}, 5), Error);
  EXPECT_THROW(make_slice<double>({5}, {1}, 5), Error);
  EXPECT_THROW(make_slice<double>({1}, {}, 5), Error);
}

TEST(DeltaModel, PersistentFootprintIsFourPerEntry) {
  std::mt19937_64 rng(5);
  DeltaModel<float> m;
  m.add("a", 100, random_slice<float>(100, 7, rng));
  m.add("b", 50, random_slice<float>(50, 3, rng));
  EXPECT_EQ(m.d_phi(), 10u);
  EXPECT_LE(m.persistent_scalars(), 4 * m.d_phi());
  EXPECT_THROW(m.add("a", 100, random_slice<float>(100, 1, rng)), Error);
}

TEST(DeltaModel, CheckAgainstStore) {
  ParamStore<float> store;
  store.add(ParamSubvector<float>("w", 2, 3, std::vector<float>(6, 0.0f)));
  DeltaModel<float> ok;
  ok.add("w", 6, make_slice<float>({1}, {1.0f}, 6));
  EXPECT_NO_THROW(ok.check_against(store));
  DeltaModel<float> missing;
  missing.add("v", 6, make_slice<float>({1}, {1.0f}, 6));
  EXPECT_THROW(missing.check_against(store), Error);
  DeltaModel<float> wrong;
  wrong.add("w", 7, make_slice<float>({1}, {1.0f}, 7));
  EXPECT_THROW(wrong.check_against(store), Error);
}

TEST(Compose, EmptyIsIdentity) {
  std::mt19937_64 rng(6);
  auto a = model_of({{"w", random_slice<double>(40, 9, rng)}}, 40);
  auto empty = model_of({{"w", make_slice<double>({}, {}, 40)}}, 40);
  const auto c = compose(a, empty);
  const auto base = random_vector<double>(40, rng);
  EXPECT_EQ(scatter_add<double>(*c.find("w"), base), scatter_add<double>(*a.find("w"), base));
}

TEST(Compose, DisjointUnion) {
  auto a = model_of({{"w", make_slice<double>({1, 5}, {1.0, 2.0}, 8)}}, 8);
  auto b = model_of({{"w", make_slice<double>({0, 3, 7}, {3.0, 4.0, 5.0}, 8)}}, 8);
  const auto c = compose(a, b);
  EXPECT_EQ(c.find("w")->indices, (std::vector<uint64_t>{0, 1, 3, 5, 7}));
  EXPECT_EQ(c.find("w")->values, (std::vector<double>{3.0, 1.0, 4.0, 2.0, 5.0}));
  EXPECT_EQ(count_overlap(a, b), 0u);
}

TEST(Compose, CancellationRestoresBase) {
  auto a = model_of({{"w", make_slice<double>({3}, {2.0}, 6)}}, 6);
  auto b = model_of({{"w", make_slice<double>({3}, {-2.0}, 6)}}, 6);
  const auto c = compose(a, b);
  const std::vector<double> base{1, 2, 3, 4, 5, 6};
  EXPECT_EQ(scatter_add<double>(*c.find("w"), base), base);
  EXPECT_EQ(count_overlap(a, b), 1u);
}

TEST(Compose, MismatchedSubvectorsThrow) {
  auto a = model_of({{"w", make_slice<double>({3}, {2.0}, 6)}}, 6);
  auto b = model_of({{"v", make_slice<double>({3}, {2.0}, 6)}}, 6);
  auto c = model_of({{"w", make_slice<double>({3}, {2.0}, 7)}}, 7);
  EXPECT_THROW(compose(a, b), Error);
  EXPECT_THROW(compose(a, c), Error);
}

TEST(Compose, CommutativeOnRandomOverlappingDeltas) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const uint64_t d = std::uniform_int_distribution<uint64_t>(1, 64)(rng);
    auto a = model_of({{"w", random_slice<double>(d, std::uniform_int_distribution<uint64_t>(0, d)(rng), rng)}}, d);
    auto b = model_of({{"w", random_slice<double>(d, std::uniform_int_distribution<uint64_t>(0, d)(rng), rng)}}, d);
    const auto ab = compose(a, b);
    const auto ba = compose(b, a);
    // a + b == b + a exactly in IEEE arithmetic.
    ASSERT_EQ(ab, ba);
    const auto base = random_vector<double>(d, rng);
    ASSERT_EQ(scatter_add<double>(*ab.find("w"), base), scatter_add<double>(*ba.find("w"), base));
  }
}

TEST(Compose, AssociativeOnDisjointDeltas) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const uint64_t d = 90;
    auto idx = sample_without_replacement(d, 30, rng);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto part = [&](std::size_t from) {
      std::vector<uint64_t> i(idx.begin() + from, idx.begin() + from + 10);
      std::sort(i.begin(), i.end());
      return model_of({{"w", make_slice<double>(i, random_vector<double>(10, rng), d)}}, d);
    };
    auto a = part(0), b = part(10), c = part(20);
    ASSERT_EQ(compose(compose(a, b), c), compose(a, compose(b, c)));
  }
}

TEST(Checkpoint, RoundTripTwoSubvectorsBitExact) {
  std::mt19937_64 rng(9);
  DeltaModel<float> m;
  m.add("layer0.weight", 500, random_slice<float>(500, 37, rng));
  m.add("layer1.weight", 64, random_slice<float>(64, 5, rng));
  std::stringstream buf;
  write_checkpoint(buf, m);
  const auto back = read_checkpoint<float>(buf);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.entries()[i].name, m.entries()[i].name);
    EXPECT_EQ(back.entries()[i].d_theta, m.entries()[i].d_theta);
    EXPECT_EQ(back.entries()[i].slice.indices, m.entries()[i].slice.indices);
    const auto& x = back.entries()[i].slice.values;
    const auto& y = m.entries()[i].slice.values;
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      EXPECT_EQ(std::bit_cast<uint32_t>(x[k]), std::bit_cast<uint32_t>(y[k]));
    }
  }
}

TEST(Checkpoint, EmptySlicesRoundTrip) {
  DeltaModel<float> m;
  m.add("a", 10, make_slice<float>({}, {}, 10));
  std::stringstream buf;
  write_checkpoint(buf, m);
  const auto back = read_checkpoint<float>(buf);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_TRUE(back.entries()[0].slice.empty());
}

TEST(Checkpoint, ByteLayout) {
  DeltaModel<float> m;
  m.add("w", 4, make_slice<float>({2}, {1.0f}, 4));
  std::stringstream buf;
  write_checkpoint(buf, m);
  const std::string bytes = buf.str();
  const std::string expected = std::string("SPIEL\0", 6) + std::string("\x01\0\0\0", 4) +
                               std::string("\x01\0\0\0", 4) + std::string("\x01\0\0\0", 4) + "w" +
                               std::string("\x04\0\0\0\0\0\0\0", 8) +
                               std::string("\x01\0\0\0\0\0\0\0", 8) +
                               std::string("\x02\0\0\0\0\0\0\0", 8) + std::string("\0\0\x80\x3f", 4);
  EXPECT_EQ(bytes, expected);
}

TEST(Checkpoint, WrongMagicThrows) {
  std::stringstream buf("NOTSPIEL-and-more-bytes");
  EXPECT_THROW(read_checkpoint<float>(buf), FormatError);
}

TEST(Checkpoint, WrongVersionThrows) {
  std::stringstream buf(std::string("SPIEL\0", 6) + std::string("\x02\0\0\0\0\0\0\0", 8));
  EXPECT_THROW(read_checkpoint<float>(buf), FormatError);
}

TEST(Checkpoint, EveryTruncationThrows) {
  std::mt19937_64 rng(10);
  DeltaModel<float> m;
  m.add("w", 50, random_slice<float>(50, 4, rng));
  std::stringstream buf;
  write_checkpoint(buf, m);
  const std::string full = buf.str();
  for (std::size_t cut = 0; cut < full.size(); ++cut) {
    std::stringstream part(full.substr(0, cut));
    ASSERT_THROW(read_checkpoint<float>(part), FormatError) << "cut at " << cut;
  }
}

TEST(Checkpoint, CorruptIndicesAreRejected) {
  DeltaModel<float> m;
  m.add("w", 4, make_slice<float>({1, 2}, {1.0f, 2.0f}, 4));
  std::stringstream buf;
  write_checkpoint(buf, m);
  std::string bytes = buf.str();
  // First index (offset 6+4+4+4+1+8+8) set to 3 so that indices are not increasing.
  bytes[35] = 3;
  std::stringstream bad(bytes);
  EXPECT_THROW(read_checkpoint<float>(bad), FormatError);
}

TEST(Checkpoint, FailedWriteLeavesNoFile) {
  const auto dir = spiel::testing::temp_dir("atomic");
  const auto path = dir / "delta.spiel";
  EXPECT_THROW(atomic_write(path, [](std::ostream& out) {
                 out << "partial";
                 throw Error("boom");
               }),
               Error);
  EXPECT_FALSE(std::filesystem::exists(path));
  EXPECT_FALSE(std::filesystem::exists(dir / "delta.spiel.tmp"));
}

TEST(Checkpoint, SaveLoadFile) {
  std::mt19937_64 rng(12);
  DeltaModel<float> m;
  m.add("w", 20, random_slice<float>(20, 6, rng));
  const auto path = spiel::testing::temp_dir("saveload") / "d.spiel";
  save_checkpoint(m, path);
  const auto back = load_checkpoint<float>(path);
  EXPECT_EQ(back.entries()[0].slice.values, m.entries()[0].slice.values);
  EXPECT_EQ(back.entries()[0].slice.phi0, back.entries()[0].slice.values);
}
