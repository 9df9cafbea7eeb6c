#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "support/fixtures.hpp"
#include "v6forge/errors.hpp"
#include "v6forge/seedclass.hpp"

using namespace v6forge;
using namespace v6forge::seedclass;
using addr6::NybbleSeq;
using addr6::SeedSet;

namespace {

SeedSet set_of(std::initializer_list<const char*> hex) {
  SeedSet s;
  for (const char* h : hex) s.insert(NybbleSeq::from_hex(h));
  return s;
}

// Histogram entropy in base 2 scaled by 1/4.
double brute_entropy(const SeedSet& set, std::size_t index) {
  std::map<int, double> counts;
  for (const auto& s : set) counts[s[index - 1]] += 1;
  double h = 0;
  for (const auto& [sym, c] : counts) {
    const double p = c / static_cast<double>(set.size());
    h -= p * std::log2(p);
  }
  return h / 4;
}

std::array<std::uint8_t, 16> iid_of(const char* hex) {
  std::array<std::uint8_t, 16> out{};
  for (std::size_t i = 0; i < 16; ++i) out[i] = NybbleSeq::from_hex(std::string(16, '0') + hex)[16 + i];
  return out;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

}  // namespace

TEST(ColumnEntropy, ConstantUniformAndHalf) {
  SeedSet uniform;
  for (int v = 0; v < 16; ++v) {
    std::string h(32, '0');
    h[4] = "0123456789abcdef"[v];
    uniform.insert(NybbleSeq::from_hex(h));
  }
  EXPECT_EQ(column_entropy(uniform, 1), 0.0);
  EXPECT_NEAR(column_entropy(uniform, 5), 1.0, 1e-12);

  const auto half = set_of({"00000000000000000000000000000000", "00000000000000000000000000000001",
                            "00000000000000000000000000000010", "00000000000000000000000000000011"});
  EXPECT_NEAR(column_entropy(half, 32), 0.25, 1e-12);
  EXPECT_NEAR(column_entropy(half, 31), 0.25, 1e-12);
}

TEST(ColumnEntropy, Errors) {
  EXPECT_THROW(column_entropy(SeedSet{}, 1), EmptySet);
  const auto one = set_of({"00000000000000000000000000000000"});
  EXPECT_THROW(column_entropy(one, 0), BadRange);
  EXPECT_THROW(column_entropy(one, 33), BadRange);
}

TEST(ColumnEntropy, MatchesHistogramOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    SeedSet set;
    const std::size_t n = 1 + rng.below(1000);
    const std::size_t alphabet = 1 + rng.below(16);
    for (std::size_t i = 0; i < n; ++i) {
      NybbleSeq::storage_type v{};
      for (auto& x : v) x = static_cast<std::uint8_t>(rng.below(alphabet));
      set.insert(NybbleSeq(v));
    }
    for (std::size_t col = 1; col <= 32; ++col) {
      const double h = column_entropy(set, col);
      ASSERT_NEAR(h, brute_entropy(set, col), 1e-9);
      ASSERT_GE(h, 0.0);
      ASSERT_LE(h, 1.0);
    }
  }
}

TEST(Fingerprint, SingletonIsZero) {
  const auto f = fingerprint(set_of({"20010db8002000030000000000000301"}));
  EXPECT_EQ(f.values.size(), 24u);
  for (double v : f.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(f.support, 1u);
  EXPECT_EQ(f.prefix, "20010db8002000030000000000000301");
}

TEST(Fingerprint, RandomTailNearOne) {
  Rng rng(4);
  SeedSet set;
  while (set.size() < 10000) {
    NybbleSeq::storage_type v{};
    v[0] = 2;
    for (std::size_t i = 8; i < 32; ++i) v[i] = static_cast<std::uint8_t>(rng.below(16));
    set.insert(NybbleSeq(v));
  }
  const auto f = fingerprint(set, 9, 32);
  ASSERT_EQ(f.values.size(), 24u);
  for (double v : f.values) EXPECT_NEAR(v, 1.0, 0.05);
  EXPECT_EQ(f.prefix, "20000000");
}

TEST(Fingerprint, SingleColumnMatchesColumnEntropy) {
  const auto set = set_of({"20010db8000000000000000000000001", "20010db8000000000000000000000002",
                           "20010db8000000000000000000000013"});
  for (std::size_t i = 1; i <= 32; ++i) {
    const auto f = fingerprint(set, i, i);
    ASSERT_EQ(f.values.size(), 1u);
    EXPECT_EQ(f.values[0], column_entropy(set, i));
  }
  EXPECT_THROW(fingerprint(set, 10, 9), BadRange);
  EXPECT_THROW(fingerprint(set, 0, 9), BadRange);
  EXPECT_THROW(fingerprint(SeedSet{}), EmptySet);
}

TEST(GroupByPrefix, Examples) {
  const auto same = set_of({"20010db8000000000000000000000001", "20010db8ffff00000000000000000002"});
  EXPECT_EQ(group_by_prefix(same).size(), 1u);
  const auto split = set_of({"20010db8000000000000000000000001", "30010db8000000000000000000000001"});
  EXPECT_EQ(group_by_prefix(split).size(), 2u);
  EXPECT_THROW(group_by_prefix(same, 0), BadRange);
  EXPECT_THROW(group_by_prefix(same, 32), BadRange);
}

TEST(GroupByPrefix, SevenPrefixPartition) {
  Rng rng(8);
  SeedSet set;
  while (set.size() < 1000) {
    NybbleSeq::storage_type v{};
    const auto p = rng.below(7);
    v[0] = 2;
    v[7] = static_cast<std::uint8_t>(p);
    for (std::size_t i = 8; i < 32; ++i) v[i] = static_cast<std::uint8_t>(rng.below(16));
    set.insert(NybbleSeq(v));
  }
  const auto groups = group_by_prefix(set, 8);
  ASSERT_EQ(groups.size(), 7u);
  std::size_t total = 0;
  std::set<NybbleSeq> seen;
  for (const auto& [prefix, g] : groups) {
    total += g.size();
    for (const auto& s : g) {
      EXPECT_EQ(s.to_string().substr(0, 8), prefix);
      EXPECT_TRUE(seen.insert(s).second);
      EXPECT_TRUE(set.contains(s));
    }
  }
  EXPECT_EQ(total, 1000u);
}

TEST(AddressEntropy, Examples) {
  EXPECT_EQ(address_char_entropy(iid_of("0000000000000000")), 0.0);
  EXPECT_NEAR(address_char_entropy(iid_of("0123456789abcdef")), 1.0, 1e-12);
  EXPECT_NEAR(address_char_entropy(iid_of("aaaaaaaabbbbbbbb")), 0.25, 1e-12);
}

TEST(ZeroRuns, CountsMaximalRunsOfTwoOrMore) {
  EXPECT_EQ(zero_run_count(iid_of("0000000000000301")), 1u);
  EXPECT_EQ(zero_run_count(iid_of("0000002000000001")), 2u);
  EXPECT_EQ(zero_run_count(iid_of("1010101010101010")), 0u);
  EXPECT_EQ(zero_run_count(iid_of("1001001001001001")), 5u);
}

TEST(ClassifyManual, Examples) {
  EXPECT_EQ(classify_manual(NybbleSeq::from_hex("20010db8002000030000000000000301")), SchemeLabel::FixedIID);
  EXPECT_EQ(classify_manual(NybbleSeq::from_hex("20010db800200003021b21fffe3a9c42")), SchemeLabel::SlaacEui64);
  EXPECT_EQ(classify_manual(NybbleSeq::from_hex("20010db8002000030000fffffe000000")), SchemeLabel::SlaacEui64);
  EXPECT_EQ(classify_manual(NybbleSeq::from_hex("20010db8002000030123456789abcdef")), SchemeLabel::SlaacPrivacy);
  EXPECT_EQ(classify_manual(NybbleSeq::from_hex("20010db8002000030000002000000001")), SchemeLabel::Low64Subnet);
  EXPECT_EQ(classify_manual(NybbleSeq::from_hex("20010db8002000031212121212121212")), SchemeLabel::Other);
}

TEST(ClassifyManual, ConstructedCorpusRecoversLabels) {
  const auto corpus = fixtures::scheme_corpus(1000, 77);
  for (std::size_t i = 0; i < corpus.addresses.size(); ++i)
    ASSERT_EQ(classify_manual(corpus.addresses[i]), corpus.labels[i]) << corpus.addresses[i].to_string();
  Rng rng(1);
  for (int i = 0; i < 50; ++i)
    EXPECT_EQ(classify_manual(fixtures::make_scheme_address(SchemeLabel::Other, rng)), SchemeLabel::Other);
}

TEST(ClassifyManual, LabelNames) {
  EXPECT_EQ(label_name(SchemeLabel::FixedIID), "Fixed IID");
  EXPECT_EQ(label_slug(SchemeLabel::SlaacPrivacy), "slaac_privacy");
}

TEST(KMeans, SingleClusterIsMean) {
  const std::vector<std::vector<double>> pts = {{0, 0}, {2, 0}, {0, 4}, {2, 4}};
  const auto m = kmeans(pts, 1, 3);
  ASSERT_EQ(m.centroids.size(), 1u);
  EXPECT_DOUBLE_EQ(m.centroids[0][0], 1.0);
  EXPECT_DOUBLE_EQ(m.centroids[0][1], 2.0);
  // total variance times n: 4 * (1 + 4)
  EXPECT_DOUBLE_EQ(m.sse, 20.0);
}

TEST(KMeans, TwoBlobsRecovered) {
  auto pts = fixtures::three_blobs(30, 6, 2);
  pts.resize(60);  // first two blobs only
  const auto m = kmeans(pts, 2, 9);
  for (std::size_t i = 1; i < 30; ++i) EXPECT_EQ(m.assignments[i], m.assignments[0]);
  for (std::size_t i = 31; i < 60; ++i) EXPECT_EQ(m.assignments[i], m.assignments[30]);
  EXPECT_NE(m.assignments[0], m.assignments[30]);
}

TEST(KMeans, OneClusterPerPointHasZeroSse) {
  const auto pts = fixtures::three_blobs(3, 4, 6);
  const auto m = kmeans(pts, pts.size(), 1);
  EXPECT_EQ(m.sse, 0.0);
}

TEST(KMeans, Errors) {
  const std::vector<std::vector<double>> pts = {{0.0}, {1.0}};
  EXPECT_THROW(kmeans(pts, 3, 1), TooFewGroups);
  EXPECT_THROW(kmeans(pts, 0, 1), BadRange);
}

TEST(KMeans, NearestCentroidAndSseInvariant) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> pts(40 + rng.below(40), std::vector<double>(5));
    for (auto& p : pts)
      for (auto& v : p) v = rng.uniform();
    const std::size_t k = 2 + rng.below(5);
    const auto m = kmeans(pts, k, trial);
    double sse = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double own = sq_dist(pts[i], m.centroids[m.assignments[i]]);
      for (const auto& c : m.centroids) ASSERT_LE(own, sq_dist(pts[i], c) + 1e-12);
      sse += own;
    }
    EXPECT_NEAR(m.sse, sse, 1e-9);
    for (std::size_t i = 1; i < m.sse_trace.size(); ++i) ASSERT_LE(m.sse_trace[i], m.sse_trace[i - 1]);
    EXPECT_EQ(m, kmeans(pts, k, trial));
  }
}

TEST(Elbow, ThreeBlobsChooseThree) {
  const auto pts = fixtures::three_blobs(20, 24, 31);
  const auto e = elbow(pts, 10, 5);
  ASSERT_EQ(e.sse_curve.size(), 10u);
  EXPECT_EQ(e.chosen_k, 3u);
  EXPECT_GT(e.sse_curve[1] - e.sse_curve[2], 10 * (e.sse_curve[2] - e.sse_curve[3]));
}

TEST(Elbow, TwoPointCurve) {
  const auto pts = fixtures::three_blobs(10, 3, 4);
  const std::vector<std::vector<double>> one_blob(pts.begin(), pts.begin() + 10);
  const auto e = elbow(one_blob, 2, 1);
  EXPECT_EQ(e.sse_curve.size(), 2u);
  EXPECT_TRUE(e.chosen_k == 1 || e.chosen_k == 2);
  EXPECT_THROW(elbow(one_blob, 1, 1), BadRange);
}

TEST(ClusterSeeds, ThreeKindsOfNetworks) {
  const auto seeds = fixtures::three_kind_groups(6, 40, 3);
  ClusteringOptions opts;
  opts.rng_seed = 99;
  const auto aut = cluster_seeds(seeds, opts);
  EXPECT_EQ(aut.fingerprints.size(), 18u);
  ASSERT_EQ(aut.sse_curve.size(), 18u);  // k_max capped at the group count
  // the chosen k is the knee of the reported curve
  std::size_t knee = 2;
  for (std::size_t k = 2; k + 1 <= aut.sse_curve.size(); ++k) {
    const auto d2 = [&](std::size_t j) { return aut.sse_curve[j - 2] - 2 * aut.sse_curve[j - 1] + aut.sse_curve[j]; };
    if (d2(k) > d2(knee)) knee = k;
  }
  EXPECT_EQ(aut.model.k, knee);

  // EUI-64 and privacy fingerprints lie close together, so the knee need not
  // sit at 3; with k given, the three kinds separate cleanly
  opts.k = 3;
  const auto c = cluster_seeds(seeds, opts);
  ASSERT_EQ(c.clusters.size(), 3u);
  // groups built the same way share a cluster
  for (std::size_t kind = 0; kind < 3; ++kind)
    for (std::size_t g = 1; g < 6; ++g) EXPECT_EQ(c.model.assignments[kind * 6 + g], c.model.assignments[kind * 6]);
  std::size_t total = c.unclassified.size();
  for (const auto& cl : c.clusters) total += cl.size();
  EXPECT_EQ(total, seeds.size());
}

TEST(ClusterSeeds, SmallGroupsGoToUnclassified) {
  auto seeds = fixtures::three_kind_groups(2, 20, 5);
  seeds.insert(NybbleSeq::from_hex("3fff0000000000000000000000000001"));
  ClusteringOptions opts;
  opts.k = 2;
  const auto c = cluster_seeds(seeds, opts);
  EXPECT_EQ(c.unclassified.size(), 1u);
  EXPECT_TRUE(c.sse_curve.empty());
  opts.k = 7;
  EXPECT_THROW(cluster_seeds(seeds, opts), TooFewGroups);
}

TEST(ClusterSeeds, KEqualsOneKeepsEveryGroupedSeed) {
  const auto seeds = fixtures::three_kind_groups(2, 15, 8);
  ClusteringOptions opts;
  opts.k = 1;
  const auto c = cluster_seeds(seeds, opts);
  ASSERT_EQ(c.clusters.size(), 1u);
  EXPECT_EQ(c.clusters[0].size(), seeds.size());
}
