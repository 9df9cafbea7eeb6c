#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "support/fixtures.hpp"
#include "v6forge/errors.hpp"
#include "v6forge/evalkit.hpp"
#include "v6forge/seedclass.hpp"

using namespace v6forge;
using namespace v6forge::evalkit;
using addr6::NybbleSeq;

namespace fs = std::filesystem;

namespace {

NybbleSeq addr(const char* text) { return addr6::to_nybbles(addr6::parse_text(text)); }

std::vector<std::size_t> draws(const std::vector<CategoryDraws>& d) {
  std::vector<std::size_t> out;
  for (const auto& x : d) out.push_back(x.draws);
  return out;
}

// Largest remainder by hand in basis points for rates given in hundredths of
// a percent, used to cross-check allocate_budget with integers only.
std::vector<std::size_t> largest_remainder(const std::vector<std::uint64_t>& w, std::size_t n) {
  const std::uint64_t total = std::accumulate(w.begin(), w.end(), std::uint64_t{0});
  std::vector<std::size_t> out(w.size());
  std::vector<std::uint64_t> rem(w.size());
  std::size_t given = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    out[i] = static_cast<std::size_t>(w[i] * n / total);
    rem[i] = w[i] * n % total;
    given += out[i];
  }
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t i = 0; given < n; ++i, ++given) ++out[order[i]];
  return out;
}

fs::path temp_file(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("v6forge_eval_" + name);
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Oracle, FromFile) {
  const auto p = temp_file("three.txt", "2001:db8::1\n2001:db8::2\n# note\n2001:db8::3\n2001:db8:0::1\n");
  const auto o = oracle_from_file(p);
  EXPECT_EQ(o.size(), 3u);
  EXPECT_TRUE(o.active(addr("2001:db8::2")));
  EXPECT_FALSE(o.active(addr("2001:db8::4")));
  EXPECT_EQ(o.active(addr("2001:db8::2")), o.active(addr("2001:db8::2")));
  EXPECT_NE(o.provenance().find("three.txt"), std::string::npos);

  const auto empty = oracle_from_file(temp_file("empty.txt", ""));
  EXPECT_FALSE(empty.active(addr("::")));
  EXPECT_THROW(oracle_from_file("/nonexistent/v6forge/oracle.txt"), IoError);
}

TEST(Ratio, ExactPercent) {
  EXPECT_EQ((Ratio{14894, 756658}.percent(2)), "1.97");
  EXPECT_EQ((Ratio{9685, 756658}.percent(2)), "1.28");
  EXPECT_EQ((Ratio{1, 8}.percent(1)), "12.5");
  EXPECT_EQ((Ratio{1, 8}.percent(0)), "13");
  EXPECT_EQ((Ratio{0, 5}.percent(3)), "0.000");
  EXPECT_EQ((Ratio{5, 5}.percent(2)), "100.00");
  EXPECT_EQ((Ratio{1, 400}.percent(2)), "0.25");
  EXPECT_EQ((Ratio{1, 1600}.percent(2)), "0.06");  // 0.0625 rounds half up
}

TEST(Evaluate, HandCountedFixture) {
  std::vector<NybbleSeq> cands;
  for (int i = 1; i <= 10; ++i) cands.push_back(addr(("2001:db8::" + std::to_string(i)).c_str()));
  addr6::SeedSet seeds;
  seeds.insert(cands[0]);
  seeds.insert(addr("2001:db8::ff"));
  addr6::SeedSet active;
  for (int i : {0, 2, 4, 6}) active.insert(cands[i]);
  const auto r = evaluate(cands, seeds, oracle_from_seeds(active, "fixture"), 10);
  EXPECT_EQ(r.n_hit, 4u);
  EXPECT_EQ(r.n_new, 3u);
  EXPECT_EQ(r.r_hit().percent(0), "40");
  EXPECT_EQ(r.r_gen().percent(0), "30");

  const auto ex = evaluate(cands, seeds, oracle_from_seeds(active, "fixture"), 10, {true});
  EXPECT_EQ(ex.n_candidate, 9u);
  EXPECT_EQ(ex.n_hit, 3u);
  EXPECT_EQ(ex.n_new, 3u);
}

TEST(Evaluate, AllSeedsActive) {
  addr6::SeedSet seeds;
  for (int i = 1; i <= 5; ++i) seeds.insert(addr(("::" + std::to_string(i)).c_str()));
  const auto r = evaluate(seeds.members(), seeds, oracle_from_seeds(seeds, "s"), 5);
  EXPECT_EQ(r.r_hit().percent(2), "100.00");
  EXPECT_EQ(r.r_gen().percent(2), "0.00");
}

TEST(Evaluate, PublishedRowCounts) {
  const auto f = fixtures::table_row_fixture();
  const auto r = evaluate(f.candidates, f.seeds, oracle_from_seeds(f.active, "fixture"), f.n_sampled);
  EXPECT_EQ(r.n_candidate, 756658u);
  EXPECT_EQ(r.n_hit, 14894u);
  EXPECT_EQ(r.n_new, 9685u);
  EXPECT_EQ(r.r_hit().percent(2), "1.97");
  EXPECT_EQ(r.r_gen().percent(2), "1.28");
}

TEST(Evaluate, Errors) {
  const addr6::SeedSet none;
  const auto oracle = oracle_from_seeds(none, "none");
  EXPECT_THROW(evaluate({}, none, oracle, 10), EmptyCandidates);
  const std::vector<NybbleSeq> dup = {addr("::1"), addr("::1")};
  EXPECT_THROW(evaluate(dup, none, oracle, 10), InvalidArgument);
  EXPECT_THROW(evaluate({addr("::1"), addr("::2")}, none, oracle, 1), InvalidArgument);
  addr6::SeedSet s;
  s.insert(addr("::1"));
  EXPECT_THROW(evaluate({addr("::1")}, s, oracle, 1, {true}), EmptyCandidates);
}

TEST(Evaluate, OrderingInvariantAndPurity) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    addr6::SeedSet cands, seeds, active;
    while (cands.size() < 200) cands.insert(fixtures::indexed_address(1, rng.below(400)));
    for (int i = 0; i < 150; ++i) {
      const auto a = fixtures::indexed_address(1, rng.below(400));
      active.insert(a);
      if (rng.below(2)) seeds.insert(a);
    }
    const auto oracle = oracle_from_seeds(active, "random");
    const auto r = evaluate(cands.members(), seeds, oracle, 300);
    ASSERT_LE(r.n_new, r.n_hit);
    ASSERT_LE(r.n_hit, r.n_candidate);
    ASSERT_LE(r.n_candidate, r.n_sampled);
    ASSERT_EQ(r, evaluate(cands.members(), seeds, oracle, 300));
  }
}

TEST(Evaluate, KeyValueOutput) {
  GenerationReport r{1000, 800, 40, 30};
  EXPECT_EQ(format_key_values(r, "x."),
            "x.n_sampled=1000\nx.n_candidate=800\nx.n_hit=40\nx.n_new=30\nx.r_hit=5.00\nx.r_gen=3.75\n");
}

TEST(Budget, Examples) {
  EXPECT_EQ(draws(allocate_budget({{"a", {1, 100}}, {"b", {1, 100}}}, 100)), (std::vector<std::size_t>{50, 50}));
  EXPECT_EQ(draws(allocate_budget({{"a", {0, 1}}, {"b", {3, 7}}, {"c", {0, 9}}}, 1234)),
            (std::vector<std::size_t>{0, 1234, 0}));
  EXPECT_THROW(allocate_budget({{"a", {0, 1}}, {"b", {0, 3}}}, 10), AllRatesZero);
}

TEST(Budget, PublishedManualRates) {
  // 4.35%, 0.61%, 0.13%, 1.34% over 1000 draws
  const std::vector<CategoryRate> rates = {
      {"fixed", {435, 10000}}, {"low64", {61, 10000}}, {"eui64", {13, 10000}}, {"privacy", {134, 10000}}};
  const auto d = draws(allocate_budget(rates, 1000));
  EXPECT_EQ(d, largest_remainder({435, 61, 13, 134}, 1000));
  EXPECT_EQ(d, (std::vector<std::size_t>{677, 95, 20, 208}));
}

TEST(Budget, SumScaleInvarianceAndTies) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CategoryRate> rates, scaled;
    std::vector<std::uint64_t> w;
    const std::size_t k = 1 + rng.below(8);
    for (std::size_t i = 0; i < k; ++i) {
      const std::uint64_t num = rng.below(1000);
      w.push_back(num);
      rates.push_back({std::to_string(i), {num, 1000}});
      scaled.push_back({std::to_string(i), {num * 7, 3000}});
    }
    if (std::accumulate(w.begin(), w.end(), std::uint64_t{0}) == 0) continue;
    const std::size_t n = rng.below(100000);
    const auto d = draws(allocate_budget(rates, n));
    ASSERT_EQ(std::accumulate(d.begin(), d.end(), std::size_t{0}), n);
    ASSERT_EQ(d, draws(allocate_budget(scaled, n)));
    ASSERT_EQ(d, largest_remainder(w, n));
  }
  // three equal remainders, one spare draw: the earliest category gets it
  EXPECT_EQ(draws(allocate_budget({{"a", {1, 3}}, {"b", {1, 3}}, {"c", {1, 3}}}, 4)),
            (std::vector<std::size_t>{2, 1, 1}));
}

TEST(Universe, DefaultIsTwoToTheSixteen) {
  const UniverseConfig cfg;
  EXPECT_EQ(cfg.universe_size(), 65536u);
  const auto u = synth_universe(cfg);
  EXPECT_EQ(u.universe.size(), 65536u);
  EXPECT_EQ(u.oracle.size(), 65536u);
  ASSERT_EQ(u.seeds.size(), 5000u);
  for (const auto& s : u.seeds) ASSERT_TRUE(u.oracle.active(s));

  std::set<seedclass::SchemeLabel> labels;
  std::array<std::size_t, 5> universe_labels{};
  for (const auto& s : u.seeds) labels.insert(seedclass::classify_manual(s));
  for (const auto& s : u.universe) ++universe_labels[static_cast<std::size_t>(seedclass::classify_manual(s))];
  EXPECT_GE(labels.size(), 3u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(universe_labels[i], 16384u) << i;
  EXPECT_EQ(seedclass::group_by_prefix(u.universe).size(), 8u);
}

TEST(Universe, DeterministicAndSeedDependent) {
  UniverseConfig cfg;
  cfg.seed_sample = 300;
  const auto a = synth_universe(cfg);
  const auto b = synth_universe(cfg);
  EXPECT_EQ(a.seeds.members(), b.seeds.members());
  EXPECT_EQ(a.universe.members(), b.universe.members());
  cfg.rng_seed = 2;
  EXPECT_NE(synth_universe(cfg).seeds.members(), a.seeds.members());
}

TEST(Universe, SmallConfigsKeepSchemeDiversity) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    UniverseConfig cfg;
    cfg.rng_seed = seed;
    cfg.fixed_subnets = 2;
    cfg.fixed_hosts = 10;
    cfg.low64_subnets = 1;
    cfg.low64_inner = 3;
    cfg.low64_hosts = 4;
    cfg.eui_subnets = 1;
    cfg.eui_macs = 12;
    cfg.privacy_subnets = 1;
    cfg.privacy_hosts = 12;
    cfg.prefixes_per_scheme = 1;
    cfg.seed_sample = 40;
    const auto u = synth_universe(cfg);
    EXPECT_EQ(u.universe.size(), cfg.universe_size());
    std::set<seedclass::SchemeLabel> labels;
    for (const auto& s : u.seeds) labels.insert(seedclass::classify_manual(s));
    EXPECT_GE(labels.size(), 3u);
  }
}

TEST(Universe, Errors) {
  UniverseConfig cfg;
  cfg.seed_sample = cfg.universe_size() + 1;
  EXPECT_THROW(synth_universe(cfg), SampleExceedsUniverse);
  cfg = {};
  cfg.eui_macs = 0;
  EXPECT_THROW(synth_universe(cfg), InvalidArgument);
  cfg = {};
  cfg.low64_hosts = 300;
  EXPECT_THROW(synth_universe(cfg), InvalidArgument);
}

TEST(RandomBaseline, ContractAndReproducibility) {
  const auto one = random_baseline(1, {"20010db800000000"}, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].to_string().substr(0, 16), "20010db800000000");

  const auto u = synth_universe({});
  const auto pool = prefixes_of(u.seeds);
  const auto a = random_baseline(20000, pool, 9);
  EXPECT_EQ(a, random_baseline(20000, pool, 9));
  EXPECT_EQ(std::set<NybbleSeq>(a.begin(), a.end()).size(), a.size());
  const auto r = evaluate(a, u.seeds, u.oracle, 20000);
  EXPECT_EQ(r.n_hit, 0u);
  EXPECT_THROW(random_baseline(0, pool, 1), InvalidArgument);
  EXPECT_THROW(random_baseline(5, {}, 1), InvalidArgument);
}

TEST(Prefixes, DistinctFirstSeen) {
  addr6::SeedSet s;
  s.insert(addr("2001:db8:1:2::1"));
  s.insert(addr("2001:db8:1:3::1"));
  s.insert(addr("2001:db8:1:2::9"));
  EXPECT_EQ(prefixes_of(s), (std::vector<std::string>{"20010db800010002", "20010db800010003"}));
  EXPECT_EQ(prefixes_of(s, 8), (std::vector<std::string>{"20010db8"}));
  EXPECT_THROW(prefixes_of(s, 32), InvalidArgument);
}
