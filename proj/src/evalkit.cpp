#include "v6forge/evalkit.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>

#include <boost/multiprecision/cpp_int.hpp>

#include "v6forge/errors.hpp"
#include "v6forge/random.hpp"
#include "v6forge/seedclass.hpp"

namespace v6forge::evalkit {
namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

// Writes `value` into nybbles [first, first + count) of `seq`.
void put_field(NybbleSeq::storage_type& seq, std::size_t first, std::size_t count, std::uint64_t value) {
  for (std::size_t i = 0; i < count; ++i)
    seq[first + count - 1 - i] = static_cast<std::uint8_t>((value >> (4 * i)) & 0xf);
}

void require_positive(std::size_t v, const char* name) {
  if (v == 0) throw InvalidArgument(std::string(name) + " must be positive");
}

void require_byte_range(std::size_t v, const char* name) {
  require_positive(v, name);
  if (v > 255) throw InvalidArgument(std::string(name) + " must be at most 255");
}

}  // namespace

SetOracle oracle_from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open oracle file " + path.string());
  auto loaded = addr6::load_seed_set(in, addr6::LoadMode::Lenient, path.string());
  if (in.bad()) throw IoError("read error on " + path.string());
  return oracle_from_seeds(loaded.seeds, "result file " + path.string());
}

SetOracle oracle_from_seeds(const SeedSet& set, std::string provenance) {
  std::unordered_set<Ipv6Address, addr6::Ipv6AddressHash> members;
  members.reserve(set.size());
  for (const auto& s : set) members.insert(addr6::from_nybbles(s));
  return SetOracle(std::move(members), std::move(provenance));
}

std::string Ratio::percent(int decimals) const {
  if (den == 0) return "nan";
  unsigned __int128 scale = 100;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  const unsigned __int128 scaled = static_cast<unsigned __int128>(num) * scale;
  const unsigned __int128 q = (2 * scaled + den) / (2 * static_cast<unsigned __int128>(den));
  std::string digits;
  unsigned __int128 t = q;
  do {
    digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(t % 10)));
    t /= 10;
  } while (t > 0);
  if (decimals <= 0) return digits;
  const auto d = static_cast<std::size_t>(decimals);
  if (digits.size() <= d) digits.insert(digits.begin(), d + 1 - digits.size(), '0');
  digits.insert(digits.end() - static_cast<std::ptrdiff_t>(d), '.');
  return digits;
}

GenerationReport evaluate(const std::vector<NybbleSeq>& candidates, const SeedSet& seeds,
                          const ActivityOracle& oracle, std::size_t n_sampled, const EvaluateOptions& options) {
  std::unordered_set<NybbleSeq, addr6::NybbleSeqHash> seen;
  seen.reserve(candidates.size());
  GenerationReport r;
  r.n_sampled = n_sampled;
  for (const auto& c : candidates) {
    if (!seen.insert(c).second) throw InvalidArgument("candidate list contains duplicates: " + c.to_string());
    const bool is_seed = seeds.contains(c);
    if (options.exclude_seeds && is_seed) continue;
    ++r.n_candidate;
    if (!oracle.active(c)) continue;
    ++r.n_hit;
    if (!is_seed) ++r.n_new;
  }
  if (r.n_candidate == 0) throw EmptyCandidates("no candidates to evaluate");
  if (n_sampled < candidates.size())
    throw InvalidArgument("n_sampled (" + std::to_string(n_sampled) + ") is below the candidate count (" +
                          std::to_string(candidates.size()) + ")");
  return r;
}

std::string format_key_values(const GenerationReport& r, const std::string& prefix) {
  std::string out;
  auto kv = [&](const char* k, const std::string& v) { out += prefix + k + "=" + v + "\n"; };
  kv("n_sampled", std::to_string(r.n_sampled));
  kv("n_candidate", std::to_string(r.n_candidate));
  kv("n_hit", std::to_string(r.n_hit));
  kv("n_new", std::to_string(r.n_new));
  kv("r_hit", r.r_hit().percent(2));
  kv("r_gen", r.r_gen().percent(2));
  return out;
}

std::vector<CategoryDraws> allocate_budget(const std::vector<CategoryRate>& rates, std::size_t n_total) {
  cpp_rational total = 0;
  std::vector<cpp_rational> weights;
  for (const auto& r : rates) {
    if (r.r_gen.den == 0) throw InvalidArgument("rate for '" + r.category + "' has a zero denominator");
    weights.emplace_back(cpp_int(r.r_gen.num), cpp_int(r.r_gen.den));
    total += weights.back();
  }
  if (total == 0) throw AllRatesZero("every category has r_gen = 0");

  std::vector<CategoryDraws> out;
  std::vector<cpp_rational> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const cpp_rational quota = weights[i] * n_total / total;
    const cpp_int whole = numerator(quota) / denominator(quota);
    out.push_back({rates[i].category, whole.convert_to<std::size_t>()});
    remainders.push_back(quota - cpp_rational(whole));
    assigned += out.back().draws;
  }
  std::vector<std::size_t> order(rates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t i = 0; assigned < n_total; ++i, ++assigned) ++out[order[i]].draws;
  return out;
}

std::size_t UniverseConfig::universe_size() const noexcept {
  return prefixes_per_scheme * (fixed_subnets * fixed_hosts + low64_subnets * low64_inner * low64_hosts +
                                eui_subnets * eui_macs + privacy_subnets * privacy_hosts);
}

SyntheticUniverse synth_universe(const UniverseConfig& cfg) {
  require_positive(cfg.prefixes_per_scheme, "prefixes_per_scheme");
  require_positive(cfg.fixed_subnets, "fixed_subnets");
  require_positive(cfg.fixed_hosts, "fixed_hosts");
  if (cfg.fixed_hosts > 256) throw InvalidArgument("fixed_hosts must be at most 256");
  require_positive(cfg.low64_subnets, "low64_subnets");
  require_byte_range(cfg.low64_inner, "low64_inner");
  require_byte_range(cfg.low64_hosts, "low64_hosts");
  require_positive(cfg.eui_subnets, "eui_subnets");
  require_positive(cfg.eui_macs, "eui_macs");
  require_positive(cfg.privacy_subnets, "privacy_subnets");
  require_positive(cfg.privacy_hosts, "privacy_hosts");
  require_positive(cfg.seed_sample, "seed_sample");
  if (cfg.seed_sample > cfg.universe_size())
    throw SampleExceedsUniverse("sample of " + std::to_string(cfg.seed_sample) + " from a universe of " +
                                std::to_string(cfg.universe_size()));

  Rng rng(derive_seed(cfg.rng_seed, "universe"));
  SyntheticUniverse out;
  out.universe.set_source_label("synthetic universe");

  // distinct /32 prefixes under 2000::/4
  std::vector<std::uint32_t> prefixes;
  while (prefixes.size() < 4 * cfg.prefixes_per_scheme) {
    const auto p = static_cast<std::uint32_t>(0x20000000u | rng.below(1u << 28));
    if (std::find(prefixes.begin(), prefixes.end(), p) == prefixes.end()) prefixes.push_back(p);
  }
  auto base = [&](std::size_t scheme, std::size_t k, std::uint64_t subnet) {
    NybbleSeq::storage_type s{};
    put_field(s, 0, 8, prefixes[scheme * cfg.prefixes_per_scheme + k]);
    put_field(s, 8, 8, subnet);
    return s;
  };
  auto add = [&](const NybbleSeq::storage_type& s) { return out.universe.insert(NybbleSeq(s)); };

  for (std::size_t k = 0; k < cfg.prefixes_per_scheme; ++k) {
    // fixed IID: ::hh
    for (std::size_t sn = 0; sn < cfg.fixed_subnets; ++sn)
      for (std::size_t h = 0; h < cfg.fixed_hosts; ++h) {
        auto s = base(0, k, sn);
        put_field(s, 30, 2, h);
        add(s);
      }
    // low 64-bit subnet: ::ii:0:hh
    for (std::size_t sn = 0; sn < cfg.low64_subnets; ++sn)
      for (std::size_t i = 1; i <= cfg.low64_inner; ++i)
        for (std::size_t h = 1; h <= cfg.low64_hosts; ++h) {
          auto s = base(1, k, sn);
          put_field(s, 22, 2, i);
          put_field(s, 30, 2, h);
          add(s);
        }
  }

  // EUI-64 from a few vendor OUIs with sequential NIC numbers
  std::array<std::uint32_t, 4> ouis{};
  std::array<std::uint32_t, 4> nic_base{};
  for (std::size_t v = 0; v < ouis.size(); ++v) {
    ouis[v] = static_cast<std::uint32_t>(rng.below(1u << 24)) & 0xfcffffu;  // universal, unicast
    nic_base[v] = static_cast<std::uint32_t>(rng.below(1u << 23));
  }
  std::size_t mac_serial = 0;
  for (std::size_t k = 0; k < cfg.prefixes_per_scheme; ++k)
    for (std::size_t sn = 0; sn < cfg.eui_subnets; ++sn)
      for (std::size_t m = 0; m < cfg.eui_macs; ++m, ++mac_serial) {
        const std::size_t v = mac_serial % ouis.size();
        const std::uint32_t nic = (nic_base[v] + static_cast<std::uint32_t>(mac_serial / ouis.size())) & 0xffffffu;
        auto s = base(2, k, sn);
        put_field(s, 16, 6, ouis[v] ^ 0x020000u);
        put_field(s, 22, 4, 0xfffe);
        put_field(s, 26, 6, nic);
        add(s);
      }

  // privacy: pseudorandom IIDs that classify as such
  for (std::size_t k = 0; k < cfg.prefixes_per_scheme; ++k)
    for (std::size_t sn = 0; sn < cfg.privacy_subnets; ++sn)
      for (std::size_t h = 0; h < cfg.privacy_hosts;) {
        auto s = base(3, k, sn);
        put_field(s, 16, 16, rng.next_u64());
        const NybbleSeq seq(s);
        if (seedclass::classify_manual(seq) != seedclass::SchemeLabel::SlaacPrivacy) continue;
        if (add(s)) ++h;
      }

  // partial Fisher-Yates for the seed sample
  std::vector<std::size_t> idx(out.universe.size());
  std::iota(idx.begin(), idx.end(), 0);
  out.seeds.set_source_label("synthetic seeds");
  for (std::size_t i = 0; i < cfg.seed_sample; ++i) {
    std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    out.seeds.insert(out.universe.members()[idx[i]]);
  }
  out.oracle = oracle_from_seeds(out.universe, "synthetic universe seed=" + std::to_string(cfg.rng_seed));
  return out;
}

std::vector<NybbleSeq> random_baseline(std::size_t n, const std::vector<std::string>& prefix_pool,
                                       std::uint64_t rng_seed) {
  if (n == 0) throw InvalidArgument("n must be at least 1");
  if (prefix_pool.empty()) throw InvalidArgument("prefix pool is empty");
  std::vector<NybbleSeq::storage_type> pool;
  std::vector<std::size_t> lengths;
  for (const auto& p : prefix_pool) {
    if (p.empty() || p.size() >= addr6::kNybbles) throw InvalidArgument("prefix must have 1 to 31 nybbles: " + p);
    auto padded = p + std::string(addr6::kNybbles - p.size(), '0');
    pool.push_back(NybbleSeq::from_hex(padded).values());
    lengths.push_back(p.size());
  }
  Rng rng(rng_seed);
  SeedSet out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto pick = static_cast<std::size_t>(rng.below(pool.size()));
    auto s = pool[pick];
    for (std::size_t j = lengths[pick]; j < addr6::kNybbles; ++j) s[j] = static_cast<std::uint8_t>(rng.below(16));
    out.insert(NybbleSeq(s));
  }
  return out.members();
}

std::vector<std::string> prefixes_of(const SeedSet& seeds, std::size_t nybbles) {
  if (nybbles < 1 || nybbles >= addr6::kNybbles) throw InvalidArgument("prefix length must be 1..31 nybbles");
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& s : seeds) {
    auto p = s.to_string().substr(0, nybbles);
    if (seen.insert(p).second) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace v6forge::evalkit
