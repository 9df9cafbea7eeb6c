#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "v6forge/addr6.hpp"

namespace v6forge::evalkit {

using addr6::Ipv6Address;
using addr6::NybbleSeq;
using addr6::SeedSet;

/// Membership predicate standing in for a scanner's active/inactive verdict.
class ActivityOracle {
 public:
  virtual ~ActivityOracle() = default;
  [[nodiscard]] virtual bool active(const Ipv6Address& addr) const = 0;
  [[nodiscard]] virtual std::string provenance() const = 0;

  [[nodiscard]] bool active(const NybbleSeq& seq) const { return active(addr6::from_nybbles(seq)); }
};

/// Oracle over an explicit address set.
class SetOracle final : public ActivityOracle {
 public:
  SetOracle() = default;
  SetOracle(std::unordered_set<Ipv6Address, addr6::Ipv6AddressHash> members, std::string provenance)
      : members_(std::move(members)), provenance_(std::move(provenance)) {}

  [[nodiscard]] bool active(const Ipv6Address& addr) const override { return members_.contains(addr); }
  using ActivityOracle::active;
  [[nodiscard]] std::string provenance() const override { return provenance_; }
  [[nodiscard]] std::size_t size() const noexcept { return members_.size(); }

 private:
  std::unordered_set<Ipv6Address, addr6::Ipv6AddressHash> members_;
  std::string provenance_;
};

/// Loads a newline-delimited active-address file. Throws IoError.
SetOracle oracle_from_file(const std::filesystem::path& path);
SetOracle oracle_from_seeds(const SeedSet& set, std::string provenance);

/// Exact non-negative ratio num/den.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  [[nodiscard]] double value() const noexcept { return den == 0 ? 0.0 : static_cast<double>(num) / den; }
  /// Percentage rounded half-up to `decimals` places, computed exactly.
  [[nodiscard]] std::string percent(int decimals = 2) const;
};

struct GenerationReport {
  std::size_t n_sampled = 0;
  std::size_t n_candidate = 0;
  std::size_t n_hit = 0;
  std::size_t n_new = 0;

  [[nodiscard]] Ratio r_hit() const noexcept { return {n_hit, n_candidate}; }
  [[nodiscard]] Ratio r_gen() const noexcept { return {n_new, n_candidate}; }

  friend bool operator==(const GenerationReport&, const GenerationReport&) = default;
};

struct EvaluateOptions {
  /// Drop seed members from the candidates before counting.
  bool exclude_seeds = false;
};

/// Counts hits and new hits. Throws EmptyCandidates, InvalidArgument (for
/// duplicate candidates or n_sampled below the candidate count).
GenerationReport evaluate(const std::vector<NybbleSeq>& candidates, const SeedSet& seeds,
                          const ActivityOracle& oracle, std::size_t n_sampled, const EvaluateOptions& options = {});

/// key=value lines: n_sampled, n_candidate, n_hit, n_new, r_hit, r_gen.
std::string format_key_values(const GenerationReport& r, const std::string& prefix = {});

struct CategoryRate {
  std::string category;
  Ratio r_gen;
};

struct CategoryDraws {
  std::string category;
  std::size_t draws = 0;

  friend bool operator==(const CategoryDraws&, const CategoryDraws&) = default;
};

/// Splits n_total proportionally to the rates with largest-remainder
/// rounding; ties go to the earlier category. Throws AllRatesZero.
std::vector<CategoryDraws> allocate_budget(const std::vector<CategoryRate>& rates, std::size_t n_total);

struct UniverseConfig {
  std::uint64_t rng_seed = 1;
  // fixed IID: prefixes x subnets x host values
  std::size_t fixed_subnets = 32;
  std::size_t fixed_hosts = 256;
  // low 64-bit subnet: prefixes x subnets x inner subnet ids x host values
  std::size_t low64_subnets = 8;
  std::size_t low64_inner = 32;
  std::size_t low64_hosts = 32;
  // SLAAC EUI-64: prefixes x subnets x MACs per subnet
  std::size_t eui_subnets = 16;
  std::size_t eui_macs = 512;
  // SLAAC privacy: prefixes x subnets x random IIDs per subnet
  std::size_t privacy_subnets = 16;
  std::size_t privacy_hosts = 512;
  std::size_t prefixes_per_scheme = 2;
  std::size_t seed_sample = 5000;

  [[nodiscard]] std::size_t universe_size() const noexcept;
};

struct SyntheticUniverse {
  SetOracle oracle;
  SeedSet universe;  // every active address, construction order
  SeedSet seeds;     // sample without replacement
};

/// Deterministic structured active population over synthetic /32 prefixes,
/// one block of prefixes per addressing scheme. Throws
/// SampleExceedsUniverse, InvalidArgument.
SyntheticUniverse synth_universe(const UniverseConfig& cfg);

/// n uniformly random 64-bit IIDs under prefixes drawn from the pool
/// (each pool entry is a 16-nybble /64 or shorter hex prefix, right-padded
/// with random nybbles), deduplicated.
std::vector<NybbleSeq> random_baseline(std::size_t n, const std::vector<std::string>& prefix_pool,
                                       std::uint64_t rng_seed);

/// Distinct /64 prefixes (16 hex nybbles) of a seed set, first-seen order.
std::vector<std::string> prefixes_of(const SeedSet& seeds, std::size_t nybbles = 16);

}  // namespace v6forge::evalkit
