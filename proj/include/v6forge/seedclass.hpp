#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "v6forge/addr6.hpp"

namespace v6forge::seedclass {

using addr6::NybbleSeq;
using addr6::SeedSet;

enum class SchemeLabel { FixedIID, Low64Subnet, SlaacEui64, SlaacPrivacy, Other };

inline constexpr std::array<SchemeLabel, 5> kAllLabels = {
    SchemeLabel::FixedIID, SchemeLabel::Low64Subnet, SchemeLabel::SlaacEui64,
    SchemeLabel::SlaacPrivacy, SchemeLabel::Other};

/// Display name, e.g. "Fixed IID".
std::string_view label_name(SchemeLabel label) noexcept;
/// File-friendly name, e.g. "fixed_iid".
std::string_view label_slug(SchemeLabel label) noexcept;

/// Per-address entropy above which an IID is treated as pseudorandom.
inline constexpr double kPrivacyEntropyThreshold = 0.8;

/// Normalized entropy of nybble `index` (1-based) over the set, in [0, 1].
/// Throws EmptySet, BadRange.
double column_entropy(const SeedSet& set, std::size_t index);

struct EntropyFingerprint {
  std::string prefix;  // shared leading nybbles of the group
  std::size_t a = 9;
  std::size_t b = 32;
  std::vector<double> values;
  std::size_t support = 0;
};

/// Entropies of nybbles a..b (1-based, inclusive). Throws EmptySet, BadRange.
EntropyFingerprint fingerprint(const SeedSet& set, std::size_t a = 9, std::size_t b = 32);

/// Partitions the set by the first `prefix_nybbles` nybbles. The map key is
/// the prefix in hex. Throws BadRange outside [1, 31].
std::map<std::string, SeedSet> group_by_prefix(const SeedSet& set, std::size_t prefix_nybbles = 8);

/// Character entropy of a 16-nybble interface identifier, normalized to [0, 1].
double address_char_entropy(std::span<const std::uint8_t, 16> iid) noexcept;

/// Number of maximal zero runs of length >= 2 in the interface identifier.
std::size_t zero_run_count(std::span<const std::uint8_t, 16> iid) noexcept;

/// Rule precedence: EUI-64 marker, privacy entropy, two or more zero runs,
/// exactly one zero run, otherwise Other.
SchemeLabel classify_manual(const NybbleSeq& seq) noexcept;

struct ClusterModel {
  std::size_t k = 0;
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> assignments;
  double sse = 0.0;
  std::uint64_t rng_seed = 0;
  std::size_t iterations = 0;
  /// SSE after each Lloyd iteration; non-increasing.
  std::vector<double> sse_trace;

  friend bool operator==(const ClusterModel&, const ClusterModel&) = default;
};

struct KMeansOptions {
  std::size_t max_iterations = 300;
};

/// Lloyd's algorithm with distance-weighted (k-means++) seeding.
/// Throws TooFewGroups when fewer than k points, BadRange when k == 0.
ClusterModel kmeans(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t rng_seed,
                    const KMeansOptions& options = {});
ClusterModel kmeans(std::span<const EntropyFingerprint> fingerprints, std::size_t k, std::uint64_t rng_seed,
                    const KMeansOptions& options = {});

struct ElbowResult {
  std::vector<double> sse_curve;  // index 0 holds k = 1
  std::size_t chosen_k = 1;
};

/// Best-of-`restarts` SSE for k = 1..k_max; the knee is the k with the
/// largest second difference of the curve. Curves with fewer than three
/// points choose k = 1.
ElbowResult elbow(std::span<const std::vector<double>> points, std::size_t k_max, std::uint64_t rng_seed,
                  std::size_t restarts = 5);
ElbowResult elbow(std::span<const EntropyFingerprint> fingerprints, std::size_t k_max, std::uint64_t rng_seed,
                  std::size_t restarts = 5);

/// Best of `restarts` seeded k-means runs (lowest SSE, earliest on ties).
ClusterModel kmeans_best_of(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t rng_seed,
                            std::size_t restarts);

struct ClusteringOptions {
  std::size_t prefix_nybbles = 8;
  std::size_t a = 9;
  std::size_t b = 32;
  std::size_t min_group_size = 10;
  /// 0 selects k automatically by the elbow rule.
  std::size_t k = 0;
  std::size_t k_max = 20;
  std::size_t restarts = 5;
  std::uint64_t rng_seed = 0;
};

struct SeedClustering {
  std::vector<EntropyFingerprint> fingerprints;  // one per retained group, prefix order
  ClusterModel model;
  std::vector<double> sse_curve;  // empty when k was given
  std::vector<SeedSet> clusters;  // members of each cluster
  SeedSet unclassified;           // members of groups below min_group_size
};

/// Groups by prefix, fingerprints every sufficiently large group and
/// clusters the fingerprints. Throws TooFewGroups.
SeedClustering cluster_seeds(const SeedSet& seeds, const ClusteringOptions& options);

}  // namespace v6forge::seedclass
