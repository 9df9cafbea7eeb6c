#include "v6forge/seedclass.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "v6forge/errors.hpp"
#include "v6forge/random.hpp"

namespace v6forge::seedclass {
namespace {

// -(1/4) * sum p log2 p over a 16-bin histogram of `total` observations.
double normalized_entropy(const std::array<std::size_t, 16>& counts, std::size_t total) noexcept {
  double h = 0.0;
  const double n = static_cast<double>(total);
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return std::clamp(h / 4.0, 0.0, 1.0);
}

double squared_distance(const std::vector<double>& x, const std::vector<double>& y) noexcept {
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = x[i] - y[i];
    d += t * t;
  }
  return d;
}

std::size_t nearest(const std::vector<double>& p, const std::vector<std::vector<double>>& centroids, double* dist) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

std::vector<std::vector<double>> seed_centroids(std::span<const std::vector<double>> points, std::size_t k,
                                                Rng& rng) {
  std::vector<std::vector<double>> centroids;
  std::vector<bool> taken(points.size(), false);
  const auto first = static_cast<std::size_t>(rng.below(points.size()));
  centroids.push_back(points[first]);
  taken[first] = true;

  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centroids[0]);

  while (centroids.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = points.size();
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        target -= d2[i];
        if (target < 0.0) break;
      }
    } else {
      // every point coincides with a centroid already; take any unused one
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < points.size(); ++i)
        if (!taken[i]) free.push_back(i);
      pick = free[static_cast<std::size_t>(rng.below(free.size()))];
    }
    taken[pick] = true;
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i)
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
  }
  return centroids;
}

std::vector<std::vector<double>> values_of(std::span<const EntropyFingerprint> fps) {
  std::vector<std::vector<double>> out;
  out.reserve(fps.size());
  for (const auto& f : fps) out.push_back(f.values);
  return out;
}

}  // namespace

std::string_view label_name(SchemeLabel label) noexcept {
  switch (label) {
    case SchemeLabel::FixedIID: return "Fixed IID";
    case SchemeLabel::Low64Subnet: return "Low 64-bit Subnet";
    case SchemeLabel::SlaacEui64: return "SLAAC EUI-64";
    case SchemeLabel::SlaacPrivacy: return "SLAAC Privacy";
    case SchemeLabel::Other: return "Other";
  }
  return "Other";
}

std::string_view label_slug(SchemeLabel label) noexcept {
  switch (label) {
    case SchemeLabel::FixedIID: return "fixed_iid";
    case SchemeLabel::Low64Subnet: return "low64_subnet";
    case SchemeLabel::SlaacEui64: return "slaac_eui64";
    case SchemeLabel::SlaacPrivacy: return "slaac_privacy";
    case SchemeLabel::Other: return "other";
  }
  return "other";
}

double column_entropy(const SeedSet& set, std::size_t index) {
  if (set.empty()) throw EmptySet("column entropy of an empty set");
  if (index < 1 || index > addr6::kNybbles) throw BadRange("nybble index must be in [1, 32]");
  std::array<std::size_t, 16> counts{};
  for (const auto& s : set) ++counts[s[index - 1]];
  return normalized_entropy(counts, set.size());
}

EntropyFingerprint fingerprint(const SeedSet& set, std::size_t a, std::size_t b) {
  if (set.empty()) throw EmptySet("fingerprint of an empty set");
  if (a < 1 || a > b || b > addr6::kNybbles) throw BadRange("need 1 <= a <= b <= 32");

  EntropyFingerprint fp;
  fp.a = a;
  fp.b = b;
  fp.support = set.size();

  std::vector<std::array<std::size_t, 16>> counts(b - a + 1);
  for (const auto& s : set)
    for (std::size_t i = a; i <= b; ++i) ++counts[i - a][s[i - 1]];
  fp.values.reserve(counts.size());
  for (const auto& c : counts) fp.values.push_back(normalized_entropy(c, set.size()));

  const auto& first = set.members().front();
  std::size_t shared = addr6::kNybbles;
  for (const auto& s : set) {
    std::size_t i = 0;
    while (i < shared && s[i] == first[i]) ++i;
    shared = i;
  }
  fp.prefix = first.to_string().substr(0, shared);
  return fp;
}

std::map<std::string, SeedSet> group_by_prefix(const SeedSet& set, std::size_t prefix_nybbles) {
  if (prefix_nybbles < 1 || prefix_nybbles > 31) throw BadRange("prefix length must be in [1, 31] nybbles");
  std::map<std::string, SeedSet> groups;
  for (const auto& s : set) {
    auto key = s.to_string().substr(0, prefix_nybbles);
    auto it = groups.find(key);
    if (it == groups.end()) it = groups.emplace(key, SeedSet(key)).first;
    it->second.insert(s);
  }
  return groups;
}

double address_char_entropy(std::span<const std::uint8_t, 16> iid) noexcept {
  std::array<std::size_t, 16> counts{};
  for (auto v : iid) ++counts[v & 0xf];
  return normalized_entropy(counts, iid.size());
}

std::size_t zero_run_count(std::span<const std::uint8_t, 16> iid) noexcept {
  std::size_t runs = 0;
  for (std::size_t i = 0; i < iid.size();) {
    if (iid[i] != 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < iid.size() && iid[j] == 0) ++j;
    if (j - i >= 2) ++runs;
    i = j;
  }
  return runs;
}

SchemeLabel classify_manual(const NybbleSeq& seq) noexcept {
  const std::span<const std::uint8_t, 16> iid(seq.values().data() + 16, 16);
  // nybbles 23..26 (1-based) == "fffe"
  if (seq[22] == 0xf && seq[23] == 0xf && seq[24] == 0xf && seq[25] == 0xe) return SchemeLabel::SlaacEui64;
  if (address_char_entropy(iid) > kPrivacyEntropyThreshold) return SchemeLabel::SlaacPrivacy;
  const auto runs = zero_run_count(iid);
  if (runs >= 2) return SchemeLabel::Low64Subnet;
  if (runs == 1) return SchemeLabel::FixedIID;
  return SchemeLabel::Other;
}

ClusterModel kmeans(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t rng_seed,
                    const KMeansOptions& options) {
  if (k == 0) throw BadRange("k must be at least 1");
  if (points.size() < k)
    throw TooFewGroups(std::to_string(points.size()) + " fingerprints for k=" + std::to_string(k));
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw ShapeMismatch("fingerprints of different lengths");

  Rng rng(rng_seed);
  ClusterModel m;
  m.k = k;
  m.rng_seed = rng_seed;
  m.centroids = seed_centroids(points, k, rng);
  m.assignments.assign(points.size(), k);

  auto assign = [&]() {
    bool changed = false;
    double sse = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double d = 0.0;
      std::size_t c = nearest(points[i], m.centroids, &d);
      // keep the current cluster on ties
      if (m.assignments[i] < k && c != m.assignments[i] &&
          squared_distance(points[i], m.centroids[m.assignments[i]]) <= d) {
        c = m.assignments[i];
        d = squared_distance(points[i], m.centroids[c]);
      }
      if (c != m.assignments[i]) changed = true;
      m.assignments[i] = c;
      sse += d;
    }
    return std::pair{changed, sse};
  };

  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    const auto [changed, sse_assigned] = assign();
    if (!changed && it > 0) break;
    (void)sse_assigned;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& s = sums[m.assignments[i]];
      for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
      ++sizes[m.assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t d = 0; d < dim; ++d) m.centroids[c][d] = sums[c][d] / static_cast<double>(sizes[c]);
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) sse += squared_distance(points[i], m.centroids[m.assignments[i]]);
    m.sse_trace.push_back(sse);
    m.iterations = it + 1;
  }

  // final assignment so every point sits with its nearest centroid
  m.sse = assign().second;
  return m;
}

ClusterModel kmeans(std::span<const EntropyFingerprint> fingerprints, std::size_t k, std::uint64_t rng_seed,
                    const KMeansOptions& options) {
  const auto pts = values_of(fingerprints);
  return kmeans(std::span<const std::vector<double>>(pts), k, rng_seed, options);
}

ClusterModel kmeans_best_of(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t rng_seed,
                            std::size_t restarts) {
  ClusterModel best;
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    auto m = kmeans(points, k, derive_seed(rng_seed, r));
    if (r == 0 || m.sse < best.sse) best = std::move(m);
  }
  return best;
}

ElbowResult elbow(std::span<const std::vector<double>> points, std::size_t k_max, std::uint64_t rng_seed,
                  std::size_t restarts) {
  if (k_max < 2) throw BadRange("k_max must be at least 2");
  ElbowResult r;
  for (std::size_t k = 1; k <= k_max; ++k)
    r.sse_curve.push_back(kmeans_best_of(points, k, derive_seed(rng_seed, "k" + std::to_string(k)), restarts).sse);

  r.chosen_k = 1;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 2; k < k_max; ++k) {
    const double d2 = r.sse_curve[k - 2] - 2.0 * r.sse_curve[k - 1] + r.sse_curve[k];
    if (d2 > best) {
      best = d2;
      r.chosen_k = k;
    }
  }
  return r;
}

ElbowResult elbow(std::span<const EntropyFingerprint> fingerprints, std::size_t k_max, std::uint64_t rng_seed,
                  std::size_t restarts) {
  const auto pts = values_of(fingerprints);
  return elbow(std::span<const std::vector<double>>(pts), k_max, rng_seed, restarts);
}

SeedClustering cluster_seeds(const SeedSet& seeds, const ClusteringOptions& options) {
  SeedClustering out;
  out.unclassified.set_source_label("unclassified");
  const auto grouped = group_by_prefix(seeds, options.prefix_nybbles);
  std::vector<const SeedSet*> groups;
  for (const auto& [prefix, group] : grouped) {
    if (group.size() < options.min_group_size) {
      for (const auto& s : group) out.unclassified.insert(s);
      continue;
    }
    auto fp = fingerprint(group, options.a, options.b);
    fp.prefix = prefix;
    out.fingerprints.push_back(std::move(fp));
    groups.push_back(&group);
  }

  const auto pts = values_of(out.fingerprints);
  const std::span<const std::vector<double>> view(pts);
  std::size_t k = options.k;
  if (k == 0) {
    if (pts.empty()) throw TooFewGroups("no group reaches the minimum size");
    const auto k_max = std::min(options.k_max, pts.size());
    if (k_max < 2) {
      k = 1;
    } else {
      auto curve = elbow(view, k_max, derive_seed(options.rng_seed, "elbow"), options.restarts);
      out.sse_curve = std::move(curve.sse_curve);
      k = curve.chosen_k;
    }
  }
  out.model = kmeans_best_of(view, k, derive_seed(options.rng_seed, "kmeans"), options.restarts);
  out.clusters.resize(k);
  for (std::size_t c = 0; c < k; ++c) out.clusters[c].set_source_label("cluster_" + std::to_string(c + 1));
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (const auto& s : *groups[g]) out.clusters[out.model.assignments[g]].insert(s);
  return out;
}

}  // namespace v6forge::seedclass
