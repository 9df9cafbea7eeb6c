#pragma once
// Constructed corpora shared by unit, integration and acceptance tests.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "v6forge/addr6.hpp"
#include "v6forge/evalkit.hpp"
#include "v6forge/random.hpp"
#include "v6forge/seedclass.hpp"

namespace fixtures {

using v6forge::Rng;
using v6forge::addr6::NybbleSeq;
using v6forge::addr6::SeedSet;
using v6forge::seedclass::SchemeLabel;

inline NybbleSeq seq_from(const std::array<std::uint8_t, 16>& prefix, const std::array<std::uint8_t, 16>& iid) {
  NybbleSeq::storage_type s{};
  for (std::size_t i = 0; i < 16; ++i) {
    s[i] = prefix[i];
    s[16 + i] = iid[i];
  }
  return NybbleSeq(s);
}

inline std::uint8_t nonzero(Rng& rng) { return static_cast<std::uint8_t>(1 + rng.below(15)); }

inline std::array<std::uint8_t, 16> random_prefix(Rng& rng) {
  std::array<std::uint8_t, 16> p{};
  p[0] = 2;
  for (std::size_t i = 1; i < 16; ++i) p[i] = static_cast<std::uint8_t>(rng.below(16));
  return p;
}

// One address built to satisfy exactly the rule for `label` and none of the
// higher-precedence rules.
inline NybbleSeq make_scheme_address(SchemeLabel label, Rng& rng) {
  std::array<std::uint8_t, 16> iid{};
  switch (label) {
    case SchemeLabel::FixedIID:
      // 12 zeros then four non-zero nybbles: a single zero run
      for (std::size_t i = 12; i < 16; ++i) iid[i] = nonzero(rng);
      break;
    case SchemeLabel::Low64Subnet:
      // 0000:00ab:0000:00cd with a..d non-zero: two zero runs
      iid[6] = nonzero(rng);
      iid[7] = nonzero(rng);
      iid[14] = nonzero(rng);
      iid[15] = nonzero(rng);
      break;
    case SchemeLabel::SlaacEui64:
      for (auto& v : iid) v = static_cast<std::uint8_t>(rng.below(16));
      iid[6] = 0xf;
      iid[7] = 0xf;
      iid[8] = 0xf;
      iid[9] = 0xe;
      break;
    case SchemeLabel::SlaacPrivacy:
      // a permutation of all 16 symbols with up to two substitutions keeps
      // the character entropy at 0.92 or more
      for (;;) {
        for (std::size_t i = 0; i < 16; ++i) iid[i] = static_cast<std::uint8_t>(i);
        for (std::size_t i = 15; i > 0; --i) std::swap(iid[i], iid[rng.below(i + 1)]);
        for (int k = 0; k < 2; ++k) iid[rng.below(16)] = static_cast<std::uint8_t>(rng.below(16));
        if (!(iid[6] == 0xf && iid[7] == 0xf && iid[8] == 0xf && iid[9] == 0xe)) break;
      }
      break;
    case SchemeLabel::Other:
      // no zero pair, low entropy, no marker
      for (std::size_t i = 0; i < 16; ++i) iid[i] = i % 2 ? 1 : 2;
      break;
  }
  return seq_from(random_prefix(rng), iid);
}

struct LabeledCorpus {
  std::vector<NybbleSeq> addresses;
  std::vector<SchemeLabel> labels;
};

inline LabeledCorpus scheme_corpus(std::size_t per_scheme, std::uint64_t seed) {
  Rng rng(seed);
  LabeledCorpus c;
  for (auto label : {SchemeLabel::FixedIID, SchemeLabel::Low64Subnet, SchemeLabel::SlaacEui64,
                     SchemeLabel::SlaacPrivacy})
    for (std::size_t i = 0; i < per_scheme; ++i) {
      c.addresses.push_back(make_scheme_address(label, rng));
      c.labels.push_back(label);
    }
  return c;
}

// Points scattered tightly around three mutually equidistant centres in
// [0, 1]^dim: blob b sits at 0.9 on coordinates d with d % 3 == b and at 0.1
// elsewhere. (Collinear centres put the SSE knee at k = 2.)
inline std::vector<std::vector<double>> three_blobs(std::size_t per_blob, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> pts;
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i = 0; i < per_blob; ++i) {
      std::vector<double> p(dim);
      for (std::size_t d = 0; d < dim; ++d) p[d] = (d % 3 == b ? 0.9 : 0.1) + rng.uniform(-0.02, 0.02);
      pts.push_back(std::move(p));
    }
  return pts;
}

// /32 groups of three kinds (fixed IID, EUI-64, privacy) whose entropy
// fingerprints form three clusters.
inline SeedSet three_kind_groups(std::size_t groups_per_kind, std::size_t per_group, std::uint64_t seed) {
  Rng rng(seed);
  SeedSet out("three kinds");
  const std::array<SchemeLabel, 3> kinds = {SchemeLabel::FixedIID, SchemeLabel::SlaacEui64,
                                            SchemeLabel::SlaacPrivacy};
  std::uint32_t next_prefix = 0x20010000;
  for (auto kind : kinds)
    for (std::size_t g = 0; g < groups_per_kind; ++g, ++next_prefix) {
      const std::uint64_t subnet = rng.below(1u << 16);
      for (std::size_t added = 0; added < per_group;) {
        NybbleSeq::storage_type s{};
        for (std::size_t i = 0; i < 8; ++i) s[i] = static_cast<std::uint8_t>((next_prefix >> (28 - 4 * i)) & 0xf);
        for (std::size_t i = 0; i < 4; ++i) s[12 + i] = static_cast<std::uint8_t>((subnet >> (12 - 4 * i)) & 0xf);
        const auto iid = make_scheme_address(kind, rng);
        for (std::size_t i = 16; i < 32; ++i) s[i] = iid[i];
        if (out.insert(NybbleSeq(s))) ++added;
      }
    }
  return out;
}

// Candidates, seeds and oracle whose counts reproduce a published result
// row: n_candidate candidates, n_hit of them active, of which n_hit - n_new
// are also seeds.
struct EvalFixture {
  std::vector<NybbleSeq> candidates;
  SeedSet seeds;
  SeedSet active;  // oracle membership
  std::size_t n_sampled = 0;
};

inline NybbleSeq indexed_address(std::uint64_t block, std::uint64_t index) {
  NybbleSeq::storage_type s{};
  const std::uint64_t hi = 0x20010db800000000ull | (block << 16);
  for (std::size_t i = 0; i < 16; ++i) s[i] = static_cast<std::uint8_t>((hi >> (60 - 4 * i)) & 0xf);
  for (std::size_t i = 0; i < 16; ++i) s[16 + i] = static_cast<std::uint8_t>((index >> (60 - 4 * i)) & 0xf);
  return NybbleSeq(s);
}

inline EvalFixture counts_fixture(std::size_t n_sampled, std::size_t n_candidate, std::size_t n_hit,
                                  std::size_t n_new, std::size_t extra_seeds, std::uint64_t seed) {
  EvalFixture f;
  f.n_sampled = n_sampled;
  Rng rng(seed);
  // spread the roles over the candidate list instead of leaving them in blocks
  std::vector<std::size_t> role(n_candidate, 0);  // 0 inactive, 1 new hit, 2 seed hit
  for (std::size_t i = 0; i < n_hit; ++i) role[i] = i < n_new ? 1 : 2;
  for (std::size_t i = n_candidate; i > 1; --i) std::swap(role[i - 1], role[rng.below(i)]);
  for (std::size_t i = 0; i < n_candidate; ++i) {
    const auto a = indexed_address(1, i);
    f.candidates.push_back(a);
    if (role[i] != 0) f.active.insert(a);
    if (role[i] == 2) f.seeds.insert(a);
  }
  for (std::size_t i = 0; i < extra_seeds; ++i) {
    const auto a = indexed_address(2, i);
    f.seeds.insert(a);
    f.active.insert(a);
  }
  return f;
}

// The published "no classification" row: 756,658 candidates from 1,000,000
// draws, 14,894 hits, 9,685 new.
inline EvalFixture table_row_fixture() { return counts_fixture(1000000, 756658, 14894, 9685, 3000, 17); }

inline void write_lines(const std::filesystem::path& path, const std::vector<NybbleSeq>& seqs) {
  std::ofstream out(path);
  v6forge::addr6::write_address_list(out, seqs);
}

}  // namespace fixtures
