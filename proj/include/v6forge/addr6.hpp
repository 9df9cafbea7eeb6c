#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace v6forge::addr6 {

inline constexpr std::size_t kNybbles = 32;
inline constexpr std::size_t kAlphabet = 16;

/// A 128-bit IPv6 address. `hi` holds the first 64 bits on the wire.
struct Ipv6Address {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  friend constexpr auto operator<=>(const Ipv6Address&, const Ipv6Address&) = default;

  /// 16-bit group `g` (0..7), most significant first.
  [[nodiscard]] constexpr std::uint16_t group(std::size_t g) const noexcept {
    const std::uint64_t half = g < 4 ? hi : lo;
    return static_cast<std::uint16_t>(half >> (48 - 16 * (g % 4)));
  }
};

/// Exactly 32 nybble values in [0, 15], most significant first.
class NybbleSeq {
 public:
  using storage_type = std::array<std::uint8_t, kNybbles>;

  constexpr NybbleSeq() noexcept = default;

  /// Throws MalformedAddress unless every value is < 16.
  explicit NybbleSeq(const storage_type& values);

  /// Parses 32 hex characters (either case). Throws MalformedAddress.
  static NybbleSeq from_hex(std::string_view hex);

  [[nodiscard]] std::uint8_t operator[](std::size_t i) const noexcept { return values_[i]; }
  [[nodiscard]] const storage_type& values() const noexcept { return values_; }

  /// 32 lowercase hex characters.
  [[nodiscard]] std::string to_string() const;

  friend auto operator<=>(const NybbleSeq&, const NybbleSeq&) = default;

 private:
  storage_type values_{};
};

/// 32x16 indicator matrix; row i is the one-hot vector of nybble i.
class OneHotGrid {
 public:
  [[nodiscard]] std::uint8_t at(std::size_t row, std::size_t symbol) const noexcept {
    return cells_[row * kAlphabet + symbol];
  }
  [[nodiscard]] const std::array<std::uint8_t, kNybbles * kAlphabet>& cells() const noexcept {
    return cells_;
  }

  /// Per-row argmax, i.e. the sequence this grid encodes.
  [[nodiscard]] NybbleSeq argmax() const;

 private:
  friend OneHotGrid encode_onehot(const NybbleSeq&) noexcept;
  std::array<std::uint8_t, kNybbles * kAlphabet> cells_{};
};

struct NybbleSeqHash {
  std::size_t operator()(const NybbleSeq& s) const noexcept;
};

struct Ipv6AddressHash {
  std::size_t operator()(const Ipv6Address& a) const noexcept;
};

/// Duplicate-free set of addresses that remembers insertion order.
class SeedSet {
 public:
  SeedSet() = default;
  explicit SeedSet(std::string source_label) : source_label_(std::move(source_label)) {}

  /// Returns false if `seq` was already present.
  bool insert(const NybbleSeq& seq);
  [[nodiscard]] bool contains(const NybbleSeq& seq) const { return index_.contains(seq); }

  [[nodiscard]] std::size_t size() const noexcept { return members_.size(); }
  [[nodiscard]] bool empty() const noexcept { return members_.empty(); }
  [[nodiscard]] const std::vector<NybbleSeq>& members() const noexcept { return members_; }
  [[nodiscard]] auto begin() const noexcept { return members_.begin(); }
  [[nodiscard]] auto end() const noexcept { return members_.end(); }

  [[nodiscard]] const std::string& source_label() const noexcept { return source_label_; }
  void set_source_label(std::string label) { source_label_ = std::move(label); }

 private:
  std::vector<NybbleSeq> members_;
  std::unordered_set<NybbleSeq, NybbleSeqHash> index_;
  std::string source_label_;
};

Ipv6Address parse_text(std::string_view text);
NybbleSeq to_nybbles(const Ipv6Address& addr) noexcept;
Ipv6Address from_nybbles(const NybbleSeq& seq) noexcept;

/// RFC 5952 text: lowercase, leading zeros dropped, the leftmost longest
/// run of two or more zero groups replaced by "::".
std::string format_canonical(const Ipv6Address& addr);
std::string format_canonical(const NybbleSeq& seq);

OneHotGrid encode_onehot(const NybbleSeq& seq) noexcept;

struct LoadStats {
  std::size_t lines = 0;
  std::size_t parsed = 0;
  std::size_t duplicates = 0;
  std::size_t malformed = 0;
  std::optional<std::string> first_error;
};

struct LoadResult {
  SeedSet seeds;
  LoadStats stats;
};

enum class LoadMode { Lenient, Strict };

/// Reads one address per line. Blank lines and lines starting with '#' are
/// skipped. In strict mode the first malformed line throws MalformedAddress.
LoadResult load_seed_set(std::istream& in, LoadMode mode = LoadMode::Lenient,
                         std::string source_label = {});

/// Writes canonical text, one address per line, no header.
void write_address_list(std::ostream& out, const std::vector<NybbleSeq>& seqs);

}  // namespace v6forge::addr6
