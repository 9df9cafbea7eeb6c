#include "v6forge/addr6.hpp"

#include <algorithm>
#include <string>

#include "v6forge/errors.hpp"

namespace v6forge::addr6 {
namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) noexcept {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::vector<std::string_view> split_groups(std::string_view part) {
  std::vector<std::string_view> out;
  if (part.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto colon = part.find(':', start);
    out.push_back(part.substr(start, colon == std::string_view::npos ? colon : colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  return out;
}

std::uint16_t parse_hex_group(std::string_view g) {
  if (g.empty()) throw MalformedAddress("empty group");
  if (g.size() > 4) throw MalformedAddress("group longer than 4 digits: '" + std::string(g) + "'");
  std::uint16_t v = 0;
  for (char c : g) {
    const int d = hex_value(c);
    if (d < 0) throw MalformedAddress("non-hex character '" + std::string(1, c) + "'");
    v = static_cast<std::uint16_t>((v << 4) | d);
  }
  return v;
}

// Dotted-quad tail, returned as two 16-bit groups.
std::array<std::uint16_t, 2> parse_ipv4_tail(std::string_view s) {
  std::array<std::uint8_t, 4> octets{};
  std::size_t idx = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i != s.size() && s[i] != '.') continue;
    const auto tok = s.substr(start, i - start);
    if (idx >= 4) throw MalformedAddress("too many octets in IPv4 tail");
    if (tok.empty() || tok.size() > 3) throw MalformedAddress("bad IPv4 octet '" + std::string(tok) + "'");
    if (tok.size() > 1 && tok[0] == '0') throw MalformedAddress("leading zero in IPv4 octet");
    unsigned v = 0;
    for (char c : tok) {
      if (c < '0' || c > '9') throw MalformedAddress("bad IPv4 octet '" + std::string(tok) + "'");
      v = v * 10 + static_cast<unsigned>(c - '0');
    }
    if (v > 255) throw MalformedAddress("IPv4 octet out of range");
    octets[idx++] = static_cast<std::uint8_t>(v);
    start = i + 1;
  }
  if (idx != 4) throw MalformedAddress("IPv4 tail needs 4 octets");
  return {static_cast<std::uint16_t>(octets[0] << 8 | octets[1]),
          static_cast<std::uint16_t>(octets[2] << 8 | octets[3])};
}

// Expands textual groups; a dotted tail is only legal as the very last group.
std::vector<std::uint16_t> parse_side(const std::vector<std::string_view>& groups, bool tail_allowed) {
  std::vector<std::uint16_t> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto g = groups[i];
    if (g.find('.') != std::string_view::npos) {
      if (!tail_allowed || i + 1 != groups.size())
        throw MalformedAddress("IPv4 tail must be the final component");
      const auto words = parse_ipv4_tail(g);
      out.push_back(words[0]);
      out.push_back(words[1]);
    } else {
      out.push_back(parse_hex_group(g));
    }
  }
  return out;
}

Ipv6Address from_groups(const std::array<std::uint16_t, 8>& groups) noexcept {
  Ipv6Address a;
  for (std::size_t g = 0; g < 4; ++g) {
    a.hi = (a.hi << 16) | groups[g];
    a.lo = (a.lo << 16) | groups[g + 4];
  }
  return a;
}

std::string_view trim(std::string_view s) noexcept {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace

NybbleSeq::NybbleSeq(const storage_type& values) : values_(values) {
  for (auto v : values_)
    if (v >= kAlphabet) throw MalformedAddress("nybble value out of range");
}

NybbleSeq NybbleSeq::from_hex(std::string_view hex) {
  if (hex.size() != kNybbles)
    throw MalformedAddress("expected 32 hex digits, got " + std::to_string(hex.size()));
  storage_type v{};
  for (std::size_t i = 0; i < kNybbles; ++i) {
    const int d = hex_value(hex[i]);
    if (d < 0) throw MalformedAddress("non-hex character '" + std::string(1, hex[i]) + "'");
    v[i] = static_cast<std::uint8_t>(d);
  }
  return NybbleSeq(v);
}

std::string NybbleSeq::to_string() const {
  std::string s(kNybbles, '0');
  for (std::size_t i = 0; i < kNybbles; ++i) s[i] = kHexDigits[values_[i]];
  return s;
}

NybbleSeq OneHotGrid::argmax() const {
  NybbleSeq::storage_type v{};
  for (std::size_t r = 0; r < kNybbles; ++r) {
    const auto* row = &cells_[r * kAlphabet];
    v[r] = static_cast<std::uint8_t>(std::max_element(row, row + kAlphabet) - row);
  }
  return NybbleSeq(v);
}

std::size_t NybbleSeqHash::operator()(const NybbleSeq& s) const noexcept {
  return Ipv6AddressHash{}(from_nybbles(s));
}

std::size_t Ipv6AddressHash::operator()(const Ipv6Address& a) const noexcept {
  // splitmix64 finalizer over both halves
  auto mix = [](std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return static_cast<std::size_t>(mix(a.hi ^ mix(a.lo + 0x9e3779b97f4a7c15ULL)));
}

bool SeedSet::insert(const NybbleSeq& seq) {
  if (!index_.insert(seq).second) return false;
  members_.push_back(seq);
  return true;
}

Ipv6Address parse_text(std::string_view text) {
  if (text.empty()) throw MalformedAddress("empty address");
  if (text.find('%') != std::string_view::npos) throw MalformedAddress("zone identifiers are not supported");

  std::array<std::uint16_t, 8> groups{};
  const auto dc = text.find("::");
  if (dc == std::string_view::npos) {
    const auto words = parse_side(split_groups(text), true);
    if (words.size() != 8)
      throw MalformedAddress("expected 8 groups, got " + std::to_string(words.size()));
    std::copy(words.begin(), words.end(), groups.begin());
    return from_groups(groups);
  }
  if (text.find("::", dc + 1) != std::string_view::npos) throw MalformedAddress("more than one '::'");

  const auto left = parse_side(split_groups(text.substr(0, dc)), false);
  const auto right = parse_side(split_groups(text.substr(dc + 2)), true);
  if (left.size() + right.size() > 7) throw MalformedAddress("too many groups around '::'");
  std::copy(left.begin(), left.end(), groups.begin());
  std::copy(right.begin(), right.end(), groups.end() - static_cast<std::ptrdiff_t>(right.size()));
  return from_groups(groups);
}

NybbleSeq to_nybbles(const Ipv6Address& addr) noexcept {
  NybbleSeq::storage_type v{};
  for (std::size_t i = 0; i < 16; ++i) {
    v[i] = static_cast<std::uint8_t>((addr.hi >> (60 - 4 * i)) & 0xf);
    v[i + 16] = static_cast<std::uint8_t>((addr.lo >> (60 - 4 * i)) & 0xf);
  }
  return NybbleSeq(v);
}

Ipv6Address from_nybbles(const NybbleSeq& seq) noexcept {
  Ipv6Address a;
  for (std::size_t i = 0; i < 16; ++i) {
    a.hi = (a.hi << 4) | seq[i];
    a.lo = (a.lo << 4) | seq[i + 16];
  }
  return a;
}

std::string format_canonical(const Ipv6Address& addr) {
  std::array<std::uint16_t, 8> g{};
  for (std::size_t i = 0; i < 8; ++i) g[i] = addr.group(i);

  // leftmost longest run of zero groups, length >= 2
  std::size_t best_start = 8, best_len = 0;
  for (std::size_t i = 0; i < 8;) {
    if (g[i] != 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < 8 && g[j] == 0) ++j;
    if (j - i > best_len) {
      best_start = i;
      best_len = j - i;
    }
    i = j;
  }
  if (best_len < 2) best_start = 8;

  std::string out;
  out.reserve(39);
  char buf[5];
  for (std::size_t i = 0; i < 8; ++i) {
    if (i == best_start) {
      out += "::";
      i += best_len - 1;
      continue;
    }
    if (!out.empty() && out.back() != ':') out += ':';
    int n = 0;
    bool started = false;
    for (int shift = 12; shift >= 0; shift -= 4) {
      const auto d = (g[i] >> shift) & 0xf;
      if (d != 0 || started || shift == 0) {
        buf[n++] = kHexDigits[d];
        started = true;
      }
    }
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

std::string format_canonical(const NybbleSeq& seq) { return format_canonical(from_nybbles(seq)); }

OneHotGrid encode_onehot(const NybbleSeq& seq) noexcept {
  OneHotGrid grid;
  for (std::size_t r = 0; r < kNybbles; ++r) grid.cells_[r * kAlphabet + seq[r]] = 1;
  return grid;
}

LoadResult load_seed_set(std::istream& in, LoadMode mode, std::string source_label) {
  LoadResult result{SeedSet(std::move(source_label)), {}};
  auto& st = result.stats;
  std::string line;
  while (std::getline(in, line)) {
    ++st.lines;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    try {
      const auto seq = to_nybbles(parse_text(text));
      ++st.parsed;
      if (!result.seeds.insert(seq)) ++st.duplicates;
    } catch (const MalformedAddress& e) {
      if (mode == LoadMode::Strict)
        throw MalformedAddress("line " + std::to_string(st.lines) + ": " + e.what());
      ++st.malformed;
      if (!st.first_error) st.first_error = "line " + std::to_string(st.lines) + ": " + e.what();
    }
  }
  return result;
}

void write_address_list(std::ostream& out, const std::vector<NybbleSeq>& seqs) {
  for (const auto& s : seqs) out << format_canonical(s) << '\n';
}

}  // namespace v6forge::addr6
