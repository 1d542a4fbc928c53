#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace quenchmc {

// Fixed-length bit vector over {0,1}^n.  Bit i maps to basis index
// bit i * 2^i, i.e. bit 0 is the least significant digit of the index.
// String form lists bit 0 first.
class BitString {
public:
  BitString() = default;

  explicit BitString(std::size_t n) : bits_(n, 0) {
    if (n == 0) throw std::invalid_argument("BitString: length must be positive");
  }

  static BitString from_index(std::size_t n, std::uint64_t index) {
    BitString z(n);
    if (n < 64 && (index >> n) != 0)
      throw std::invalid_argument("BitString: index out of range for length");
    for (std::size_t i = 0; i < n; ++i) z.bits_[i] = (index >> i) & 1ull;
    return z;
  }

  static BitString parse(std::string_view s) {
    if (s.empty()) throw std::invalid_argument("BitString: empty literal");
    BitString z(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '0') z.bits_[i] = 0;
      else if (s[i] == '1') z.bits_[i] = 1;
      else throw std::invalid_argument("BitString: literal must be 0/1 characters");
    }
    return z;
  }

  std::size_t size() const { return bits_.size(); }

  int operator[](std::size_t i) const { return bits_[i]; }

  void set(std::size_t i, int v) {
    if (i >= bits_.size()) throw std::invalid_argument("BitString: index out of range");
    bits_[i] = v ? 1 : 0;
  }

  void flip(std::size_t i) {
    if (i >= bits_.size()) throw std::invalid_argument("BitString: index out of range");
    bits_[i] ^= 1;
  }

  std::uint64_t index() const {
    if (bits_.size() > 64)
      throw std::invalid_argument("BitString: index overflows 64 bits");
    std::uint64_t idx = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i)
      idx |= static_cast<std::uint64_t>(bits_[i]) << i;
    return idx;
  }

  std::string str() const {
    std::string s(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) s[i] = '1';
    return s;
  }

  BitString operator^(const BitString& other) const {
    if (bits_.size() != other.bits_.size())
      throw std::invalid_argument("BitString: XOR of unequal lengths");
    BitString out(bits_.size());
    for (std::size_t i = 0; i < bits_.size(); ++i)
      out.bits_[i] = bits_[i] ^ other.bits_[i];
    return out;
  }

  bool operator==(const BitString&) const = default;

  const std::vector<std::uint8_t>& bits() const { return bits_; }

private:
  std::vector<std::uint8_t> bits_;
};

inline int popcount(const BitString& z) {
  int c = 0;
  for (std::size_t i = 0; i < z.size(); ++i) c += z[i];
  return c;
}

}  // namespace quenchmc
