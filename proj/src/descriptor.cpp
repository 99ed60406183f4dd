#include "plmap/descriptor.hpp"

#include <bit>
#include <cstdio>

#include "plmap/types.hpp"

namespace plmap {

BinaryDescriptor::BinaryDescriptor(int bits)
    : bits_(bits), words_(static_cast<std::size_t>((bits + 63) / 64), 0) {
  if (bits <= 0) throw DomainError("descriptor length must be positive");
}

bool BinaryDescriptor::bit(int i) const {
  if (i < 0 || i >= bits_) throw DomainError("descriptor bit out of range");
  return (words_[i / 64] >> (i % 64)) & 1u;
}

void BinaryDescriptor::set_bit(int i, bool value) {
  if (i < 0 || i >= bits_) throw DomainError("descriptor bit out of range");
  const std::uint64_t mask = std::uint64_t{1} << (i % 64);
  if (value) {
    words_[i / 64] |= mask;
  } else {
    words_[i / 64] &= ~mask;
  }
}

void BinaryDescriptor::flip(int i) { set_bit(i, !bit(i)); }

int BinaryDescriptor::Hamming(const BinaryDescriptor& other) const {
  if (bits_ != other.bits_) {
    throw DomainError("Hamming: descriptor lengths differ");
  }
  int d = 0;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    d += std::popcount(words_[w] ^ other.words_[w]);
  }
  return d;
}

std::string BinaryDescriptor::ToHex() const {
  std::string out;
  char buf[17];
  for (std::uint64_t w : words_) {
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(w));
    out += buf;
  }
  return out;
}

BinaryDescriptor BinaryDescriptor::FromHex(const std::string& hex, int bits) {
  BinaryDescriptor d(bits);
  if (hex.size() != d.words_.size() * 16) {
    throw DomainError("descriptor hex string has wrong length");
  }
  for (std::size_t w = 0; w < d.words_.size(); ++w) {
    d.words_[w] = std::stoull(hex.substr(w * 16, 16), nullptr, 16);
  }
  return d;
}

}  // namespace plmap
