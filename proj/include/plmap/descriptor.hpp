#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace plmap {

/// Fixed-length binary descriptor compared by Hamming distance.
class BinaryDescriptor {
 public:
  BinaryDescriptor() = default;
  explicit BinaryDescriptor(int bits);

  int bits() const { return bits_; }
  bool bit(int i) const;
  void set_bit(int i, bool value);
  void flip(int i);

  /// Throws DomainError on length mismatch.
  int Hamming(const BinaryDescriptor& other) const;

  std::string ToHex() const;
  static BinaryDescriptor FromHex(const std::string& hex, int bits);

  bool operator==(const BinaryDescriptor&) const = default;

 private:
  int bits_ = 0;
  std::vector<std::uint64_t> words_;
};

}  // namespace plmap
