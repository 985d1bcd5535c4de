#ifndef PAGG_DESCRIPTOR_HPP
#define PAGG_DESCRIPTOR_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace pagg {

inline constexpr int kDefaultDescriptorBits = 512;

// Fixed-width packed bit vector. Bit j lives in word j / 64 at position
// j % 64; the width is always a positive multiple of 64.
class BinaryDescriptor {
 public:
  BinaryDescriptor() = default;
  // All-zero descriptor of the given width.
  explicit BinaryDescriptor(int bits);
  explicit BinaryDescriptor(std::vector<uint64_t> words);

  static BinaryDescriptor Ones(int bits);
  // Inverse of ToBytes(); bytes.size() * 8 is the width.
  static BinaryDescriptor FromBytes(std::span<const uint8_t> bytes);

  int bits() const { return static_cast<int>(words_.size()) * 64; }
  std::span<const uint64_t> words() const { return words_; }

  bool Test(int j) const {
    return (words_[j >> 6] >> (j & 63)) & 1u;
  }
  void Set(int j, bool value = true);
  void Flip(int j) { words_[j >> 6] ^= uint64_t{1} << (j & 63); }

  int PopCount() const;

  // Little-endian byte image of the word array (bits() / 8 bytes).
  std::vector<uint8_t> ToBytes() const;

  friend bool operator==(const BinaryDescriptor&,
                         const BinaryDescriptor&) = default;

 private:
  std::vector<uint64_t> words_;
};

// Throws std::invalid_argument unless bits is a positive multiple of 64.
void ValidateDescriptorBits(int bits);

// Number of differing bit positions. Throws std::invalid_argument when the
// widths differ.
int Hamming(const BinaryDescriptor& a, const BinaryDescriptor& b);

// {0,1} encoding used as network input.
Eigen::VectorXd ToReal(const BinaryDescriptor& d);

// Column i of the result is ToReal(descriptors[i]).
Eigen::MatrixXd ToRealColumns(std::span<const BinaryDescriptor> descriptors);

}  // namespace pagg

#endif  // PAGG_DESCRIPTOR_HPP
