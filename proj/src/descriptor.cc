#include "pagg/descriptor.hpp"

#include <bit>
#include <stdexcept>
#include <string>

namespace pagg {

void ValidateDescriptorBits(int bits) {
  if (bits <= 0 || bits % 64 != 0) {
    throw std::invalid_argument("descriptor width must be a positive multiple "
                                "of 64, got " + std::to_string(bits));
  }
}

BinaryDescriptor::BinaryDescriptor(int bits) {
  ValidateDescriptorBits(bits);
  words_.assign(bits / 64, 0);
}

BinaryDescriptor::BinaryDescriptor(std::vector<uint64_t> words)
    : words_(std::move(words)) {
  if (words_.empty()) {
    throw std::invalid_argument("descriptor must have at least one word");
  }
}

BinaryDescriptor BinaryDescriptor::Ones(int bits) {
  ValidateDescriptorBits(bits);
  return BinaryDescriptor(std::vector<uint64_t>(bits / 64, ~uint64_t{0}));
}

BinaryDescriptor BinaryDescriptor::FromBytes(std::span<const uint8_t> bytes) {
  ValidateDescriptorBits(static_cast<int>(bytes.size() * 8));
  std::vector<uint64_t> words(bytes.size() / 8, 0);
  for (size_t i = 0; i < bytes.size(); ++i) {
    words[i / 8] |= uint64_t{bytes[i]} << (8 * (i % 8));
  }
  return BinaryDescriptor(std::move(words));
}

void BinaryDescriptor::Set(int j, bool value) {
  const uint64_t mask = uint64_t{1} << (j & 63);
  if (value) {
    words_[j >> 6] |= mask;
  } else {
    words_[j >> 6] &= ~mask;
  }
}

int BinaryDescriptor::PopCount() const {
  int count = 0;
  for (uint64_t w : words_) count += std::popcount(w);
  return count;
}

std::vector<uint8_t> BinaryDescriptor::ToBytes() const {
  std::vector<uint8_t> bytes(words_.size() * 8);
  for (size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<uint8_t>(words_[i / 8] >> (8 * (i % 8)));
  }
  return bytes;
}

int Hamming(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  if (a.bits() != b.bits()) {
    throw std::invalid_argument("hamming: incompatible descriptor widths " +
                                std::to_string(a.bits()) + " and " +
                                std::to_string(b.bits()));
  }
  const auto wa = a.words();
  const auto wb = b.words();
  int distance = 0;
  for (size_t i = 0; i < wa.size(); ++i) {
    distance += std::popcount(wa[i] ^ wb[i]);
  }
  return distance;
}

Eigen::VectorXd ToReal(const BinaryDescriptor& d) {
  Eigen::VectorXd x(d.bits());
  for (int j = 0; j < d.bits(); ++j) x[j] = d.Test(j) ? 1.0 : 0.0;
  return x;
}

Eigen::MatrixXd ToRealColumns(std::span<const BinaryDescriptor> descriptors) {
  if (descriptors.empty()) return Eigen::MatrixXd();
  const int bits = descriptors.front().bits();
  Eigen::MatrixXd x(bits, static_cast<Eigen::Index>(descriptors.size()));
  for (size_t i = 0; i < descriptors.size(); ++i) {
    if (descriptors[i].bits() != bits) {
      throw std::invalid_argument("descriptor batch has mixed widths");
    }
    double* col = x.col(static_cast<Eigen::Index>(i)).data();
    for (int j = 0; j < bits; ++j) col[j] = descriptors[i].Test(j) ? 1.0 : 0.0;
  }
  return x;
}

}  // namespace pagg
