#include "doctest.h"

#include <stdexcept>

#include "pagg/descriptor.hpp"
#include "test_util.hpp"

using namespace pagg;
using pagg::testing::RandomDescriptor;

TEST_CASE("width must be a positive multiple of 64") {
  CHECK_NOTHROW(ValidateDescriptorBits(64));
  CHECK_NOTHROW(ValidateDescriptorBits(512));
  CHECK_THROWS_AS(ValidateDescriptorBits(0), std::invalid_argument);
  CHECK_THROWS_AS(ValidateDescriptorBits(100), std::invalid_argument);
  CHECK_THROWS_AS(ValidateDescriptorBits(-64), std::invalid_argument);
  CHECK_THROWS_AS(BinaryDescriptor(72), std::invalid_argument);
}

TEST_CASE("bit j lives in word j/64 at position j%64") {
  BinaryDescriptor d(128);
  d.Set(65);
  d.Set(3);
  CHECK(d.words()[0] == 8u);
  CHECK(d.words()[1] == 2u);
  CHECK(d.Test(65));
  CHECK_FALSE(d.Test(64));
  d.Flip(65);
  CHECK(d.words()[1] == 0u);
  d.Set(3, false);
  CHECK(d.PopCount() == 0);
}

TEST_CASE("byte image is little-endian and round-trips") {
  BinaryDescriptor d(64);
  d.Set(0);
  d.Set(9);
  d.Set(63);
  const auto bytes = d.ToBytes();
  REQUIRE(bytes.size() == 8);
  CHECK(bytes[0] == 0x01);
  CHECK(bytes[1] == 0x02);
  CHECK(bytes[7] == 0x80);

  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto r = RandomDescriptor(512, rng);
    CHECK(BinaryDescriptor::FromBytes(r.ToBytes()) == r);
  }
  const std::vector<uint8_t> odd(7, 0);
  CHECK_THROWS_AS(BinaryDescriptor::FromBytes(odd), std::invalid_argument);
}

TEST_CASE("hamming distance matches a bit-by-bit count") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = RandomDescriptor(512, rng);
    const auto b = RandomDescriptor(512, rng);
    int oracle = 0;
    for (int j = 0; j < 512; ++j) oracle += a.Test(j) != b.Test(j);
    CHECK(Hamming(a, b) == oracle);
  }
  CHECK(Hamming(BinaryDescriptor::Ones(512), BinaryDescriptor(512)) == 512);
  CHECK_THROWS_AS(Hamming(BinaryDescriptor(64), BinaryDescriptor(128)),
                  std::invalid_argument);
}

TEST_CASE("hamming is a metric") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = RandomDescriptor(256, rng);
    const auto b = RandomDescriptor(256, rng);
    const auto c = RandomDescriptor(256, rng);
    CHECK(Hamming(a, a) == 0);
    CHECK(Hamming(a, b) == Hamming(b, a));
    CHECK(Hamming(a, c) <= Hamming(a, b) + Hamming(b, c));
  }
}

TEST_CASE("real encoding is {0,1} per bit") {
  Rng rng(5);
  const auto d = RandomDescriptor(128, rng);
  const Eigen::VectorXd x = ToReal(d);
  REQUIRE(x.size() == 128);
  for (int j = 0; j < 128; ++j) CHECK(x[j] == (d.Test(j) ? 1.0 : 0.0));

  std::vector<BinaryDescriptor> many{d, BinaryDescriptor::Ones(128)};
  const Eigen::MatrixXd m = ToRealColumns(many);
  CHECK(m.cols() == 2);
  CHECK(m.col(0) == x);
  CHECK(m.col(1).sum() == 128.0);
}
