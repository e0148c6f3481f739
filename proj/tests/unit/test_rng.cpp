// SPDX-License-Identifier: Apache-2.0
#include "core/rng.hpp"

#include <doctest.h>

#include <set>
#include <vector>

using namespace splitplot;

TEST_CASE("philox4x32-10 known-answer vectors") {
  // Reference values published with the Random123 library.
  const auto zero = philox::block({0, 0, 0, 0}, {0, 0});
  CHECK(zero == philox::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  const auto ones = philox::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  CHECK(ones == philox::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  const auto pi = philox::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  CHECK(pi == philox::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are reproducible and distinct") {
  RngStream a(42, 1, 7), b(42, 1, 7), c(42, 2, 7), d(42, 1, 8), e(43, 1, 7);
  std::vector<std::uint64_t> va, vb;
  for (int k = 0; k < 100; ++k) {
    va.push_back(a());
    vb.push_back(b());
  }
  CHECK(va == vb);
  RngStream a2(42, 1, 7);
  CHECK(a2() != c());
  RngStream a3(42, 1, 7);
  CHECK(a3() != d());
  RngStream a4(42, 1, 7);
  CHECK(a4() != e());
}

TEST_CASE("uniform and normal moments") {
  RngStream rng(5, 0, 0);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int k = 0; k < n; ++k) {
    const double u = rng.uniform();
    CHECK_FALSE((u < 0.0 || u >= 1.0));
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(std::abs(su / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
  CHECK(std::abs(sn / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sn2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("below covers its range evenly") {
  RngStream rng(6, 0, 0);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int k = 0; k < n; ++k) {
    const auto v = rng.below(7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (int c : counts) CHECK(std::abs(c - n / 7) < 5.0 * std::sqrt(n / 7.0));
}

TEST_CASE("derive_seed separates children") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 100; ++a) {
    for (std::uint64_t b = 0; b < 10; ++b) seen.insert(derive_seed(1, a, b));
  }
  CHECK(seen.size() == 1000);
}
