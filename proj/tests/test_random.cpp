#include <doctest.h>

#include <cmath>
#include <set>

#include "fhmg/random.hpp"

using namespace fhmg;

TEST_SUITE("random") {
  TEST_CASE("philox4x32-10 known answers") {
    using W = std::array<std::uint32_t, 4>;
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == W{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          W{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          W{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
  }

  TEST_CASE("streams are reproducible and distinct") {
    NormalStream a(42, 7), b(42, 7), c(42, 8), d(43, 7), e(42, 7, 1);
    std::set<double> firsts;
    for (int k = 0; k < 100; ++k) {
      const double x = a.normal();
      CHECK(x == b.normal());
      if (k == 0) {
        firsts.insert(x);
        firsts.insert(c.normal());
        firsts.insert(d.normal());
        firsts.insert(e.normal());
      }
    }
    CHECK(firsts.size() == 4);
  }

  TEST_CASE("uniforms lie in the open unit interval") {
    NormalStream s(1, 0);
    for (int k = 0; k < 100000; ++k) {
      const double u = s.uniform();
      CHECK_UNARY(u > 0.0 && u < 1.0);
    }
  }

  TEST_CASE("normal moments") {
    NormalStream s(2024, 3);
    const int n = 400000;
    double sum = 0.0, sq = 0.0, cube = 0.0, quart = 0.0;
    for (int k = 0; k < n; ++k) {
      const double z = s.normal();
      sum += z;
      sq += z * z;
      cube += z * z * z;
      quart += z * z * z * z;
    }
    CHECK(std::abs(sum / n) < 4.0 / std::sqrt(n));
    CHECK(std::abs(sq / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(cube / n) < 4.0 * std::sqrt(15.0 / n));
    CHECK(std::abs(quart / n - 3.0) < 4.0 * std::sqrt(96.0 / n));
  }
}
