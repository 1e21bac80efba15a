#include <cmath>
#include <vector>

#include "doctest.h"
#include "effspec/rng.hpp"

using namespace effspec;

TEST_SUITE("rng") {
  TEST_CASE("philox known answers") {
    auto a = philox4x32({0, 0, 0, 0}, {0, 0});
    CHECK(a[0] == 0x6627e8d5u);
    CHECK(a[1] == 0xe169c58du);
    CHECK(a[2] == 0xbc57ac4cu);
    CHECK(a[3] == 0x9b00dbd8u);
    auto b = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    CHECK(b[0] == 0x408f276du);
    CHECK(b[1] == 0x41c83b0eu);
    CHECK(b[2] == 0xa20bc7c6u);
    CHECK(b[3] == 0x6d5451fdu);
    auto c = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    CHECK(c[0] == 0xd16cfe09u);
    CHECK(c[1] == 0x94fdccebu);
    CHECK(c[2] == 0x5001e420u);
    CHECK(c[3] == 0x24126ea1u);
  }

  TEST_CASE("same seed and stream reproduce; streams differ") {
    CounterRng a(42, 3), b(42, 3), c(42, 4);
    int same = 0;
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      same += x == c.next_u64();
    }
    CHECK(same == 0);
  }

  TEST_CASE("uniform and normal moments") {
    CounterRng r(7);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0, sn4 = 0, umin = 1, umax = 0;
    for (int i = 0; i < n; ++i) {
      const double u = r.uniform();
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      su += u;
      const double g = r.normal();
      sn += g;
      sn2 += g * g;
      sn4 += g * g * g * g;
    }
    CHECK(umin > 0.0);
    CHECK(umax < 1.0);
    CHECK(std::abs(su / n - 0.5) < 4 * std::sqrt(1.0 / 12 / n));
    CHECK(std::abs(sn / n) < 4 / std::sqrt(double(n)));
    CHECK(std::abs(sn2 / n - 1) < 4 * std::sqrt(2.0 / n));
    CHECK(std::abs(sn4 / n - 3) < 4 * std::sqrt(96.0 / n));
  }

  TEST_CASE("categorical frequencies") {
    CounterRng r(11);
    const double w[3] = {0.2, 0.5, 0.3};
    std::vector<int> cnt(3, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++cnt[r.categorical(w, 3)];
    for (int j = 0; j < 3; ++j) CHECK(std::abs(cnt[j] - n * w[j]) < 3 * std::sqrt(n * w[j] * (1 - w[j])) + 1);
  }

  TEST_CASE("substream leaves parent untouched") {
    CounterRng a(5), b(5);
    (void)a.substream(9).next_u32();
    CHECK(a.next_u64() == b.next_u64());
  }
}
