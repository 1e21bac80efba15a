// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
#pragma once

#include <array>
#include <cstdint>

namespace effspec {

// Philox4x32-10 counter-based generator. A (seed, stream) pair names an
// independent sequence; the counter walks within it.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Sample index with probability proportional to weights (weights sum to 1).
  int categorical(const double* weights, int count);

  // Fresh generator for a derived stream; does not disturb this one.
  CounterRng substream(std::uint64_t id) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

}  // namespace effspec
