// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/math.hpp"

#include <cstdint>

namespace radfield {

/// 64-bit finalizer from MurmurHash3.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

/// Counter-based generator: the n-th draw of stream (seed, a, b) is a pure
/// function of its coordinates, so results do not depend on evaluation order
/// or worker count.
class Sampler {
 public:
  Sampler(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0)
      : key_(mix64(seed * 0x9e3779b97f4a7c15ULL + mix64(a * 0xbf58476d1ce4e5b9ULL + mix64(b + 0x94d049bb133111ebULL)))) {}

  std::uint64_t next_u64() { return mix64(key_ ^ mix64(++counter_ * 0x9e3779b97f4a7c15ULL)); }

  /// Uniform in [0, 1).
  double next1d() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  Vec2 next2d() {
    const double a = next1d();
    return {a, next1d()};
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace radfield
