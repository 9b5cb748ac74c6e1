#pragma once

#include <array>
#include <bit>
#include <cstdint>

#include "endoslam/geometry/types.h"

namespace endoslam {

struct Keypoint {
  Pixel position = Pixel::Zero();  // level-0 pixel coordinates
  int level = 0;
  float angle = 0.0f;     // radians, intensity-centroid direction
  float response = 0.0f;  // corner score
};

struct Descriptor256 {
  std::array<std::uint64_t, 4> words{};

  bool bit(int i) const { return (words[i >> 6] >> (i & 63)) & 1u; }
  void set_bit(int i) { words[i >> 6] |= std::uint64_t{1} << (i & 63); }

  static Descriptor256 ones() {
    Descriptor256 d;
    d.words.fill(~std::uint64_t{0});
    return d;
  }

  bool operator==(const Descriptor256&) const = default;
};

inline int hamming(const Descriptor256& a, const Descriptor256& b) {
  return std::popcount(a.words[0] ^ b.words[0]) + std::popcount(a.words[1] ^ b.words[1]) +
         std::popcount(a.words[2] ^ b.words[2]) + std::popcount(a.words[3] ^ b.words[3]);
}

}  // namespace endoslam
