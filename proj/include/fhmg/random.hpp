#pragma once

#include <array>
#include <cstdint>

namespace fhmg {

/// Philox4x32-10 block function (Salmon et al., SC'11): a keyed bijection on
/// 128-bit counters. Output depends only on (key, counter), so any replicate's
/// draws can be produced independently of every other replicate.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

/// Stream of standard normals addressed by (seed, stream, substream).
///
/// Counter layout: word 0 = block index, word 1 = substream, words 2-3 =
/// stream (typically the replicate number). Each block yields two uniforms on
/// (0, 1) with 53-bit resolution, turned into two normals by Box-Muller.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream, std::uint32_t substream = 0);

  double uniform();
  double normal();

 private:
  void refill();

  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> counter_{};
  std::array<double, 2> uniform_buffer_{};
  int uniform_left_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fhmg
