#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace mixlrt {

/// Counter-based Philox4x32-10 generator.
///
/// A stream is identified by a 64-bit key and a 64-bit stream id; the
/// remaining 64 counter bits enumerate output blocks. Two generators with the
/// same (key, stream) produce identical sequences regardless of which thread
/// or in which order they are used, which is what makes replicate-level
/// parallelism reproducible.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t key, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xffffffffu; }

  result_type operator()();

  /// Raw 10-round Philox bijection, exposed for known-answer tests.
  static Counter block(Counter ctr, Key key);

 private:
  Key key_;
  Counter counter_;
  Counter buffer_{};
  int pos_ = 4;
};

/// SplitMix64-style hash of a seed and a path of indices.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

/// Stream keyed by `master` whose id is the hash of `path`.
Philox4x32 make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> path);

/// Uniform double in [0, 1) with 53 random bits.
double uniform01(Philox4x32& rng);

/// Tags separating the purposes streams are drawn for.
namespace stream_tag {
inline constexpr std::uint64_t kSample = 0x53414d50ULL;
inline constexpr std::uint64_t kReplicate = 0x5245504cULL;
inline constexpr std::uint64_t kDictionary = 0x44494354ULL;
inline constexpr std::uint64_t kLimitDraw = 0x4c494d49ULL;
inline constexpr std::uint64_t kLemma = 0x4c454d4dULL;
inline constexpr std::uint64_t kSpectral = 0x53504543ULL;
}  // namespace stream_tag

}  // namespace mixlrt
