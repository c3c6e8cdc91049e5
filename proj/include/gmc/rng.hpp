#pragma once

// Counter-based random streams.
//
// Every random draw in the library comes from a Philox4x32-10 block cipher
// keyed by the 64-bit master seed.  The 128-bit counter is split as
//
//   word 0-1 : block position inside the stream (64 bits)
//   word 2   : replica index
//   word 3   : stream index (layer number, or an auxiliary purpose tag)
//
// so two distinct (replica, stream) pairs address disjoint counter ranges and
// can never produce overlapping output, whatever order the streams are
// consumed in.  This keeps results independent of the worker count.

#include <array>
#include <cstdint>
#include <limits>

#include <boost/random/normal_distribution.hpp>

namespace gmc {

class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  Philox4x32(std::uint64_t seed, std::uint32_t replica, std::uint32_t stream)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        replica_(replica),
        stream_(stream) {}

  // Raw block function, exposed for known-answer tests.
  static Block encrypt(Block counter, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * counter[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * counter[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      counter = {hi1 ^ counter[1] ^ key[0], lo1, hi0 ^ counter[3] ^ key[1], lo0};
    }
    return counter;
  }

  result_type operator()() {
    if (cursor_ == 2) refill();
    const result_type out = (static_cast<result_type>(buffer_[2 * cursor_ + 1]) << 32) |
                            buffer_[2 * cursor_];
    ++cursor_;
    return out;
  }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  void discard(std::uint64_t n) {
    for (std::uint64_t i = 0; i < n; ++i) (*this)();
  }

  std::uint32_t replica() const { return replica_; }
  std::uint32_t stream() const { return stream_; }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  void refill() {
    const Block counter{static_cast<std::uint32_t>(position_),
                        static_cast<std::uint32_t>(position_ >> 32), replica_, stream_};
    buffer_ = encrypt(counter, key_);
    ++position_;
    cursor_ = 0;
  }

  Key key_;
  std::uint32_t replica_;
  std::uint32_t stream_;
  std::uint64_t position_ = 0;
  Block buffer_{};
  int cursor_ = 2;
};

// Reserved stream tags for draws that are not tied to a field layer.
namespace streams {
inline constexpr std::uint32_t kAuxiliaryBase = 0x80000000u;
inline constexpr std::uint32_t kSpinePaths = kAuxiliaryBase + 1;
inline constexpr std::uint32_t kKahane = kAuxiliaryBase + 2;
inline constexpr std::uint32_t kDiscField = kAuxiliaryBase + 3;
inline constexpr std::uint32_t kBootstrap = kAuxiliaryBase + 4;
inline constexpr std::uint32_t kCovariancePairs = kAuxiliaryBase + 5;
}  // namespace streams

inline Philox4x32 seed_stream(std::uint64_t master_seed, std::uint32_t replica,
                              std::uint32_t layer) {
  return Philox4x32(master_seed, replica, layer);
}

// Standard normal sampler (ziggurat) bound to one stream.
class NormalStream {
 public:
  explicit NormalStream(Philox4x32 engine) : engine_(engine) {}

  double operator()() { return dist_(engine_); }
  Philox4x32& engine() { return engine_; }

 private:
  Philox4x32 engine_;
  boost::random::normal_distribution<double> dist_;
};

}  // namespace gmc
