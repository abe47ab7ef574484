#ifndef TP_RNG_HPP
#define TP_RNG_HPP

#include <cstdint>

namespace tp {

/// Counter-based random stream: output i is a mix of (key, i), so streams can
/// be split into statistically independent children without sharing state.
/// The mix is the splitmix64 finalizer, applied twice with distinct keys.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ kGolden)), counter_(0) {}

  std::uint64_t next_u64() {
    std::uint64_t v = mix(key_ + kGolden * ++counter_);
    return mix(v ^ key_);
  }

  /// Uniform draw in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform draw in (0, 1), safe for log transforms.
  double uniform_pos() {
    double u;
    do { u = uniform(); } while (u <= 0.0);
    return u;
  }

  /// Child stream indexed by `lane`; independent of the parent's future draws.
  Rng split(std::uint64_t lane) const {
    Rng child(0);
    child.key_ = mix(mix(key_ ^ (lane + 1) * kGolden) + kSplit);
    child.counter_ = 0;
    return child;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  static constexpr std::uint64_t kSplit = 0xd1b54a32d192ed03ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace tp

#endif
