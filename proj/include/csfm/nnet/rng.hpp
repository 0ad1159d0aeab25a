#ifndef CSFM_NNET_RNG_HPP_
#define CSFM_NNET_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>

namespace csfm {

namespace detail {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t cGolden = 0x9e3779b97f4a7c15ULL;

} // namespace detail

/*
 * Counter-based splittable generator. The n-th output of a stream is a
 * pure function of (seed, stream_id, n), so results do not depend on the
 * platform's standard library. Gaussian draws use Box-Muller on pairs of
 * uniforms; the second value of each pair is cached.
 */
class SplitRng {
public:
  explicit SplitRng(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id),
        key_(detail::mix64(seed ^ detail::mix64(stream_id + detail::cGolden))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  // Child stream identified by `label`. The child starts at counter zero and
  // owns its own state; drawing from it never advances the parent.
  SplitRng split(std::uint64_t label) const {
    const std::uint64_t child =
        detail::mix64(stream_id_ * detail::cGolden ^
                      detail::mix64(label ^ 0x5851f42d4c957f2dULL)) +
        label;
    return SplitRng(seed_, child);
  }

  std::uint64_t next_u64() {
    const std::uint64_t c = counter_++;
    return detail::mix64(detail::mix64(key_ + c * detail::cGolden) ^ key_);
  }

  // Uniform on the open interval (0, 1).
  double uniform() {
    const std::uint64_t bits = next_u64() >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) %
           n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
  }

private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline SplitRng rng_split(const SplitRng &rng, std::uint64_t label) {
  return rng.split(label);
}

} // namespace csfm

#endif // CSFM_NNET_RNG_HPP_
