#ifndef REVRANK_RNG_HPP_
#define REVRANK_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace revrank {

namespace detail {

/*! \brief Finalizer of the splitmix64 generator; also used as a bit mixer. */
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a + 0x9e3779b97f4a7c15ULL * (b + 0x632be59bd9b4e019ULL));
}

/*! \brief 53-bit mantissa to [0, 1). */
inline double to_unit(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace detail

/*!
 * \brief Small deterministic PRNG (splitmix64 stream).
 *
 * Sub-streams are derived by hashing tags into the state instead of by
 * consuming draws, so adding a consumer to one part of a pipeline never
 * shifts the random sequence seen by another part.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(detail::mix64(seed + 0x9e3779b97f4a7c15ULL)) {}

  /*! \brief Child stream keyed by up to two tags; does not advance this stream. */
  Rng derive(std::uint64_t a, std::uint64_t b = 0) const {
    Rng child(0);
    child.state_ = detail::hash_combine(detail::hash_combine(state_, a), b);
    return child;
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return detail::mix64(state_);
  }

  /*! \brief Uniform on [0, 1). */
  double uniform01() { return detail::to_unit(next_u64()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /*! \brief Standard normal via Box-Muller; consumes two draws. */
  double normal() {
    // (0, 1] keeps the log argument away from zero.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /*! \brief Unbiased integer on [0, n); rejection sampling. */
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  template <typename T>
  void shuffle(T* data, std::size_t n) {
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(bounded(i));
      T tmp = data[i - 1];
      data[i - 1] = data[j];
      data[j] = tmp;
    }
  }

 private:
  std::uint64_t state_;
};

/*!
 * \brief Stateless uniform on [0, 1) keyed by (seed, a, b).
 *
 * Replay uses this for click draws so that a candidate keeps the same luck
 * regardless of which scorer ranked it; comparisons between scorers then
 * share their randomness.
 */
inline double hash_uniform01(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = detail::hash_combine(seed, 0x5eedc11c5u);
  s = detail::hash_combine(s, a);
  s = detail::hash_combine(s, b);
  return detail::to_unit(detail::mix64(s));
}

}  // namespace revrank

#endif  // REVRANK_RNG_HPP_
