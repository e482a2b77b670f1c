#pragma once
#include <cstdint>
#include <random>
#include <vector>

namespace harcl {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seeded random stream. The draw mappings are spelled out here instead of
// going through std distributions, so a seed produces the same stream on
// every standard library. Named sub-streams keep sampling, initialization,
// and dropout decoupled from each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 0x51ed2701)));
  }

  std::uint64_t next() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // n must be > 0; modulo bias is irrelevant for the index ranges used here
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

  // Fisher-Yates with explicit bounded draws (std::shuffle's use of the
  // generator is implementation-defined)
  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Sub-stream ids, fixed for the life of the file formats: a resolved config
// plus these constants is everything a rerun needs.
namespace streams {
constexpr std::uint64_t init = 0;      // weight initialization
constexpr std::uint64_t train = 1;     // dropout masks + epoch shuffles
constexpr std::uint64_t sampling = 2;  // pool draws
constexpr std::uint64_t embed = 3;     // embedding export draws
}  // namespace streams

}  // namespace harcl
