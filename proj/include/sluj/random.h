#ifndef SLUJ_RANDOM_H_
#define SLUJ_RANDOM_H_

#include <cstdint>
#include <random>
#include <vector>

namespace sluj {

// Seeded generator whose derived draws do not depend on the standard
// library's distribution implementations, so a seed means the same stream on
// every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n).
  size_t index(size_t n) { return static_cast<size_t>(next() % n); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sluj

#endif  // SLUJ_RANDOM_H_
