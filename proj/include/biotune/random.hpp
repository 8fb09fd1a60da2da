#ifndef BIOTUNE_RANDOM_HPP
#define BIOTUNE_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace biotune {

    /// splitmix64 finalizer, used to derive independent seeds.
    constexpr std::uint64_t mix_seed(std::uint64_t x)
    {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0)
    {
        return mix_seed(mix_seed(mix_seed(master) ^ a) ^ (b * 0xD1B54A32D192ED03ULL + 1));
    }

    /// Random stream with a platform-independent mapping from engine output to
    /// variates (std distributions are implementation defined).
    class Rng {
    public:
        using engine_t = std::mt19937_64;

        explicit Rng(std::uint64_t seed = 0) : _engine(seed) {}

        /// Uniform on [0,1).
        double uniform() { return static_cast<double>(_engine() >> 11) * 0x1.0p-53; }

        double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

        /// Uniform on [-1,1).
        double symmetric() { return 2.0 * uniform() - 1.0; }

        /// Uniform integer in [0, n).
        std::size_t index(std::size_t n)
        {
            const std::uint64_t bound = n;
            const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
            std::uint64_t r = _engine();
            while (r >= limit)
                r = _engine();
            return static_cast<std::size_t>(r % bound);
        }

        /// Standard normal (Box-Muller, one variate per call).
        double normal()
        {
            double u1 = uniform();
            while (u1 <= 0.0)
                u1 = uniform();
            const double u2 = uniform();
            return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        }

        std::uint64_t next_u64() { return _engine(); }

        engine_t& engine() { return _engine; }

    private:
        engine_t _engine;
    };

    /// Fisher-Yates shuffle driven by Rng::index.
    template <typename Container>
    void shuffle(Container& c, Rng& rng)
    {
        for (std::size_t i = c.size(); i > 1; --i) {
            const std::size_t j = rng.index(i);
            using std::swap;
            swap(c[i - 1], c[j]);
        }
    }

} // namespace biotune

#endif
