#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace spikecal {

/// Named random streams derived from one run seed.
enum class Stream : std::uint64_t {
    TrainData = 1,
    TestData = 2,
    ValidData = 3,
    WeightInit = 4,
    Shuffle = 5,
    Experiment = 6,
};

/// splitmix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Sub-seed for `stream` under run seed `seed`: mix_seed(seed ^ mix_seed(stream)).
std::uint64_t derive_seed(std::uint64_t seed, Stream stream);

/// Platform-independent generator. The standard distributions are
/// implementation-defined, so uniform/normal/shuffle are computed here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Standard normal via Box-Muller.
    double normal();

    template <class T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace spikecal
