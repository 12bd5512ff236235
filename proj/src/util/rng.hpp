#pragma once

#include <cstdint>
#include <vector>

namespace coseq::util {

// splitmix64, used for seed derivation so that independent streams can be
// spawned from (master, a, b, c) tuples without touching the parent stream.
uint64_t splitmix64(uint64_t x);
uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0);

// Deterministic generator with a fully specified output sequence.
// std::mt19937_64 is pinned by the standard, but the distributions are not,
// so all sampling here is implemented from raw 64-bit draws. Same seed,
// same platform-independent sequence.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // uniform in [0, 1)
    float uniform();
    double uniform_d();

    // uniform in [lo, hi)
    float uniform(float lo, float hi);

    // uniform integer in [0, n)
    int uniform_int(int n);

    // standard normal via Box-Muller (caches the second deviate)
    float normal();
    std::vector<float> normal_vec(int n);

    // Poisson via inversion; suitable for small lambda
    int poisson(double lambda);

    bool bernoulli(double p);

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[i], v[static_cast<size_t>(j)]);
        }
    }

private:
    uint64_t state_[2];
    bool have_spare_ = false;
    float spare_ = 0.0f;
};

}  // namespace coseq::util
