#include "util/rng.hpp"

#include <cmath>

namespace coseq::util {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b, uint64_t c) {
    uint64_t s = splitmix64(master ^ 0x5851F42D4C957F2Dull);
    s = splitmix64(s ^ a);
    s = splitmix64(s ^ b);
    s = splitmix64(s ^ c);
    return s;
}

Rng::Rng(uint64_t seed) {
    // xoroshiro128++ state, seeded through splitmix64
    state_[0] = splitmix64(seed);
    state_[1] = splitmix64(state_[0] ^ 0x9E3779B97F4A7C15ull);
    if (state_[0] == 0 && state_[1] == 0) state_[0] = 1;
}

static inline uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

uint64_t Rng::next_u64() {
    uint64_t s0 = state_[0];
    uint64_t s1 = state_[1];
    uint64_t result = rotl(s0 + s1, 17) + s0;
    s1 ^= s0;
    state_[0] = rotl(s0, 49) ^ s1 ^ (s1 << 21);
    state_[1] = rotl(s1, 28);
    return result;
}

float Rng::uniform() {
    // 24 high bits -> [0,1) exactly representable in float
    return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

double Rng::uniform_d() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

float Rng::uniform(float lo, float hi) {
    return lo + (hi - lo) * uniform();
}

int Rng::uniform_int(int n) {
    // n is small everywhere in this codebase; modulo bias over 2^64 is
    // far below any observable effect, but reject the tail anyway.
    uint64_t limit = ~0ull - (~0ull % static_cast<uint64_t>(n));
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return static_cast<int>(v % static_cast<uint64_t>(n));
}

float Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    float u1 = uniform();
    float u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    float r = std::sqrt(-2.0f * std::log(u1));
    float a = 6.28318530717958647692f * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

std::vector<float> Rng::normal_vec(int n) {
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = normal();
    return v;
}

int Rng::poisson(double lambda) {
    double l = std::exp(-lambda);
    double p = 1.0;
    int k = 0;
    do {
        ++k;
        p *= uniform_d();
    } while (p > l);
    return k - 1;
}

bool Rng::bernoulli(double p) {
    return uniform_d() < p;
}

}  // namespace coseq::util
