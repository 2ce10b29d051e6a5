#pragma once

#include <cstdint>
#include <random>

namespace tdmh {

// Deterministic random source. Every stochastic decision in the protocol
// stack and the simulator draws from one of these, so a run is fully
// reproducible from its seed.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    // Uniform integer in [0, n). n must be > 0.
    uint32_t uniformInt(uint32_t n) {
        return static_cast<uint32_t>(engine_() % n);
    }

    // Uniform double in [0, 1).
    double uniform01() {
        return (engine_() >> 11) * 0x1.0p-53;
    }

    bool bernoulli(double p) {
        if (p >= 1.0) return true;
        if (p <= 0.0) return false;
        return uniform01() < p;
    }

    uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

} // namespace tdmh
