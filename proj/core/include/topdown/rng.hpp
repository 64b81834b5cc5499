#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace topdown {

// Single RNG type used everywhere so that a run seed pins every random
// decision (init, splits, shuffles, attack draws) within one build.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }

    double normal() {
        std::normal_distribution<double> d(0.0, 1.0);
        return d(engine_);
    }

    // Uniform integer in [0, n).
    int64_t index(int64_t n) {
        std::uniform_int_distribution<int64_t> d(0, n - 1);
        return d(engine_);
    }

    bool coin() { return index(2) == 1; }

    std::vector<int64_t> permutation(int64_t n) {
        std::vector<int64_t> p(n);
        std::iota(p.begin(), p.end(), 0);
        std::shuffle(p.begin(), p.end(), engine_);
        return p;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace topdown
