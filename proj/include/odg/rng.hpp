#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace odg {

// Deterministic random stream. std:: distributions are implementation
// defined, so sampling is done by hand to keep outputs bit-stable across
// standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    size_t index(size_t n) { return static_cast<size_t>(uniform() * static_cast<double>(n)) % n; }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::vector<double> normal_vec(size_t n, double scale = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = scale * normal();
        return v;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    // Independent child stream; used to decorrelate per-domain / per-image
    // substreams from one top-level seed.
    Rng fork(uint64_t salt) const {
        return Rng(seed_mix(base_seed_snapshot(), salt));
    }

    static uint64_t seed_mix(uint64_t a, uint64_t b) {
        uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 1);
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return x;
    }

private:
    uint64_t base_seed_snapshot() const {
        std::mt19937_64 copy = gen_;
        return copy();
    }

    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace odg
