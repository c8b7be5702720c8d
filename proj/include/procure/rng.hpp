#pragma once

// Deterministic randomness for simulations. Every trial owns one Rng derived
// from (master seed, trial index), so runs reproduce bit-identically and
// trials can execute on any number of threads. Distributions are implemented
// here instead of <random>'s, whose algorithms are implementation-defined.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace procure {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        eng_.seed(splitmix64(s));
    }

    // Independent per-trial stream: decorrelates nearby trial indices.
    static Rng for_trial(std::uint64_t master_seed, std::uint64_t trial) {
        std::uint64_t s = master_seed;
        std::uint64_t a = splitmix64(s);
        std::uint64_t t = a ^ (trial * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull);
        return Rng(splitmix64(t));
    }

    std::uint64_t next_u64() { return eng_(); }

    // Uniform double in [0, 1), 53 random bits.
    double next_unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform double in (0, 1]; safe as a log() argument.
    double next_unit_pos() { return 1.0 - next_unit(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do { x = eng_(); } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return next_unit() < p; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Binomial(n, p). Inversion via geometric waiting times when n*p is
    // small, BTRS transformed rejection (Hormann 1993) otherwise; both exact.
    std::int64_t binomial(std::int64_t n, double p) {
        if (n <= 0 || p <= 0.0) return 0;
        if (p >= 1.0) return n;
        if (p > 0.5) return n - binomial(n, 1.0 - p);
        const double np = static_cast<double>(n) * p;
        if (np < 30.0) return binomial_inversion(n, p);
        return binomial_btrs(n, p);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;

    std::int64_t binomial_inversion(std::int64_t n, double p) {
        // Skip between successes with Geometric(p) gaps.
        const double log_q = std::log1p(-p);
        std::int64_t count = 0;
        std::int64_t pos = -1;
        while (true) {
            double u = next_unit_pos();
            pos += 1 + static_cast<std::int64_t>(std::floor(std::log(u) / log_q));
            if (pos >= n) break;
            ++count;
        }
        return count;
    }

    std::int64_t binomial_btrs(std::int64_t n, double p) {
        const double nd = static_cast<double>(n);
        const double q = 1.0 - p;
        const double np = nd * p;
        const double spq = std::sqrt(np * q);
        const double b = 1.15 + 2.53 * spq;
        const double a = -0.0873 + 0.0248 * b + 0.01 * p;
        const double c = np + 0.5;
        const double alpha = (2.83 + 5.1 / b) * spq;
        const double vr = 0.92 - 4.2 / b;
        const double urvr = 0.86 * vr;
        const double lpq = std::log(p / q);
        const double m = std::floor((nd + 1.0) * p);
        const double h = std::lgamma(m + 1.0) + std::lgamma(nd - m + 1.0);
        while (true) {
            double v = next_unit();
            double u;
            if (v <= urvr) {
                u = v / vr - 0.43;
                double k = std::floor((2.0 * a / (0.5 - std::abs(u)) + b) * u + c);
                return static_cast<std::int64_t>(k);
            }
            if (v >= vr) {
                u = next_unit() - 0.5;
            } else {
                u = v / vr - 0.93;
                u = (u < 0 ? -0.5 : 0.5) - u;
                v = vr * next_unit();
            }
            const double us = 0.5 - std::abs(u);
            const double kd = std::floor((2.0 * a / us + b) * u + c);
            if (kd < 0.0 || kd > nd) continue;
            v = v * alpha / (a / (us * us) + b);
            if (std::log(v) <= h - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0) +
                                   (kd - m) * lpq) {
                return static_cast<std::int64_t>(kd);
            }
        }
    }
};

}  // namespace procure
