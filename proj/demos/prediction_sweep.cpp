// Sweeps the prediction error and prints how the collected value degrades
// away from an accurate threshold, with the Phase-B fallback as the floor.

#include <iostream>

#include "procure/harness.hpp"
#include "procure/prediction.hpp"

int main() {
    using namespace procure;

    const std::int64_t n = 1 << 16, k = 1 << 14;
    auto inst = uniform_additive_market(n, k, 1.0);
    const double opt = opt_closed_form(inst).value;
    auto profile = ConstantsProfile::desk();

    std::cout << "prediction = OPT * 2^e, " << 100 << " trials per arm\n";
    for (double e : {-16.0, -8.0, -3.0, 0.0, 3.0, 8.0, 16.0}) {
        auto cfg = PredictionConfig::for_market(n, opt * std::exp2(e), profile);
        double total = 0, phase_b = 0;
        for (int t = 0; t < 100; ++t) {
            Rng rng = Rng::for_trial(5, static_cast<std::uint64_t>(t));
            auto r = prediction_mechanism(inst, cfg, profile, rng);
            total += r.value;
            phase_b += r.phase_b_value;
        }
        std::cout << "e = " << e << ": mean value " << total / 100 << " (phase B "
                  << phase_b / 100 << ")\n";
    }
    return 0;
}
