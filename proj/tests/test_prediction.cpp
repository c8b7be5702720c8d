#include <catch2/catch_amalgamated.hpp>

#include "procure/harness.hpp"
#include "procure/prediction.hpp"

using namespace procure;

namespace {
Instance desk_market() { return uniform_additive_market(1 << 14, 1 << 12, 1.0); }
}  // namespace

TEST_CASE("walk steps are +-1 and hits double the threshold") {
    auto inst = desk_market();
    auto profile = ConstantsProfile::desk();
    auto cfg = PredictionConfig::for_market(inst.n(), 512.0, profile);
    Rng rng(1);
    auto out = prediction_mechanism(inst, cfg, profile, rng);
    REQUIRE_FALSE(out.walk.steps.empty());
    for (std::size_t i = 0; i < out.walk.steps.size(); ++i) {
        const auto& s = out.walk.steps[i];
        if (i + 1 < out.walk.steps.size()) {
            const auto& nxt = out.walk.steps[i + 1];
            REQUIRE(std::llabs(nxt.state - s.state) == 1);
            REQUIRE(nxt.state - s.state == (s.hit ? -1 : 1));
            REQUIRE(nxt.threshold == (s.hit ? s.threshold * 2 : s.threshold / 2));
        }
    }
}

TEST_CASE("round boundaries are pre-drawn: costs cannot move them") {
    // Same seed, two very different cost vectors: identical round lengths.
    const std::int64_t n = 4096;
    std::vector<double> cheap(n, 1e-4), pricey(n, 0.9);
    Instance a(ValuationOracle::additive(std::vector<double>(n, 1.0)), cheap, 1.0);
    Instance b(ValuationOracle::additive(std::vector<double>(n, 1.0)), pricey, 1.0);
    auto profile = ConstantsProfile::desk();
    auto cfg = PredictionConfig::for_market(n, 100.0, profile);
    Rng ra(77), rb(77);
    auto oa = prediction_mechanism(a, cfg, profile, ra);
    auto ob = prediction_mechanism(b, cfg, profile, rb);
    REQUIRE(oa.round_lengths == ob.round_lengths);
    REQUIRE(oa.round_lengths.size() == static_cast<std::size_t>(2 * cfg.rounds_per_phase));
}

TEST_CASE("absurdly high prediction: monotone halving through phase A") {
    // Costs above budget: every offer is rejected, every round fails.
    const std::int64_t n = 4096;
    Instance inst(ValuationOracle::additive(std::vector<double>(n, 1.0)),
                  std::vector<double>(n, 5.0), 1.0);
    auto profile = ConstantsProfile::desk();
    PredictionConfig cfg;
    cfg.predicted_threshold = std::exp2(40);
    cfg.rounds_per_phase = 12;
    cfg.length_param = 1.0 / 100.0;
    Rng rng(4);
    auto out = prediction_mechanism(inst, cfg, profile, rng);
    REQUIRE(out.final_threshold_phase_a ==
            cfg.predicted_threshold / std::exp2(cfg.rounds_per_phase));
    for (std::size_t i = 0; i < out.walk.steps.size(); ++i)
        REQUIRE(out.walk.steps[i].state == static_cast<std::int64_t>(i));
    REQUIRE(out.phase_a_value == 0.0);
}

TEST_CASE("tiny prediction: offers are capped, the round is flagged") {
    auto inst = desk_market();
    auto profile = ConstantsProfile::desk();
    PredictionConfig cfg;
    cfg.predicted_threshold = 1e-9;  // prices explode past the budget
    cfg.rounds_per_phase = 6;
    cfg.length_param = 1.0 / 64.0;
    Rng rng(5);
    auto out = prediction_mechanism(inst, cfg, profile, rng);
    REQUIRE(out.price_capped > 0);
    bool flagged = false;
    for (const auto& s : out.walk.steps)
        if (s.drawn > 0) {
            REQUIRE(s.price_capped);
            REQUIRE(s.hit == 0);
            flagged = true;
        }
    REQUIRE(flagged);
    REQUIRE(out.phase_a_value == 0.0);
    // Phase B still collects through the fallback search.
    REQUIRE(out.phase_b_value > 0.0);
}

TEST_CASE("walk statistics handles the trivial targets") {
    SECTION("i* = 0 is reached immediately") {
        Rng rng(6);
        std::vector<WalkTrace> traces;
        for (int t = 0; t < 50; ++t) traces.push_back(simulate_drifted_chain(40, 5, 0.9, rng));
        auto stats = walk_statistics(traces, 0);
        REQUIRE(stats.reach_within_bound_freq == 1.0);
    }
    SECTION("one remaining round needs zero returns") {
        WalkTrace t;
        WalkStep s;
        s.hit = 1;  // one step, lands on i* = -1 with r = 0 rounds left
        t.steps.push_back(s);
        std::vector<WalkTrace> traces{t};
        auto stats = walk_statistics(traces, -1);
        REQUIRE(stats.returns_bound_freq == 1.0);
    }
}

TEST_CASE("idealized drifted chain meets the reach and return bounds") {
    Rng rng(7);
    for (std::int64_t i_star : {8ll, -8ll}) {
        std::vector<WalkTrace> traces;
        for (int t = 0; t < 400; ++t)
            traces.push_back(simulate_drifted_chain(120, i_star, 0.9, rng));
        auto stats = walk_statistics(traces, i_star);
        REQUIRE(stats.reach_within_bound_freq >= 0.5);
        REQUIRE(stats.returns_bound_freq >= 0.5);
    }
}

TEST_CASE("chains coupled on shared randomness: stronger drift reaches no later") {
    // Replay the same uniforms through two success probabilities. The
    // stronger chain's success set contains the weaker one's, so its
    // reach time can only be smaller.
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const std::int64_t i_star = -6;
        const std::int64_t rounds = 100;
        auto reach_time = [&](double p) {
            Rng rng(seed);
            std::int64_t state = 0;
            for (std::int64_t j = 0; j < rounds; ++j) {
                const double u = rng.next_unit();
                const bool hit = state >= i_star && u < p;
                state += hit ? -1 : 1;
                if (state == i_star) return j;
            }
            return rounds;
        };
        REQUIRE(reach_time(0.95) <= reach_time(0.9));
    }
}

TEST_CASE("accurate predictions beat wild ones on the desk family") {
    auto inst = uniform_additive_market(1 << 15, 1 << 13, 1.0);
    auto profile = ConstantsProfile::desk();
    const double opt = 8192.0;
    auto run_arm = [&](double t_hat, std::uint64_t salt) {
        std::vector<double> values;
        for (int t = 0; t < 60; ++t) {
            Rng rng = Rng::for_trial(salt, static_cast<std::uint64_t>(t));
            auto cfg = PredictionConfig::for_market(inst.n(), t_hat, profile);
            values.push_back(prediction_mechanism(inst, cfg, profile, rng).value);
        }
        return values;
    };
    auto accurate = run_arm(opt / 10.0, 1);
    auto off_high = run_arm(std::exp2(20) * opt, 1);
    auto off_low = run_arm(opt / std::exp2(20), 1);
    REQUIRE(wilcoxon_one_sided_p(accurate, off_high) < 0.01);
    REQUIRE(wilcoxon_one_sided_p(accurate, off_low) < 0.01);
}
