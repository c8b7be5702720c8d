#include <catch2/catch_amalgamated.hpp>

#include "procure/mechanisms.hpp"
#include "procure/offline_opt.hpp"

using namespace procure;

namespace {

const double kE = 2.718281828459045;

TrialContext make_ctx(const Instance& inst, const ConstantsProfile& profile, Rng& rng,
                      TrialHooks hooks = {}) {
    TrialContext ctx(inst, profile, rng, ArrivalStream::uniform(inst.n(), rng), hooks);
    ctx.set_vmax_est(inst.oracle().vmax());
    return ctx;
}

}  // namespace

TEST_CASE("offer boundary semantics") {
    auto profile = ConstantsProfile::defaults();
    Rng rng(1);
    SECTION("price 0 to a cost-0 agent is accepted with zero payment") {
        Instance inst(ValuationOracle::additive({1.0}), {0.0}, 1.0);
        auto ctx = make_ctx(inst, profile, rng);
        REQUIRE(ctx.offer(0, 0.0, 0.0));
        REQUIRE(ctx.payments_total() == 0.0);
        REQUIRE(ctx.value() == 1.0);
    }
    SECTION("price below cost is rejected and pays nothing") {
        Instance inst(ValuationOracle::additive({1.0}), {0.2}, 1.0);
        std::vector<OfferEvent> ledger;
        TrialHooks hooks;
        hooks.ledger = &ledger;
        auto ctx = make_ctx(inst, profile, rng, hooks);
        REQUIRE_FALSE(ctx.offer(0, 0.1, 1.0));
        REQUIRE(ctx.payments_total() == 0.0);
        REQUIRE(ledger.back().paid == 0.0);
        REQUIRE(ledger.back().price == 0.1);
    }
    SECTION("an offer above the remaining budget is an internal bug") {
        Instance inst(ValuationOracle::additive({1.0}), {0.2}, 0.5);
        auto ctx = make_ctx(inst, profile, rng);
        REQUIRE_THROWS_AS(ctx.offer(0, 0.6, 1.0), std::logic_error);
    }
}

TEST_CASE("test_threshold on a hand-built round") {
    // 10 unit-value agents of cost B/100 in one round, a = 0.1, t_hat = 10,
    // B = 1: the price 0.1 clears every cost, the first acceptance already
    // crosses the success bar C*a*t_hat ~ 0.0525, and offers then stop.
    auto profile = ConstantsProfile::defaults();
    Instance inst(ValuationOracle::additive(std::vector<double>(12, 1.0)),
                  std::vector<double>(12, 0.01), 1.0);
    Rng rng(2);
    std::vector<RoundLogEntry> log;
    TrialHooks hooks;
    hooks.round_log = &log;
    TrialContext ctx(inst, profile, rng, ArrivalStream::identity(12), hooks);
    ctx.set_vmax_est(1.0);
    PredrawnRounds rounds({10});
    auto out = test_threshold_with_source(ctx, 1.0, 1, 0.1, 10.0, rounds);
    REQUIRE(out.hit);
    REQUIRE(out.successes == 1);
    REQUIRE(log.size() == 1);
    REQUIRE(log[0].drawn == 10);
    REQUIRE(log[0].val_test >= profile.C * 0.1 * 10.0);
    REQUIRE(log[0].accepted == 1);  // offers cease once the bar is crossed
    REQUIRE(ctx.payments_total() == Catch::Approx(0.1));
}

TEST_CASE("an empty round fails the value test") {
    auto profile = ConstantsProfile::defaults();
    Instance inst(ValuationOracle::additive(std::vector<double>(5, 1.0)),
                  std::vector<double>(5, 0.01), 1.0);
    Rng rng(3);
    TrialContext ctx(inst, profile, rng, ArrivalStream::identity(5));
    ctx.set_vmax_est(1.0);
    PredrawnRounds rounds({0});
    auto out = test_threshold_with_source(ctx, 1.0, 1, 0.1, 10.0, rounds);
    REQUIRE_FALSE(out.hit);
    REQUIRE(out.successes == 0);
}

TEST_CASE("test_threshold aborts") {
    auto profile = ConstantsProfile::defaults();
    Rng rng(4);
    SECTION("round consuming the tail of the stream") {
        Instance inst(ValuationOracle::additive(std::vector<double>(4, 1.0)),
                      std::vector<double>(4, 0.01), 1.0);
        TrialContext ctx(inst, profile, rng, ArrivalStream::identity(4));
        ctx.set_vmax_est(1.0);
        PredrawnRounds rounds({4});
        test_threshold_with_source(ctx, 1.0, 1, 0.1, 10.0, rounds);
        REQUIRE(ctx.abort() == AbortReason::stream_exhausted);
    }
    SECTION("agent valued above the learned vmax") {
        Instance inst(ValuationOracle::additive({1.0, 5.0, 1.0}),
                      std::vector<double>(3, 0.01), 1.0);
        TrialContext ctx(inst, profile, rng, ArrivalStream::identity(3));
        ctx.set_vmax_est(1.0);  // agent 1 exceeds this
        PredrawnRounds rounds({2});
        test_threshold_with_source(ctx, 1.0, 1, 0.1, 10.0, rounds);
        REQUIRE(ctx.abort() == AbortReason::value_above_vmax);
    }
    SECTION("budget exhausted by a payment") {
        // price = B/t_hat = 0.5 per agent and one acceptance per round: the
        // second round's payment zeroes B_rem exactly.
        Instance inst(ValuationOracle::additive(std::vector<double>(6, 1.0)),
                      std::vector<double>(6, 0.01), 1.0);
        TrialContext ctx(inst, profile, rng, ArrivalStream::identity(6));
        ctx.set_vmax_est(1.0);
        PredrawnRounds rounds({1, 1});
        test_threshold_with_source(ctx, 1.0, 2, 0.9, 2.0, rounds);
        REQUIRE(ctx.abort() == AbortReason::budget_exhausted);
        REQUIRE(ctx.payments_total() == 1.0);
    }
}

TEST_CASE("power tower endpoints") {
    auto profile = ConstantsProfile::defaults();
    SECTION("default base truncates immediately past t_2") {
        auto e = power_tower_build(1.0, std::int64_t{1} << 30, profile);
        REQUIRE(e == std::vector<double>{1.0, 1e7, 1073741824.0});
    }
    SECTION("scaled base climbs the tower") {
        auto p = profile;
        p.tower_base = 32.0;
        auto e = power_tower_build(1.0, std::int64_t{1} << 60, p);
        REQUIRE(e == std::vector<double>{1.0, 32.0, std::exp2(37), std::exp2(60)});
    }
    SECTION("small n degenerates to two points") {
        auto e = power_tower_build(2.0, 100, profile);
        REQUIRE(e == std::vector<double>{2.0, 200.0});
    }
}

TEST_CASE("degenerate tower search tests nothing and returns the base pair") {
    auto profile = ConstantsProfile::desk();
    Instance inst = uniform_additive_market(512, 128, 1.0);  // n*vmax < tower base
    Rng rng(5);
    std::vector<RoundLogEntry> log;
    TrialHooks hooks;
    hooks.round_log = &log;
    auto ctx = make_ctx(inst, profile, rng, hooks);
    auto endpoints = power_tower_build(1.0, inst.n(), profile);
    REQUIRE(endpoints.size() == 2);
    auto res = power_tower_search(ctx, 1.0, endpoints);
    REQUIRE(log.empty());  // no phase ran
    REQUIRE(res.index == 0);
    REQUIRE(res.t_min == endpoints[0]);
    REQUIRE(res.t_max == endpoints[1]);
}

TEST_CASE("tower search returns a union containing OPT/8 when its phase succeeds") {
    auto profile = ConstantsProfile::desk();
    const std::int64_t n = 1 << 15, k = 1 << 13;
    Instance inst = uniform_additive_market(n, k, 1.0);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        auto ctx = make_ctx(inst, profile, rng);
        ctx.set_vmax_est(1.0);
        auto endpoints = power_tower_build(1.0, n, profile);
        auto res = power_tower_search(ctx, 1.0, endpoints);
        REQUIRE_FALSE(ctx.aborted());
        const double target = static_cast<double>(k) / 8.0;
        const bool in_union = (res.lo_min <= target && target <= res.lo_max) ||
                              (res.hi_min <= target && target <= res.hi_max);
        REQUIRE(in_union);
    }
}

TEST_CASE("binary search phase parameters follow the formulas") {
    auto profile = ConstantsProfile::defaults();
    // Ratio 2^1000: loglog = log2(1000) ~ 9.97, m = ceil(8 * 9.97) = 80,
    // a = 1 / (6 * 10 * 80).
    auto p = bs_phase_params(profile, 1.0, std::exp2(1000));
    REQUIRE(p.loglog == 10);
    REQUIRE(p.m == 80);
    REQUIRE(p.a == Catch::Approx(1.0 / 4800.0));
    // Single-exponent interval: one round per phase, a = 1/6.
    auto q = bs_phase_params(profile, 8.0, 16.0);
    REQUIRE(q.m == 1);
    REQUIRE(q.loglog == 1);
    REQUIRE(q.a == Catch::Approx(1.0 / 6.0));
}

TEST_CASE("binary search over a single exponent returns one of the two endpoints") {
    auto profile = ConstantsProfile::desk();
    // One phase decides between t_min and 2*t_min: the tested threshold
    // 2*t_min = 4096 is accepted iff OPT reaches it.
    Instance rich = uniform_additive_market(1 << 14, 1 << 12, 1.0);   // OPT = 4096
    Instance poor = uniform_additive_market(1 << 14, 1 << 11, 1.0);   // OPT = 2048
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        auto ctx = make_ctx(rich, profile, rng);
        auto res = binary_search(ctx, 1.0, 2048.0, 4096.0);
        REQUIRE(res.phases == 1);
        REQUIRE(res.t_init == 4096.0);
    }
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        auto ctx = make_ctx(poor, profile, rng);
        auto res = binary_search(ctx, 1.0, 2048.0, 4096.0);
        REQUIRE(res.phases == 1);
        REQUIRE(res.t_init == 2048.0);
    }
}

TEST_CASE("binary search climbs to the top exponent when every phase hits") {
    auto profile = ConstantsProfile::desk();
    // All thresholds in [2^10, 2^14] lie beneath OPT = 2^15: every offer is
    // accepted and every phase hits.
    Instance inst = uniform_additive_market(1 << 17, 1 << 15, 1.0);
    Rng rng(6);
    auto ctx = make_ctx(inst, profile, rng);
    auto res = binary_search(ctx, 1.0, 1024.0, 16384.0);
    REQUIRE(res.t_init == 16384.0);
}

TEST_CASE("exploitation halving and doubling chains") {
    auto profile = ConstantsProfile::desk();
    SECTION("all phases fail: threshold halves every phase") {
        // Costs above the budget reject every offer.
        Instance inst(ValuationOracle::additive(std::vector<double>(20000, 1.0)),
                      std::vector<double>(20000, 2.0), 1.0);
        Rng rng(7);
        auto ctx = make_ctx(inst, profile, rng);
        auto res = exploitation(ctx, 1.0, std::exp2(20), 1024.0, std::exp2(20));
        REQUIRE(res.phases == 4);  // ceil(loglog 2^10) = 4
        REQUIRE(res.final_threshold == std::exp2(16));
        REQUIRE(ctx.value() == 0.0);
    }
    SECTION("all phases succeed: threshold doubles every phase") {
        Instance inst(ValuationOracle::additive(std::vector<double>(20000, 1.0)),
                      std::vector<double>(20000, 0.0), 1.0);
        Rng rng(8);
        auto ctx = make_ctx(inst, profile, rng);
        auto res = exploitation(ctx, 1.0, 1024.0, 1024.0, std::exp2(20));
        REQUIRE(res.phases == 4);
        REQUIRE(res.final_threshold == std::exp2(14));
        REQUIRE(ctx.value() > 0.0);
    }
    SECTION("alternating pattern returns to the start after an even count") {
        // Thresholds at most OPT are accepted, anything above is rejected.
        Instance inst = uniform_additive_market(20000, 1 << 12, 1.0);
        Rng rng(9);
        auto ctx = make_ctx(inst, profile, rng);
        auto res = exploitation(ctx, 1.0, std::exp2(12), 1024.0, std::exp2(20));
        REQUIRE(res.phases == 4);
        REQUIRE(res.threshold_history ==
                std::vector<double>{std::exp2(12), std::exp2(13), std::exp2(12),
                                    std::exp2(13), std::exp2(12)});
        REQUIRE(res.final_threshold == std::exp2(12));
    }
}

TEST_CASE("a phase with threshold at least 8*OPT never hits") {
    // Tower-consistent parameters: t_{j-1} = 16, OPT = 8 * t_{j-1} = 128,
    // t_j = 2^16 * 16 = 2^20, gamma_j = 30, a_j = 81 e / 2^20. Linear prices
    // at t_j sit far below the agent costs, so every round collects nothing.
    auto profile = ConstantsProfile::defaults();
    Instance inst = uniform_additive_market(100000, 128, 1.0);
    const double t_j = std::exp2(20);
    const double a_j = profile.goodness_coeff / t_j;
    const auto gamma_j = tower_phase_rounds(profile, t_j);
    REQUIRE(gamma_j == 30);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        auto ctx = make_ctx(inst, profile, rng);
        auto out = test_threshold(ctx, 1.0, gamma_j, a_j, t_j);
        REQUIRE_FALSE(out.hit);
        REQUIRE(ctx.value() == 0.0);
    }
}

TEST_CASE("collected value never exceeds OPT") {
    // Individual rationality makes every solution budget-feasible in costs.
    Rng meta(10);
    for (int rep = 0; rep < 20; ++rep) {
        const auto n = static_cast<AgentId>(8 + meta.below(8));
        std::vector<double> w, c;
        for (AgentId i = 0; i < n; ++i) {
            w.push_back(meta.uniform(0.1, 2.0));
            c.push_back(meta.uniform(0.0, 0.4));
        }
        Instance inst(ValuationOracle::additive(w), c, 1.0);
        const double opt = opt_exact(inst).value;
        Rng rng(100 + static_cast<std::uint64_t>(rep));
        auto out = posted_prices(inst, ConstantsProfile::desk(), rng);
        REQUIRE(out.value <= opt + 1e-9);
        REQUIRE(out.payments <= inst.budget() + 1e-12);
    }
}

TEST_CASE("lm mechanism with zero budget collects nothing and spends nothing") {
    Instance inst(ValuationOracle::additive(std::vector<double>(64, 1.0)),
                  std::vector<double>(64, 0.1), 0.0);
    Rng rng(11);
    auto out = lm_mechanism(inst, ConstantsProfile::desk(), rng);
    REQUIRE(out.value == 0.0);
    REQUIRE(out.payments == 0.0);
}

TEST_CASE("fixed-threshold pricing meets the min{(1-h), (h-1/k)} OPT bound") {
    // k = 100 unit agents, cost 6, budget 600: prices at h*OPT are exact.
    Instance inst = uniform_additive_market(120, 100, 600.0);
    const double opt = opt_closed_form(inst).value;
    REQUIRE(opt == 100.0);
    auto run = [&](double h) {
        Rng rng(12);
        return linear_pricing_fixed(inst, h * opt, rng);
    };
    REQUIRE(run(0.25) == 25.0);
    REQUIRE(run(0.5) == 50.0);
    REQUIRE(run(0.75) == 75.0);
    for (double h : {0.25, 0.5, 0.75}) {
        const double bound = std::min(1.0 - h, h - 1.0 / 100.0) * opt;
        REQUIRE(run(h) >= bound);
    }
    SECTION("overestimates may collect nothing") { REQUIRE(run(1.25) == 0.0); }
    SECTION("h = 1 makes the bound vacuous") {
        const double v = run(1.0);  // price equals cost exactly
        REQUIRE(v >= 0.0);
        REQUIRE(v == 100.0);
    }
}

TEST_CASE("medium market thresholds") {
    auto profile = ConstantsProfile::defaults();
    auto ts = medium_thresholds(1.0, profile);
    REQUIRE(ts.size() == 18);
    // Exactly one exponent lands in the dyadic window [OPT/16, OPT/8) when
    // OPT = 2^12 * vmax.
    const double opt = std::exp2(12);
    int in_window = 0;
    int which = 0;
    for (int e = profile.medium_exp_lo; e <= profile.medium_exp_hi; ++e)
        if (std::exp2(e) >= opt / 16 && std::exp2(e) < opt / 8) {
            ++in_window;
            which = e;
        }
    REQUIRE(in_window == 1);
    REQUIRE(which == 8);
    // Conditional on that window the collected value clears OPT/18.
    Instance inst = uniform_additive_market(1 << 14, 1 << 12, 1.0);
    Rng rng(13);
    const double v = linear_pricing_fixed(inst, std::exp2(8), rng);
    REQUIRE(v == 256.0);
    REQUIRE(v >= opt / 18.0);
}

TEST_CASE("medium market mean value clears the coarse wrapper bound") {
    Instance inst = uniform_additive_market(1 << 14, 1 << 12, 1.0);
    const double opt = opt_closed_form(inst).value;
    auto profile = ConstantsProfile::defaults();
    double sum = 0;
    const int trials = 2000;
    for (int t = 0; t < trials; ++t) {
        Rng rng = Rng::for_trial(14, static_cast<std::uint64_t>(t));
        sum += medium_market(inst, profile, rng).value;
    }
    REQUIRE(sum / trials >= opt / 4000.0);
}

TEST_CASE("dynkin with two agents wins half the time") {
    Instance inst(ValuationOracle::additive({1.0, 2.0}), {0.1, 0.1}, 1.0);
    int wins = 0;
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
        Rng rng = Rng::for_trial(15, static_cast<std::uint64_t>(t));
        if (dynkin(inst, rng).value == 2.0) ++wins;
    }
    const double freq = static_cast<double>(wins) / trials;
    REQUIRE(std::abs(freq - 0.5) < 0.015);
}

TEST_CASE("dynkin never wins when the best agent is inside the sample") {
    std::vector<double> w;
    for (int i = 0; i < 100; ++i) w.push_back(1.0 + i * 0.01);
    std::vector<double> c(100, 0.1);
    Instance inst(ValuationOracle::additive(w), c, 1.0);
    const double vmax = inst.oracle().vmax();
    int wins = 0, losses = 0;
    for (int t = 0; t < 2000; ++t) {
        Rng rng = Rng::for_trial(16, static_cast<std::uint64_t>(t));
        auto out = dynkin(inst, rng);
        if (out.value == vmax) ++wins;
        else {
            ++losses;
            REQUIRE(out.value < vmax);
        }
    }
    REQUIRE(wins > 0);
    REQUIRE(losses > 0);
}

TEST_CASE("non-adaptive benchmark: E[ALG] pinned at one") {
    Rng rng(17);
    std::vector<std::int64_t> idx{0, 3};
    auto table = non_adaptive_experiment(8, 1.0, 20000, rng, idx);
    REQUIRE(table.expected_opt_closed_form == 2.5);  // log2(8)/2 + 1
    REQUIRE(table.rows[0].mean_value == 1.0);        // price B: always buys one agent
    REQUIRE(table.rows[1].mean_value == Catch::Approx(1.0).margin(0.15));
}
