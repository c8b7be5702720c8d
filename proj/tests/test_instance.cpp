#include <catch2/catch_amalgamated.hpp>

#include "procure/instance.hpp"
#include "procure/offline_opt.hpp"

using namespace procure;

TEST_CASE("lower-bound instances have the stated shape") {
    auto i0 = gen_lower_bound_instance(0, 8, 1.0);
    REQUIRE(i0.n() == 8);
    REQUIRE(CostAudit::cost(i0, 3) == 1.0);
    REQUIRE(opt_closed_form(i0).value == 1.0);

    auto i3 = gen_lower_bound_instance(3, 8, 1.0);
    REQUIRE(CostAudit::cost(i3, 0) == 1.0 / 8.0);
    REQUIRE(opt_closed_form(i3).value == 8.0);

    auto i1 = gen_lower_bound_instance(1, 4, 2.0);
    REQUIRE(CostAudit::cost(i1, 0) == 1.0);
    REQUIRE(opt_closed_form(i1).value == 2.0);

    REQUIRE_THROWS_AS(gen_lower_bound_instance(0, 6, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(gen_lower_bound_instance(4, 8, 1.0), std::invalid_argument);
}

TEST_CASE("lower-bound distribution sums to one and matches E[OPT]") {
    LowerBoundDistribution dist(1024, 1.0);
    auto p = dist.probabilities();
    double sum = 0;
    for (double x : p) sum += x;
    REQUIRE(sum == 1.0);  // dyadic probabilities are exact
    REQUIRE(dist.expected_opt() == 6.0);

    LowerBoundDistribution tiny(2, 1.0);
    REQUIRE(tiny.expected_opt() == 1.5);
    REQUIRE(tiny.probabilities() == std::vector<double>{0.5, 0.5});
}

TEST_CASE("lower-bound sampler passes a chi-squared goodness-of-fit test") {
    LowerBoundDistribution dist(1024, 1.0);
    const auto probs = dist.probabilities();
    std::vector<std::int64_t> counts(probs.size(), 0);
    Rng rng(2);
    const std::int64_t trials = 100000;
    double opt_sum = 0;
    for (std::int64_t t = 0; t < trials; ++t) {
        const auto i = dist.sample_index(rng);
        ++counts[static_cast<std::size_t>(i)];
        opt_sum += std::exp2(static_cast<double>(i));
    }
    double stat = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double expect = probs[i] * static_cast<double>(trials);
        stat += (static_cast<double>(counts[i]) - expect) *
                (static_cast<double>(counts[i]) - expect) / expect;
    }
    // df = 10, critical value at 1% significance.
    REQUIRE(stat < 23.209);
    REQUIRE(opt_sum / static_cast<double>(trials) == Catch::Approx(6.0).margin(0.25));
}

TEST_CASE("instance json round-trips losslessly") {
    Rng rng(5);
    auto inst = gen_large_market(OracleKind::coverage, 20, 5, CostModel::uniform_random,
                                 3.25, rng);
    auto back = Instance::from_json(inst.to_json());
    REQUIRE(back.n() == inst.n());
    REQUIRE(back.budget() == inst.budget());
    for (AgentId i = 0; i < inst.n(); ++i)
        REQUIRE(CostAudit::cost(back, i) == CostAudit::cost(inst, i));
    std::vector<AgentId> probe{0, 3, 7, 11};
    REQUIRE(back.oracle().value(probe) == inst.oracle().value(probe));
    REQUIRE(back.to_json() == inst.to_json());
}

TEST_CASE("acceptance predicate is the only cost surface") {
    auto inst = gen_lower_bound_instance(2, 8, 1.0);  // cost 0.25
    REQUIRE(inst.accepts(0, 0.25));
    REQUIRE(inst.accepts(0, 0.3));
    REQUIRE_FALSE(inst.accepts(0, 0.2499));
    REQUIRE_THROWS_AS(inst.accepts(42, 1.0), std::out_of_range);
}

TEST_CASE("large-market generator hits the target ratio") {
    Rng rng(8);
    SECTION("uniform additive has an exact closed form") {
        auto inst = gen_large_market(OracleKind::additive, 100000, 10000, CostModel::uniform,
                                     1.0, rng);
        REQUIRE(opt_closed_form(inst).value == 10000.0);
        REQUIRE(inst.oracle().vmax() == 1.0);
    }
    SECTION("random and heavy-tail costs are calibrated") {
        for (auto model : {CostModel::uniform_random, CostModel::heavy_tail}) {
            auto inst = gen_large_market(OracleKind::additive, 4000, 500, model, 1.0, rng);
            // Unit weights: optimum = longest prefix of sorted costs under B.
            auto costs = CostAudit::costs(inst);
            std::sort(costs.begin(), costs.end());
            double acc = 0;
            std::int64_t m = 0;
            for (double c : costs) {
                if (acc + c > 1.0) break;
                acc += c;
                ++m;
            }
            REQUIRE(m >= 450);
            REQUIRE(m <= 550);
        }
    }
    SECTION("coverage ratio verified by the greedy bound") {
        auto inst = gen_large_market(OracleKind::coverage, 1000, 100, CostModel::uniform,
                                     1.0, rng);
        auto est = opt_greedy(inst);
        const double ratio = est.value / inst.oracle().vmax();
        REQUIRE(ratio >= 90.0);
        REQUIRE(ratio <= 110.0);
    }
    SECTION("concave ratio from the cardinality profile") {
        auto inst = gen_large_market(OracleKind::concave_cardinality, 5000, 64,
                                     CostModel::uniform, 1.0, rng);
        const double ratio = opt_closed_form(inst).value / inst.oracle().vmax();
        REQUIRE(ratio == Catch::Approx(64.0).epsilon(0.1));
    }
    SECTION("n < k_target is rejected") {
        REQUIRE_THROWS_AS(
            gen_large_market(OracleKind::additive, 10, 20, CostModel::uniform, 1.0, rng),
            std::invalid_argument);
    }
}
