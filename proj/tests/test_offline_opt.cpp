#include <catch2/catch_amalgamated.hpp>

#include "procure/offline_opt.hpp"

using namespace procure;

namespace {

Instance small_additive() {
    return Instance(ValuationOracle::additive({1, 2, 3}), {1, 1, 1}, 2.0);
}

Instance random_instance(Rng& rng, AgentId n) {
    const int kind = static_cast<int>(rng.below(3));
    std::vector<double> costs(static_cast<std::size_t>(n));
    for (auto& c : costs) c = rng.uniform(0.05, 1.0);
    const double budget = rng.uniform(0.5, 2.5);
    if (kind == 0) {
        std::vector<double> w(static_cast<std::size_t>(n));
        for (auto& x : w) x = rng.uniform(0.1, 2.0);
        return Instance(ValuationOracle::additive(w), costs, budget);
    }
    if (kind == 1) {
        std::vector<std::vector<std::int32_t>> sets(static_cast<std::size_t>(n));
        for (auto& s : sets)
            for (int j = 0; j < 3; ++j)
                s.push_back(static_cast<std::int32_t>(rng.below(2 * static_cast<std::uint64_t>(n))));
        return Instance(ValuationOracle::coverage(2 * n, sets), costs, budget);
    }
    std::vector<double> g{0};
    for (AgentId x = 1; x <= n; ++x)
        g.push_back(g.back() + rng.uniform(0.2, 1.0) / static_cast<double>(x));
    // enforce concavity of increments
    for (std::size_t i = 2; i < g.size(); ++i)
        g[i] = std::min(g[i], g[i - 1] + (g[i - 1] - g[i - 2]));
    return Instance(ValuationOracle::concave_cardinality(g), costs, budget);
}

}  // namespace

TEST_CASE("opt_exact enumerates the small example") {
    auto est = opt_exact(small_additive());
    REQUIRE(est.value == 5.0);
    REQUIRE(est.certificate == std::vector<AgentId>{1, 2});
    REQUIRE(est.kind == OptKind::exact);
}

TEST_CASE("opt_exact degenerate budgets") {
    Instance zero(ValuationOracle::additive({1, 2, 3}), {1, 1, 1}, 0.0);
    REQUIRE(opt_exact(zero).value == 0.0);
    REQUIRE(opt_exact(zero).certificate.empty());

    Instance unit(ValuationOracle::additive(std::vector<double>(8, 1.0)),
                  std::vector<double>(8, 1.0), 3.0);  // any 3 agents fit
    REQUIRE(opt_exact(unit).value == 3.0);
}

TEST_CASE("opt_exact rejects large instances") {
    Instance big(ValuationOracle::additive(std::vector<double>(25, 1.0)),
                 std::vector<double>(25, 1.0), 2.0);
    REQUIRE_THROWS_AS(opt_exact(big), std::invalid_argument);
}

TEST_CASE("closed form matches exact on uniform families") {
    auto i3 = gen_lower_bound_instance(3, 8, 1.0);
    REQUIRE(opt_closed_form(i3).value == 8.0);
    REQUIRE(opt_exact(i3).value == 8.0);

    Instance nonuniform(ValuationOracle::additive({1, 1}), {0.3, 0.4}, 1.0);
    REQUIRE_THROWS_AS(opt_closed_form(nonuniform), std::invalid_argument);

    // Power-of-two k keeps the per-agent cost exact in floating point.
    auto k128 = uniform_additive_market(150, 128, 1.0);
    REQUIRE(opt_closed_form(k128).value == 128.0);
    REQUIRE(opt_greedy(k128).value == 128.0);
    // Decimal costs round: greedy may land one agent short of the closed form.
    auto k100 = uniform_additive_market(150, 100, 1.0);
    REQUIRE(opt_greedy(k100).value >= opt_closed_form(k100).value - 1.0);
}

TEST_CASE("greedy is a feasible lower bound and empirically near-optimal") {
    Rng rng(31);
    for (int rep = 0; rep < 25; ++rep) {
        const auto n = static_cast<AgentId>(6 + rng.below(13));  // 6..18
        auto inst = random_instance(rng, n);
        auto exact = opt_exact(inst);
        auto greedy = opt_greedy(inst);
        REQUIRE(greedy.value <= exact.value + 1e-9);
        REQUIRE(greedy.value >= (1.0 - std::exp(-1.0)) * exact.value - 1e-9);
        double cost = 0;
        for (AgentId i : greedy.certificate) cost += CostAudit::cost(inst, i);
        REQUIRE(cost <= inst.budget() + 1e-9);
    }
}

TEST_CASE("greedy picks the lone affordable agent") {
    Instance inst(ValuationOracle::additive({5, 9, 2}), {10, 0.5, 10}, 1.0);
    auto est = opt_greedy(inst);
    REQUIRE(est.value == 9.0);
    REQUIRE(est.certificate == std::vector<AgentId>{1});
}
