#pragma once

// Problem instances: agents with private costs, a public valuation oracle and
// a budget. Costs are visible only through the accept(agent, price) predicate
// and through CostAudit, which only the harness-side audits use; mechanism
// code has no read path to them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "procure/rng.hpp"
#include "procure/valuation.hpp"

namespace procure {

class CostAudit;

class Instance {
public:
    Instance(ValuationOracle oracle, std::vector<double> costs, double budget)
        : oracle_(std::move(oracle)), costs_(std::move(costs)), budget_(budget) {
        if (budget_ < 0) throw std::invalid_argument("budget must be >= 0");
        if (static_cast<AgentId>(costs_.size()) != oracle_.ground_set_size())
            throw std::invalid_argument("oracle ground set must match agent count");
        for (double c : costs_)
            if (!(c >= 0)) throw std::invalid_argument("costs must be >= 0");
    }

    AgentId n() const { return static_cast<AgentId>(costs_.size()); }
    double budget() const { return budget_; }
    const ValuationOracle& oracle() const { return oracle_; }

    // Take-it-or-leave-it response. The only cost-dependent output reachable
    // from mechanism code.
    bool accepts(AgentId i, double price) const {
        if (i < 0 || i >= n()) throw std::out_of_range("accepts: bad agent id");
        return price >= costs_[static_cast<std::size_t>(i)];
    }

    nlohmann::json to_json() const {
        nlohmann::json agents = nlohmann::json::array();
        for (AgentId i = 0; i < n(); ++i)
            agents.push_back({{"id", i}, {"cost", costs_[static_cast<std::size_t>(i)]}});
        return {{"budget", budget_}, {"agents", agents}, {"oracle", oracle_.to_json()}};
    }

    static Instance from_json(const nlohmann::json& j) {
        auto oracle = ValuationOracle::from_json(j.at("oracle"));
        const auto& agents = j.at("agents");
        std::vector<double> costs(agents.size(), 0.0);
        for (const auto& a : agents) {
            const auto id = a.at("id").get<AgentId>();
            if (id < 0 || id >= static_cast<AgentId>(costs.size()))
                throw std::invalid_argument("instance json: agent id out of range");
            costs[static_cast<std::size_t>(id)] = a.at("cost").get<double>();
        }
        return Instance(std::move(oracle), std::move(costs), j.at("budget").get<double>());
    }

private:
    friend class CostAudit;
    ValuationOracle oracle_;
    std::vector<double> costs_;
    double budget_;
};

// Harness-side escape hatch: audits and offline optimum computations may read
// costs; mechanisms never include this surface.
class CostAudit {
public:
    static double cost(const Instance& inst, AgentId i) {
        return inst.costs_[static_cast<std::size_t>(i)];
    }
    static const std::vector<double>& costs(const Instance& inst) { return inst.costs_; }
};

// ---------------------------------------------------------------------------
// Lower-bound family: I_i has n unit-value agents of cost B / 2^i.

inline bool is_power_of_two(std::int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

inline std::int64_t log2_exact(std::int64_t n) {
    std::int64_t l = 0;
    while ((std::int64_t{1} << l) < n) ++l;
    return l;
}

inline Instance gen_lower_bound_instance(std::int64_t i, std::int64_t n, double budget) {
    if (!is_power_of_two(n)) throw std::invalid_argument("n must be a power of two");
    const std::int64_t log_n = log2_exact(n);
    if (i < 0 || i > log_n) throw std::invalid_argument("index must be in [0, log2 n]");
    const double cost = budget / static_cast<double>(std::int64_t{1} << i);
    return Instance(ValuationOracle::additive(std::vector<double>(static_cast<std::size_t>(n), 1.0)),
                    std::vector<double>(static_cast<std::size_t>(n), cost), budget);
}

// Distribution D over {I_0, ..., I_log n}: p_i = 1/2^(i+1) for i < log n and
// p_log n = 1/n, which sums to one exactly.
struct LowerBoundDistribution {
    std::int64_t n;
    double budget;

    LowerBoundDistribution(std::int64_t n_, double budget_) : n(n_), budget(budget_) {
        if (!is_power_of_two(n)) throw std::invalid_argument("n must be a power of two");
        if (n < 2) throw std::invalid_argument("n must be >= 2");
    }

    std::int64_t log_n() const { return log2_exact(n); }

    std::vector<double> probabilities() const {
        const std::int64_t l = log_n();
        std::vector<double> p(static_cast<std::size_t>(l) + 1);
        for (std::int64_t i = 0; i < l; ++i)
            p[static_cast<std::size_t>(i)] = std::ldexp(1.0, static_cast<int>(-(i + 1)));
        p[static_cast<std::size_t>(l)] = 1.0 / static_cast<double>(n);
        return p;
    }

    // E[OPT] = log2(n)/2 + 1, exact.
    double expected_opt() const { return static_cast<double>(log_n()) / 2.0 + 1.0; }

    std::int64_t sample_index(Rng& rng) const {
        const double u = rng.next_unit();
        double acc = 0;
        const auto p = probabilities();
        for (std::size_t i = 0; i + 1 < p.size(); ++i) {
            acc += p[i];
            if (u < acc) return static_cast<std::int64_t>(i);
        }
        return log_n();
    }
};

inline Instance sample_lower_bound(const LowerBoundDistribution& dist, Rng& rng,
                                   std::int64_t* index_out = nullptr) {
    const std::int64_t i = dist.sample_index(rng);
    if (index_out) *index_out = i;
    return gen_lower_bound_instance(i, dist.n, dist.budget);
}

// ---------------------------------------------------------------------------
// Large-market generator: instances whose OPT / vmax lands within +-10% of a
// requested ratio, at configurable scale.

enum class CostModel { uniform, uniform_random, heavy_tail };

inline const char* to_string(CostModel m) {
    switch (m) {
        case CostModel::uniform: return "uniform";
        case CostModel::uniform_random: return "uniform_random";
        case CostModel::heavy_tail: return "heavy_tail";
    }
    return "?";
}

inline CostModel cost_model_from_string(const std::string& s) {
    if (s == "uniform") return CostModel::uniform;
    if (s == "uniform_random") return CostModel::uniform_random;
    if (s == "heavy_tail") return CostModel::heavy_tail;
    throw std::invalid_argument("unknown cost model: " + s);
}

namespace detail {

// Rescales raw costs so that the k cheapest ones together use up the budget;
// for unit-value additive oracles this pins the optimum to exactly k agents.
inline std::vector<double> calibrate_costs(std::vector<double> raw, std::int64_t k,
                                           double budget) {
    std::vector<double> sorted = raw;
    std::sort(sorted.begin(), sorted.end());
    double prefix = 0;
    for (std::int64_t i = 0; i < k; ++i) prefix += sorted[static_cast<std::size_t>(i)];
    if (prefix <= 0) throw std::invalid_argument("degenerate raw costs");
    const double scale = budget / prefix * (1.0 + 1e-12);
    for (double& c : raw) c *= scale;
    return raw;
}

inline std::vector<double> draw_costs(CostModel model, std::int64_t n, std::int64_t k,
                                      double budget, Rng& rng) {
    std::vector<double> costs(static_cast<std::size_t>(n));
    switch (model) {
        case CostModel::uniform: {
            const double c = budget / static_cast<double>(k);
            std::fill(costs.begin(), costs.end(), c);
            return costs;
        }
        case CostModel::uniform_random: {
            for (double& c : costs) c = rng.uniform(0.0, 2.0);
            return calibrate_costs(std::move(costs), k, budget);
        }
        case CostModel::heavy_tail: {
            // Pareto(alpha = 1.5), capped to keep the calibration stable.
            for (double& c : costs) {
                const double u = rng.next_unit_pos();
                c = std::min(std::pow(1.0 / u, 1.0 / 1.5), 1e4);
            }
            return calibrate_costs(std::move(costs), k, budget);
        }
    }
    return costs;
}

}  // namespace detail

inline Instance gen_large_market(OracleKind kind, std::int64_t n, std::int64_t k_target,
                                 CostModel cost_model, double budget, Rng& rng,
                                 std::int64_t cover_degree = 10) {
    if (n < k_target || k_target < 1)
        throw std::invalid_argument("gen_large_market: need n >= k_target >= 1");
    if (budget <= 0) throw std::invalid_argument("gen_large_market: budget must be > 0");
    switch (kind) {
        case OracleKind::additive: {
            auto costs = detail::draw_costs(cost_model, n, k_target, budget, rng);
            return Instance(
                ValuationOracle::additive(std::vector<double>(static_cast<std::size_t>(n), 1.0)),
                std::move(costs), budget);
        }
        case OracleKind::coverage: {
            // Sparse random covers: universe large enough that the best
            // k_target agents overlap on < 10% of their elements.
            const std::int64_t universe = 8 * k_target * cover_degree;
            std::vector<std::vector<std::int32_t>> sets(static_cast<std::size_t>(n));
            for (auto& s : sets) {
                s.reserve(static_cast<std::size_t>(cover_degree));
                while (static_cast<std::int64_t>(s.size()) < cover_degree) {
                    auto e = static_cast<std::int32_t>(
                        rng.below(static_cast<std::uint64_t>(universe)));
                    if (std::find(s.begin(), s.end(), e) == s.end()) s.push_back(e);
                }
            }
            auto costs = detail::draw_costs(cost_model, n, k_target, budget, rng);
            return Instance(ValuationOracle::coverage(universe, std::move(sets)),
                            std::move(costs), budget);
        }
        case OracleKind::concave_cardinality: {
            // g(x) = x^beta with beta chosen so g(n)/g(1) = k_target; spending
            // the budget on all n agents realizes the target ratio.
            const double beta =
                (n == 1) ? 1.0
                         : std::log(static_cast<double>(k_target)) / std::log(static_cast<double>(n));
            std::vector<double> table(static_cast<std::size_t>(n) + 1, 0.0);
            for (std::int64_t x = 1; x <= n; ++x)
                table[static_cast<std::size_t>(x)] = std::pow(static_cast<double>(x), beta);
            auto costs = detail::draw_costs(cost_model, n, n, budget, rng);
            return Instance(ValuationOracle::concave_cardinality(std::move(table)),
                            std::move(costs), budget);
        }
    }
    throw std::invalid_argument("gen_large_market: unknown oracle kind");
}

// Convenience for the families used throughout the experiments.
inline Instance uniform_additive_market(std::int64_t n, std::int64_t k, double budget) {
    Rng unused(0);
    return gen_large_market(OracleKind::additive, n, k, CostModel::uniform, budget, unused);
}

}  // namespace procure
