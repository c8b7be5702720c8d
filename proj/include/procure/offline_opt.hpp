#pragma once

// Offline optimum OPT = max f(S) s.t. sum of costs <= B, used as the
// denominator of competitive ratios. Exact enumeration for tiny instances,
// closed forms for uniform families, density greedy elsewhere.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <stdexcept>
#include <vector>

#include "procure/instance.hpp"
#include "procure/valuation.hpp"

namespace procure {

enum class OptKind { exact, closed_form, greedy_lower_bound };

inline const char* to_string(OptKind k) {
    switch (k) {
        case OptKind::exact: return "exact";
        case OptKind::closed_form: return "closed-form";
        case OptKind::greedy_lower_bound: return "greedy-lower-bound";
    }
    return "?";
}

struct OptEstimate {
    double value = 0;
    OptKind kind = OptKind::exact;
    std::vector<AgentId> certificate;
    double guarantee = 1.0;  // claimed fraction of OPT (1 for exact kinds)
};

namespace detail {

inline void assert_feasible(const Instance& inst, const std::vector<AgentId>& set) {
    double cost = 0;
    for (AgentId i : set) cost += CostAudit::cost(inst, i);
    if (cost > inst.budget() * (1.0 + 1e-12) + 1e-12)
        throw std::logic_error("offline_opt: certificate exceeds budget");
}

}  // namespace detail

// Exhaustive maximum over all feasible subsets, via a Gray-code walk with
// incremental cost and value updates. Requires n <= 24.
inline OptEstimate opt_exact(const Instance& inst) {
    const AgentId n = inst.n();
    if (n > 24) throw std::invalid_argument("opt_exact: n must be <= 24 (use opt_greedy)");
    const auto& oracle = inst.oracle();
    const auto& costs = CostAudit::costs(inst);
    const double budget = inst.budget();

    double cur_cost = 0, cur_value = 0;
    std::int64_t cur_count = 0;
    std::vector<std::int32_t> cover_count;
    if (oracle.kind() == OracleKind::coverage)
        cover_count.assign(static_cast<std::size_t>(oracle.universe_size()), 0);
    std::int64_t covered = 0;

    std::uint32_t best_mask = 0;
    double best_value = 0;

    std::uint32_t mask = 0;
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t g = 1; g < total; ++g) {
        const int bit = std::countr_zero(g);
        const std::uint32_t flip = 1u << bit;
        const bool adding = !(mask & flip);
        mask ^= flip;
        const auto idx = static_cast<std::size_t>(bit);
        cur_cost += adding ? costs[idx] : -costs[idx];
        switch (oracle.kind()) {
            case OracleKind::additive:
                cur_value += adding ? oracle.weights()[idx] : -oracle.weights()[idx];
                break;
            case OracleKind::concave_cardinality:
                cur_count += adding ? 1 : -1;
                cur_value = oracle.cardinality_table()[static_cast<std::size_t>(cur_count)];
                break;
            case OracleKind::coverage:
                for (auto e : oracle.cover_sets()[idx]) {
                    auto& c = cover_count[static_cast<std::size_t>(e)];
                    if (adding) {
                        if (c++ == 0) ++covered;
                    } else {
                        if (--c == 0) --covered;
                    }
                }
                cur_value = static_cast<double>(covered);
                break;
        }
        if (cur_cost <= budget && cur_value > best_value) {
            best_value = cur_value;
            best_mask = mask;
        }
    }

    OptEstimate est;
    est.kind = OptKind::exact;
    est.value = best_value;
    for (AgentId i = 0; i < n; ++i)
        if (best_mask & (1u << i)) est.certificate.push_back(i);
    detail::assert_feasible(inst, est.certificate);
    return est;
}

// Uniform families (identical costs, additive-with-equal-weights or
// cardinality oracle): OPT = g(min(n, floor(B / c))).
inline OptEstimate opt_closed_form(const Instance& inst) {
    const AgentId n = inst.n();
    if (n == 0) return {0, OptKind::closed_form, {}, 1.0};
    const auto& costs = CostAudit::costs(inst);
    const double c = costs[0];
    for (double ci : costs)
        if (ci != c) throw std::invalid_argument("opt_closed_form: costs not uniform");

    const auto& oracle = inst.oracle();
    double unit_weight = 0;
    if (oracle.kind() == OracleKind::additive) {
        unit_weight = oracle.weights()[0];
        for (double w : oracle.weights())
            if (w != unit_weight)
                throw std::invalid_argument("opt_closed_form: weights not uniform");
    } else if (oracle.kind() != OracleKind::concave_cardinality) {
        throw std::invalid_argument("opt_closed_form: needs additive or cardinality oracle");
    }

    std::int64_t m = n;
    if (c > 0) {
        const double q = inst.budget() / c;
        m = std::min<std::int64_t>(n, static_cast<std::int64_t>(std::floor(q + 1e-9)));
        m = std::max<std::int64_t>(m, 0);
    }
    OptEstimate est;
    est.kind = OptKind::closed_form;
    est.value = (oracle.kind() == OracleKind::additive)
                    ? unit_weight * static_cast<double>(m)
                    : oracle.cardinality_table()[static_cast<std::size_t>(m)];
    for (AgentId i = 0; i < m; ++i) est.certificate.push_back(i);
    detail::assert_feasible(inst, est.certificate);
    return est;
}

namespace detail {

// Lazy cost-benefit greedy from a (possibly empty) seed set.
inline double greedy_complete(const Instance& inst, const std::vector<AgentId>& seed,
                              std::vector<AgentId>* out) {
    const auto& costs = CostAudit::costs(inst);
    SolutionState sol(inst.oracle());
    double budget = inst.budget();
    for (AgentId i : seed) {
        budget -= costs[static_cast<std::size_t>(i)];
        sol.add(i);
    }
    if (budget < -1e-12) return -1;  // infeasible seed

    struct Entry {
        double density;
        AgentId id;
        bool operator<(const Entry& other) const { return density < other.density; }
    };
    auto density_of = [&](AgentId i) {
        const double m = sol.marginal(i);
        const double c = costs[static_cast<std::size_t>(i)];
        if (c <= 0) return m > 0 ? std::numeric_limits<double>::infinity() : 0.0;
        return m / c;
    };
    std::priority_queue<Entry> heap;
    for (AgentId i = 0; i < inst.n(); ++i) {
        if (sol.contains(i)) continue;
        if (costs[static_cast<std::size_t>(i)] > budget) continue;
        heap.push({density_of(i), i});
    }
    while (!heap.empty()) {
        auto [stale, id] = heap.top();
        heap.pop();
        if (sol.contains(id)) continue;
        const double c = costs[static_cast<std::size_t>(id)];
        if (c > budget) continue;
        const double fresh = density_of(id);
        if (!heap.empty() && fresh < heap.top().density) {
            heap.push({fresh, id});
            continue;
        }
        if (sol.marginal(id) <= 0) continue;
        sol.add(id);
        budget -= c;
    }
    if (out) *out = sol.members();
    return sol.value();
}

}  // namespace detail

// Density greedy plus best singleton, with pair-seeded partial enumeration on
// small instances. Always returns a feasible lower bound on OPT.
inline OptEstimate opt_greedy(const Instance& inst) {
    const AgentId n = inst.n();
    const auto& costs = CostAudit::costs(inst);
    OptEstimate est;
    est.kind = OptKind::greedy_lower_bound;
    est.guarantee = 0.5 * (1.0 - std::exp(-1.0));
    if (n == 0) return est;

    std::vector<AgentId> best_set;
    double best = detail::greedy_complete(inst, {}, &best_set);

    for (AgentId i = 0; i < n; ++i) {
        if (costs[static_cast<std::size_t>(i)] > inst.budget()) continue;
        const double v = inst.oracle().singleton(i);
        if (v > best) {
            best = v;
            best_set = {i};
        }
    }

    // Pair-seeded enumeration: exhaustive on small n, limited to the most
    // promising agents on mid-sized instances, skipped beyond 1e4 agents.
    if (n <= 10000) {
        std::vector<AgentId> cand;
        if (n <= 128) {
            for (AgentId i = 0; i < n; ++i) cand.push_back(i);
        } else {
            std::vector<AgentId> by_value(static_cast<std::size_t>(n));
            for (AgentId i = 0; i < n; ++i) by_value[static_cast<std::size_t>(i)] = i;
            std::sort(by_value.begin(), by_value.end(), [&](AgentId a, AgentId b) {
                return inst.oracle().singleton(a) > inst.oracle().singleton(b);
            });
            cand.assign(by_value.begin(), by_value.begin() + 48);
        }
        est.guarantee = 1.0 - std::exp(-1.0);
        for (std::size_t x = 0; x < cand.size(); ++x) {
            for (std::size_t y = x + 1; y < cand.size(); ++y) {
                const double pair_cost = costs[static_cast<std::size_t>(cand[x])] +
                                         costs[static_cast<std::size_t>(cand[y])];
                if (pair_cost > inst.budget()) continue;
                std::vector<AgentId> got;
                const double v = detail::greedy_complete(inst, {cand[x], cand[y]}, &got);
                if (v > best) {
                    best = v;
                    best_set = got;
                }
            }
        }
    }

    est.value = best;
    est.certificate = std::move(best_set);
    detail::assert_feasible(inst, est.certificate);
    return est;
}

}  // namespace procure
