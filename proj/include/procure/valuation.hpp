#pragma once

// Monotone submodular valuation oracles: additive, coverage, and
// concave-of-cardinality. Oracles are immutable after construction and safe
// to share across concurrent trials; all queries are read-only.

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "procure/rng.hpp"

namespace procure {

using AgentId = std::int64_t;

enum class OracleKind { additive, coverage, concave_cardinality };

inline const char* to_string(OracleKind k) {
    switch (k) {
        case OracleKind::additive: return "additive";
        case OracleKind::coverage: return "coverage";
        case OracleKind::concave_cardinality: return "concave_cardinality";
    }
    return "?";
}

class ValuationOracle {
public:
    static ValuationOracle additive(std::vector<double> weights) {
        ValuationOracle o;
        o.kind_ = OracleKind::additive;
        o.n_ = static_cast<AgentId>(weights.size());
        o.weights_ = std::move(weights);
        for (double w : o.weights_)
            if (w < 0.0) throw std::invalid_argument("additive weights must be >= 0");
        return o;
    }

    // Each agent covers a subset of a universe {0, ..., universe-1};
    // f(S) = number of distinct elements covered.
    static ValuationOracle coverage(std::int64_t universe,
                                    std::vector<std::vector<std::int32_t>> sets) {
        ValuationOracle o;
        o.kind_ = OracleKind::coverage;
        o.n_ = static_cast<AgentId>(sets.size());
        o.universe_ = universe;
        for (auto& s : sets) {
            std::sort(s.begin(), s.end());
            s.erase(std::unique(s.begin(), s.end()), s.end());
            for (auto e : s)
                if (e < 0 || e >= universe)
                    throw std::invalid_argument("coverage element out of universe");
        }
        o.sets_ = std::move(sets);
        return o;
    }

    // f(S) = table[|S|]; table has n+1 entries and table[0] must be 0.
    // Concavity of the table is asserted by check_submodular, not here, so
    // that deliberately corrupted tables can be fed to the checker.
    static ValuationOracle concave_cardinality(std::vector<double> table) {
        if (table.empty() || table[0] != 0.0)
            throw std::invalid_argument("cardinality table must start at g(0) = 0");
        ValuationOracle o;
        o.kind_ = OracleKind::concave_cardinality;
        o.n_ = static_cast<AgentId>(table.size()) - 1;
        o.table_ = std::move(table);
        return o;
    }

    OracleKind kind() const { return kind_; }
    AgentId ground_set_size() const { return n_; }
    std::int64_t universe_size() const { return universe_; }

    double value(std::span<const AgentId> set) const {
        std::vector<AgentId> ids(set.begin(), set.end());
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        for (AgentId i : ids) check_id(i);
        switch (kind_) {
            case OracleKind::additive: {
                double s = 0;
                for (AgentId i : ids) s += weights_[static_cast<std::size_t>(i)];
                return s;
            }
            case OracleKind::concave_cardinality:
                return table_[ids.size()];
            case OracleKind::coverage: {
                std::vector<std::uint8_t> seen(static_cast<std::size_t>(universe_), 0);
                std::int64_t covered = 0;
                for (AgentId i : ids)
                    for (auto e : sets_[static_cast<std::size_t>(i)])
                        if (!seen[static_cast<std::size_t>(e)]) {
                            seen[static_cast<std::size_t>(e)] = 1;
                            ++covered;
                        }
                return static_cast<double>(covered);
            }
        }
        return 0;
    }

    double value(const std::vector<AgentId>& set) const {
        return value(std::span<const AgentId>(set));
    }

    double marginal(const std::vector<AgentId>& base, AgentId i) const {
        check_id(i);
        for (AgentId b : base)
            if (b == i) throw std::invalid_argument("marginal: agent already in base set");
        std::vector<AgentId> with = base;
        with.push_back(i);
        return value(with) - value(base);
    }

    double singleton(AgentId i) const {
        check_id(i);
        switch (kind_) {
            case OracleKind::additive: return weights_[static_cast<std::size_t>(i)];
            case OracleKind::concave_cardinality: return table_[1];
            case OracleKind::coverage:
                return static_cast<double>(sets_[static_cast<std::size_t>(i)].size());
        }
        return 0;
    }

    double vmax() const {
        double m = 0;
        for (AgentId i = 0; i < n_; ++i) m = std::max(m, singleton(i));
        return m;
    }

    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& cardinality_table() const { return table_; }
    const std::vector<std::vector<std::int32_t>>& cover_sets() const { return sets_; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = to_string(kind_);
        switch (kind_) {
            case OracleKind::additive: j["weights"] = weights_; break;
            case OracleKind::concave_cardinality: j["table"] = table_; break;
            case OracleKind::coverage:
                j["universe"] = universe_;
                j["sets"] = sets_;
                break;
        }
        return j;
    }

    static ValuationOracle from_json(const nlohmann::json& j) {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "additive")
            return additive(j.at("weights").get<std::vector<double>>());
        if (kind == "concave_cardinality")
            return concave_cardinality(j.at("table").get<std::vector<double>>());
        if (kind == "coverage")
            return coverage(j.at("universe").get<std::int64_t>(),
                            j.at("sets").get<std::vector<std::vector<std::int32_t>>>());
        throw std::invalid_argument("unknown oracle kind: " + kind);
    }

private:
    void check_id(AgentId i) const {
        if (i < 0 || i >= n_)
            throw std::out_of_range("agent id " + std::to_string(i) + " outside ground set");
    }

    OracleKind kind_ = OracleKind::additive;
    AgentId n_ = 0;
    std::int64_t universe_ = 0;
    std::vector<double> weights_;
    std::vector<double> table_;
    std::vector<std::vector<std::int32_t>> sets_;
};

// Incremental view of f on a growing solution; marginal() and add() are O(1)
// for additive/cardinality oracles and O(|set|) for coverage. One per trial.
class SolutionState {
public:
    explicit SolutionState(const ValuationOracle& oracle)
        : oracle_(&oracle),
          member_(static_cast<std::size_t>(oracle.ground_set_size()), 0) {
        if (oracle.kind() == OracleKind::coverage)
            covered_.assign(static_cast<std::size_t>(oracle.universe_size()), 0);
    }

    double value() const { return value_; }
    std::int64_t size() const { return count_; }
    bool contains(AgentId i) const { return member_[static_cast<std::size_t>(i)] != 0; }
    const std::vector<AgentId>& members() const { return order_; }

    double marginal(AgentId i) const {
        if (contains(i)) throw std::invalid_argument("marginal: agent already selected");
        switch (oracle_->kind()) {
            case OracleKind::additive:
                return oracle_->weights()[static_cast<std::size_t>(i)];
            case OracleKind::concave_cardinality: {
                const auto& g = oracle_->cardinality_table();
                return g[static_cast<std::size_t>(count_) + 1] -
                       g[static_cast<std::size_t>(count_)];
            }
            case OracleKind::coverage: {
                std::int64_t gain = 0;
                for (auto e : oracle_->cover_sets()[static_cast<std::size_t>(i)])
                    if (!covered_[static_cast<std::size_t>(e)]) ++gain;
                return static_cast<double>(gain);
            }
        }
        return 0;
    }

    // Returns the realized marginal of i and commits it to the solution.
    double add(AgentId i) {
        const double gain = marginal(i);
        member_[static_cast<std::size_t>(i)] = 1;
        if (oracle_->kind() == OracleKind::coverage)
            for (auto e : oracle_->cover_sets()[static_cast<std::size_t>(i)])
                covered_[static_cast<std::size_t>(e)] = 1;
        value_ += gain;
        ++count_;
        order_.push_back(i);
        return gain;
    }

private:
    const ValuationOracle* oracle_;
    std::vector<std::uint8_t> member_;
    std::vector<std::uint8_t> covered_;
    std::vector<AgentId> order_;
    double value_ = 0;
    std::int64_t count_ = 0;
};

// ---------------------------------------------------------------------------
// Consistency checks for the §-model assumptions: normalization, monotone
// marginals, diminishing returns. Report-only; violations carry the witness.

struct SubmodularViolation {
    std::vector<AgentId> small_set;
    std::vector<AgentId> big_set;
    AgentId agent = -1;
    double lhs = 0, rhs = 0;
    std::string what;
};

struct SubmodularReport {
    std::int64_t checks = 0;
    std::vector<SubmodularViolation> violations;
    bool ok() const { return violations.empty(); }
};

namespace detail {
constexpr double kSubmodularTol = 1e-9;

inline void record(SubmodularReport& rep, std::vector<AgentId> s, std::vector<AgentId> t,
                   AgentId i, double lhs, double rhs, const char* what) {
    if (rep.violations.size() < 64)
        rep.violations.push_back({std::move(s), std::move(t), i, lhs, rhs, what});
    else
        rep.violations.push_back({{}, {}, i, lhs, rhs, what});
}
}  // namespace detail

inline SubmodularReport check_submodular(const ValuationOracle& oracle,
                                         std::int64_t samples, std::uint64_t seed) {
    const AgentId n = oracle.ground_set_size();
    if (n > 10000)
        throw std::invalid_argument("check_submodular: sampling mode requires n <= 1e4");
    SubmodularReport rep;
    if (oracle.value(std::vector<AgentId>{}) != 0.0)
        detail::record(rep, {}, {}, -1, oracle.value(std::vector<AgentId>{}), 0.0,
                       "f(empty) != 0");
    ++rep.checks;
    if (n == 0) return rep;
    Rng rng(seed);
    for (std::int64_t s = 0; s < samples; ++s) {
        std::vector<AgentId> big, small;
        for (AgentId i = 0; i < n; ++i) {
            if (rng.bernoulli(0.4)) {
                big.push_back(i);
                if (rng.bernoulli(0.5)) small.push_back(i);
            }
        }
        AgentId probe = static_cast<AgentId>(rng.below(static_cast<std::uint64_t>(n)));
        bool in_big = std::find(big.begin(), big.end(), probe) != big.end();
        const double f_small = oracle.value(small);
        const double f_big = oracle.value(big);
        ++rep.checks;
        if (f_small > f_big + detail::kSubmodularTol)
            detail::record(rep, small, big, -1, f_small, f_big, "monotonicity");
        if (!in_big) {
            const double m_small = oracle.marginal(small, probe);
            const double m_big = oracle.marginal(big, probe);
            ++rep.checks;
            if (m_big < -detail::kSubmodularTol)
                detail::record(rep, small, big, probe, m_big, 0.0, "negative marginal");
            if (m_small < m_big - detail::kSubmodularTol)
                detail::record(rep, small, big, probe, m_small, m_big, "submodularity");
        }
    }
    return rep;
}

inline SubmodularReport check_submodular_exhaustive(const ValuationOracle& oracle) {
    const AgentId n = oracle.ground_set_size();
    if (n > 12)
        throw std::invalid_argument("check_submodular_exhaustive: requires n <= 12");
    SubmodularReport rep;
    auto unpack = [](std::uint32_t mask, AgentId n_) {
        std::vector<AgentId> ids;
        for (AgentId i = 0; i < n_; ++i)
            if (mask & (1u << i)) ids.push_back(i);
        return ids;
    };
    const std::uint32_t full = (n >= 32) ? 0xFFFFFFFFu : ((1u << n) - 1u);
    std::vector<double> fval(static_cast<std::size_t>(full) + 1, 0.0);
    for (std::uint32_t m = 0; m <= full; ++m) fval[m] = oracle.value(unpack(m, n));
    if (fval[0] != 0.0) detail::record(rep, {}, {}, -1, fval[0], 0.0, "f(empty) != 0");
    // Enumerate S subseteq T via submask iteration, then each i outside T.
    for (std::uint32_t t = 0; t <= full; ++t) {
        for (std::uint32_t s = t;; s = (s - 1) & t) {
            for (AgentId i = 0; i < n; ++i) {
                const std::uint32_t bit = 1u << i;
                if (t & bit) continue;
                const double m_small = fval[s | bit] - fval[s];
                const double m_big = fval[t | bit] - fval[t];
                ++rep.checks;
                if (m_big < -detail::kSubmodularTol)
                    detail::record(rep, unpack(s, n), unpack(t, n), i, m_big, 0.0,
                                   "negative marginal");
                if (m_small < m_big - detail::kSubmodularTol)
                    detail::record(rep, unpack(s, n), unpack(t, n), i, m_small, m_big,
                                   "submodularity");
            }
            if (s == 0) break;
        }
        if (t == full) break;
    }
    return rep;
}

}  // namespace procure
