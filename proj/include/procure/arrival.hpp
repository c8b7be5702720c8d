#pragma once

// Random-order arrival streams and the binomial round machinery. A round is a
// prefix of the remaining stream whose length is drawn from Binomial(|rem|, a),
// which makes every remaining agent a member independently with probability a.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "procure/rng.hpp"
#include "procure/valuation.hpp"

namespace procure {

class ArrivalStream {
public:
    explicit ArrivalStream(std::vector<AgentId> order) : order_(std::move(order)) {}

    static ArrivalStream uniform(AgentId n, Rng& rng) {
        std::vector<AgentId> order(static_cast<std::size_t>(n));
        for (AgentId i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        rng.shuffle(order);
        return ArrivalStream(std::move(order));
    }

    static ArrivalStream identity(AgentId n) {
        std::vector<AgentId> order(static_cast<std::size_t>(n));
        for (AgentId i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        return ArrivalStream(std::move(order));
    }

    std::int64_t size() const { return static_cast<std::int64_t>(order_.size()); }
    std::int64_t consumed() const { return cursor_; }
    std::int64_t remaining() const { return size() - cursor_; }
    bool exhausted() const { return remaining() == 0; }

    AgentId peek() const {
        if (exhausted()) throw std::logic_error("ArrivalStream::peek on empty stream");
        return order_[static_cast<std::size_t>(cursor_)];
    }

    std::span<const AgentId> take(std::int64_t count) {
        if (count < 0 || count > remaining())
            throw std::logic_error("ArrivalStream::take beyond remaining agents");
        std::span<const AgentId> out(order_.data() + cursor_, static_cast<std::size_t>(count));
        cursor_ += count;
        return out;
    }

    const std::vector<AgentId>& order() const { return order_; }

private:
    std::vector<AgentId> order_;
    std::int64_t cursor_ = 0;
};

struct RoundDraw {
    std::span<const AgentId> agents;
    bool exhausted_before = false;  // nothing left when the draw was requested
    bool exhausted_after = false;   // the round consumed the tail of the stream
};

inline RoundDraw draw_round(ArrivalStream& stream, double a, Rng& rng) {
    if (!(a > 0.0 && a < 1.0))
        throw std::invalid_argument("draw_round: length parameter must be in (0,1)");
    RoundDraw out;
    if (stream.exhausted()) {
        out.exhausted_before = true;
        return out;
    }
    const std::int64_t len = rng.binomial(stream.remaining(), a);
    out.agents = stream.take(len);
    out.exhausted_after = stream.exhausted();
    return out;
}

// q_kappa = a_kappa * prod_{i<kappa} (1 - a_i): the probability that a fixed
// agent lands in the last round of the schedule.
inline double participation_probability(std::span<const double> length_params) {
    if (length_params.empty())
        throw std::invalid_argument("participation_probability: empty schedule");
    double q = length_params.back();
    for (std::size_t i = 0; i + 1 < length_params.size(); ++i) q *= 1.0 - length_params[i];
    return q;
}

struct JointFrequencyEstimate {
    double q_single = 0;        // empirical P(agent 0 in last round)
    double q_joint = 0;         // empirical P(agents 0 and 1 both in last round)
    double q_closed_form = 0;   // participation_probability of the schedule
    std::int64_t trials = 0;
};

// Monte Carlo check that two fixed agents land in the final round of the
// schedule independently (joint frequency ~ q^2).
inline JointFrequencyEstimate pairwise_joint_frequency(std::span<const double> length_params,
                                                       AgentId n, std::int64_t trials,
                                                       Rng& rng) {
    if (n < 2) throw std::invalid_argument("pairwise_joint_frequency: need n >= 2");
    JointFrequencyEstimate est;
    est.q_closed_form = participation_probability(length_params);
    est.trials = trials;
    std::int64_t hits_single = 0, hits_joint = 0;
    for (std::int64_t t = 0; t < trials; ++t) {
        ArrivalStream stream = ArrivalStream::uniform(n, rng);
        bool in0 = false, in1 = false;
        for (std::size_t k = 0; k < length_params.size(); ++k) {
            RoundDraw round = draw_round(stream, length_params[k], rng);
            if (round.exhausted_before) break;
            if (k + 1 == length_params.size()) {
                for (AgentId b : round.agents) {
                    if (b == 0) in0 = true;
                    if (b == 1) in1 = true;
                }
            }
        }
        hits_single += in0 ? 1 : 0;
        hits_joint += (in0 && in1) ? 1 : 0;
    }
    est.q_single = static_cast<double>(hits_single) / static_cast<double>(trials);
    est.q_joint = static_cast<double>(hits_joint) / static_cast<double>(trials);
    return est;
}

// ---------------------------------------------------------------------------
// Schedule sanity for the power-tower phases: a_i * gamma_i <= 1 / i^10 keeps
// the tower rounds from eating the stream. Holds for the default constants;
// scaled-down profiles may fail and are only flagged.

struct SeqBoundRow {
    std::int64_t index = 0;
    double length_param = 0;
    double phase_rounds = 0;
    double product = 0;
    double bound = 0;
    bool ok = false;
};

struct SeqBoundReport {
    std::vector<SeqBoundRow> rows;
    bool all_ok = true;
};

inline SeqBoundReport check_seq_bound(std::span<const double> tower_endpoints, double vmax,
                                      double goodness_coeff, double phase_len_coeff) {
    SeqBoundReport rep;
    if (tower_endpoints.size() < 3) return rep;  // nothing is ever tested: vacuous
    for (std::size_t i = 1; i + 1 < tower_endpoints.size(); ++i) {
        SeqBoundRow row;
        row.index = static_cast<std::int64_t>(i) + 1;  // tower indices are 1-based
        const double t = tower_endpoints[i];
        row.length_param = goodness_coeff * vmax / t;
        row.phase_rounds = std::ceil(phase_len_coeff * std::log2(t / vmax));
        row.product = row.length_param * row.phase_rounds;
        row.bound = std::pow(static_cast<double>(row.index), -10.0);
        row.ok = row.product <= row.bound;
        rep.all_ok = rep.all_ok && row.ok;
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace procure
