#pragma once

// Posted-price mechanisms. All offers flow through TrialContext::offer, which
// enforces the budget guard and feeds the audit observer; mechanism code only
// sees accept/reject bits, never costs.
//
// TestThreshold prices a binomial round linearly at f_S(b) * B / t_hat and
// declares the round successful once it has collected value C * a * t_hat.
// Offers stop at that bar (the rest of the round is consumed without offers),
// which keeps the per-round spend below the round budget 3 * C * a * B.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "procure/arrival.hpp"
#include "procure/instance.hpp"
#include "procure/rng.hpp"
#include "procure/valuation.hpp"

namespace procure {

// ---------------------------------------------------------------------------
// Constants. "default" carries the constants the guarantees are stated for;
// "desk" scales the large-market bar down so all four periods exercise
// nontrivially at n <= 2^18. Guarantees are only claimed for "default".

struct ConstantsProfile {
    std::string name = "default";
    double C = 1.0 / (7.0 * 2.718281828459045);
    double market_bar = 1e7;        // guarantee requires OPT / vmax >= this
    double tower_base = 1e7;        // t_2 = tower_base * vmax
    double goodness_coeff = 81.0 * 2.718281828459045;
    double phase_len_coeff = 1.5;   // gamma_i = ceil(coeff * log2(t_i / vmax))
    double bs_phase_coeff = 8.0;    // m = ceil(coeff * loglog(t_max / t_min))
    double bs_len_denom = 6.0;      // a = 1 / (denom * ceil(loglog) * m)
    double learn_fraction = 1.0 / 3.0;
    double threshold_floor = 1024.0;  // periods 3-4 never price below floor * vmax
    std::array<double, 3> wrapper_probs{0.1, 0.1, 0.8};
    int medium_exp_lo = 6;
    int medium_exp_hi = 23;

    static ConstantsProfile defaults() { return ConstantsProfile{}; }

    static ConstantsProfile desk() {
        ConstantsProfile p;
        p.name = "desk";
        p.market_bar = 16384.0;  // 2^14
        p.tower_base = 16384.0;
        p.goodness_coeff = 8.0 * 2.718281828459045;
        return p;
    }

    static ConstantsProfile from_name(const std::string& name) {
        if (name == "default") return defaults();
        if (name == "desk") return desk();
        throw std::invalid_argument("unknown profile: " + name);
    }
};

enum class AbortReason { none, stream_exhausted, value_above_vmax, budget_exhausted };

inline const char* to_string(AbortReason r) {
    switch (r) {
        case AbortReason::none: return "none";
        case AbortReason::stream_exhausted: return "stream-exhausted";
        case AbortReason::value_above_vmax: return "value-above-vmax";
        case AbortReason::budget_exhausted: return "budget-exhausted";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Per-offer and per-round instrumentation.

struct OfferEvent {
    int period = 0;
    std::int64_t phase = 0;
    std::int64_t round = 0;
    AgentId agent = -1;
    double marginal = 0;
    double price = 0;      // price offered
    double paid = 0;       // price if accepted, else 0 (agent discarded)
    double threshold = 0;  // 0 for non-linear offers (learning, Dynkin)
    bool accepted = false;
    double budget_after = 0;
};

struct RoundLogEntry {
    int period = 0;
    std::int64_t phase = 0;
    std::int64_t round = 0;
    double length_param = 0;
    double threshold = 0;
    std::int64_t drawn = 0;
    std::int64_t offered = 0;
    std::int64_t accepted = 0;
    std::int64_t price_capped = 0;
    double val_test = 0;
    bool success = false;
    double spend = 0;
};

class OfferObserver {
public:
    virtual ~OfferObserver() = default;
    // Called when a mechanism execution (one budget's worth of offers) begins.
    virtual void on_trial_start(const Instance&) {}
    virtual void on_offer(const Instance& inst, const OfferEvent& ev) = 0;
};

struct TrialHooks {
    OfferObserver* observer = nullptr;
    std::vector<OfferEvent>* ledger = nullptr;
    std::vector<RoundLogEntry>* round_log = nullptr;
};

// ---------------------------------------------------------------------------
// TrialContext: the mechanism state (S, val, B_rem, N_rem) threaded through
// the periods of one trial. Confined to its trial; never shared.

class TrialContext {
public:
    TrialContext(const Instance& inst, const ConstantsProfile& profile, Rng& rng,
                 ArrivalStream stream, TrialHooks hooks = {})
        : inst_(&inst),
          profile_(&profile),
          rng_(&rng),
          stream_(std::move(stream)),
          sol_(inst.oracle()),
          budget_remaining_(inst.budget()),
          hooks_(hooks) {
        if (hooks_.observer) hooks_.observer->on_trial_start(inst);
    }

    const Instance& instance() const { return *inst_; }
    const ConstantsProfile& profile() const { return *profile_; }
    Rng& rng() { return *rng_; }
    ArrivalStream& stream() { return stream_; }
    SolutionState& solution() { return sol_; }

    double budget() const { return inst_->budget(); }
    double budget_remaining() const { return budget_remaining_; }
    double payments_total() const { return payments_total_; }
    double value() const { return sol_.value(); }

    double vmax_est() const { return vmax_est_; }
    void set_vmax_est(double v, bool fallback = false) {
        vmax_est_ = v;
        vmax_fallback_ = fallback;
    }
    bool vmax_fallback() const { return vmax_fallback_; }

    AbortReason abort() const { return abort_; }
    bool aborted() const { return abort_ != AbortReason::none; }
    void raise_abort(AbortReason r) {
        if (abort_ == AbortReason::none) abort_ = r;
    }

    int period = 0;
    std::int64_t offers_made = 0;
    std::int64_t offers_accepted = 0;
    std::int64_t price_capped = 0;
    bool unsafe_allow_overspend = false;  // audit-sensitivity fixture only

    // Take-it-or-leave-it offer at a price computed from public data only.
    // Returns the accept bit; on acceptance the agent joins the solution and
    // the payment is ledgered.
    bool offer(AgentId agent, double price, double threshold, std::int64_t phase = 0,
               std::int64_t round = 0) {
        if (price > budget_remaining_ * (1.0 + 1e-12) + 1e-300) {
            if (!unsafe_allow_overspend)
                throw std::logic_error("offer priced above remaining budget");
        }
        ++offers_made;
        const bool accepted = inst_->accepts(agent, price);
        OfferEvent ev;
        ev.period = period;
        ev.phase = phase;
        ev.round = round;
        ev.agent = agent;
        ev.price = price;
        ev.threshold = threshold;
        ev.accepted = accepted;
        if (accepted) {
            ev.marginal = sol_.add(agent);
            ev.paid = price;
            budget_remaining_ -= price;
            payments_total_ += price;
            ++offers_accepted;
        } else {
            ev.marginal = sol_.marginal(agent);
            ev.paid = 0;  // discarded agents are paid nothing
        }
        ev.budget_after = budget_remaining_;
        if (hooks_.observer) hooks_.observer->on_offer(*inst_, ev);
        if (hooks_.ledger) hooks_.ledger->push_back(ev);
        return accepted;
    }

    void log_round(const RoundLogEntry& e) {
        if (hooks_.round_log) hooks_.round_log->push_back(e);
    }

private:
    const Instance* inst_;
    const ConstantsProfile* profile_;
    Rng* rng_;
    ArrivalStream stream_;
    SolutionState sol_;
    double budget_remaining_;
    double payments_total_ = 0;
    double vmax_est_ = 0;
    bool vmax_fallback_ = false;
    AbortReason abort_ = AbortReason::none;
    TrialHooks hooks_;
};

// ---------------------------------------------------------------------------
// Round length sources: mechanisms draw binomial rounds; the prediction
// mechanism replays lengths drawn up front.

class RoundLenSource {
public:
    virtual ~RoundLenSource() = default;
    // nullopt means the source has no more rounds to hand out.
    virtual std::optional<std::int64_t> next(std::int64_t remaining, Rng& rng) = 0;
};

class BinomialRounds final : public RoundLenSource {
public:
    explicit BinomialRounds(double a) : a_(a) {}
    std::optional<std::int64_t> next(std::int64_t remaining, Rng& rng) override {
        return rng.binomial(remaining, a_);
    }

private:
    double a_;
};

class PredrawnRounds final : public RoundLenSource {
public:
    explicit PredrawnRounds(std::vector<std::int64_t> lengths)
        : lengths_(std::move(lengths)) {}
    std::optional<std::int64_t> next(std::int64_t remaining, Rng&) override {
        if (pos_ >= lengths_.size()) return std::nullopt;
        return std::min(lengths_[pos_++], remaining);
    }
    std::size_t remaining_rounds() const { return lengths_.size() - pos_; }

private:
    std::vector<std::int64_t> lengths_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// TestThreshold.

struct PhaseOutcome {
    bool hit = false;
    std::int64_t successes = 0;
    std::int64_t rounds_run = 0;
    bool out_of_rounds = false;  // the round source dried up mid-phase
};

// Runs delta rounds against threshold t_hat. A round succeeds when the value
// collected within it reaches C * a * t_hat; the phase hits when at least
// half of its rounds succeed. Aborts propagate via ctx.
inline PhaseOutcome test_threshold_with_source(TrialContext& ctx, double budget,
                                               std::int64_t delta, double a, double t_hat,
                                               RoundLenSource& rounds,
                                               std::int64_t phase_id = 0) {
    if (!(t_hat > 0)) throw std::invalid_argument("test_threshold: threshold must be > 0");
    if (delta < 1) throw std::invalid_argument("test_threshold: need delta >= 1");
    const double bar = ctx.profile().C * a * t_hat;
    PhaseOutcome out;
    for (std::int64_t j = 0; j < delta; ++j) {
        if (ctx.stream().exhausted()) {
            ctx.raise_abort(AbortReason::stream_exhausted);
            return out;
        }
        const auto len = rounds.next(ctx.stream().remaining(), ctx.rng());
        if (!len) {
            out.out_of_rounds = true;
            break;
        }
        RoundLogEntry log;
        log.period = ctx.period;
        log.phase = phase_id;
        log.round = j;
        log.length_param = a;
        log.threshold = t_hat;
        auto agents = ctx.stream().take(*len);
        log.drawn = static_cast<std::int64_t>(agents.size());
        const bool tail_consumed = ctx.stream().exhausted();

        double val_test = 0;
        bool bar_hit = false;
        const double spend_before = ctx.payments_total();
        for (AgentId b : agents) {
            if (ctx.instance().oracle().singleton(b) > ctx.vmax_est() * (1.0 + 1e-12)) {
                ctx.raise_abort(AbortReason::value_above_vmax);
                break;
            }
            if (!bar_hit) {
                const double marg = ctx.solution().marginal(b);
                const double price = marg * budget / t_hat;
                if (price > ctx.budget_remaining()) {
                    ++ctx.price_capped;
                    ++log.price_capped;
                } else {
                    ++log.offered;
                    if (ctx.offer(b, price, t_hat, phase_id, j)) {
                        val_test += marg;
                        ++log.accepted;
                        if (ctx.budget_remaining() <= 0) {
                            ctx.raise_abort(AbortReason::budget_exhausted);
                        }
                    }
                }
                if (val_test >= bar) bar_hit = true;
            }
            if (ctx.aborted()) break;
        }
        log.val_test = val_test;
        log.success = val_test >= bar;
        log.spend = ctx.payments_total() - spend_before;
        ++out.rounds_run;
        if (log.success) ++out.successes;
        ctx.log_round(log);
        if (ctx.aborted()) return out;
        if (tail_consumed) {
            ctx.raise_abort(AbortReason::stream_exhausted);
            return out;
        }
    }
    out.hit = 2 * out.successes >= delta;
    return out;
}

inline PhaseOutcome test_threshold(TrialContext& ctx, double budget, std::int64_t delta,
                                   double a, double t_hat, std::int64_t phase_id = 0) {
    BinomialRounds rounds(a);
    return test_threshold_with_source(ctx, budget, delta, a, t_hat, rounds, phase_id);
}

// ---------------------------------------------------------------------------
// Period 1: LearningMaxValue. Samples tau ~ Binomial(|N_rem|, 1/3) agents at
// price zero and returns the highest singleton value seen. A tau = 0 draw
// falls back to the value of the next agent in line and is flagged.

struct LearnResult {
    double vmax_est = 0;
    bool fallback = false;
    std::int64_t sampled = 0;
};

inline LearnResult learning_max_value(TrialContext& ctx) {
    ctx.period = 1;
    LearnResult res;
    auto& stream = ctx.stream();
    const std::int64_t tau =
        ctx.rng().binomial(stream.remaining(), ctx.profile().learn_fraction);
    auto agents = stream.take(tau);
    res.sampled = tau;
    double best = 0;
    bool seen = false;
    for (AgentId b : agents) {
        ctx.offer(b, 0.0, 0.0);
        const double v = ctx.instance().oracle().singleton(b);
        if (!seen || v > best) best = v;
        seen = true;
    }
    if (!seen) {
        res.fallback = true;
        best = stream.exhausted() ? 0.0 : ctx.instance().oracle().singleton(stream.peek());
    }
    res.vmax_est = best;
    ctx.set_vmax_est(best, res.fallback);
    return res;
}

// ---------------------------------------------------------------------------
// Period 2: the power tower.

// Endpoint sequence t_1 = vmax, t_2 = base * vmax, t_i = 2^(t_{i-1}/vmax) *
// t_{i-1}, truncated at the first endpoint reaching n * vmax, which becomes
// the final endpoint.
inline std::vector<double> power_tower_build(double vmax, std::int64_t n,
                                             const ConstantsProfile& profile) {
    if (!(vmax > 0)) throw std::invalid_argument("power_tower_build: vmax must be > 0");
    if (n < 2) throw std::invalid_argument("power_tower_build: need n >= 2");
    const double cap = static_cast<double>(n) * vmax;
    const double t2 = profile.tower_base * vmax;
    if (cap <= t2) return {vmax, cap};
    std::vector<double> endpoints{vmax, t2};
    double prev = t2;
    while (true) {
        const double ratio = prev / vmax;
        const double next = (ratio >= 1024.0) ? std::numeric_limits<double>::infinity()
                                              : std::exp2(ratio) * prev;
        if (!(next < cap)) break;
        endpoints.push_back(next);
        prev = next;
    }
    endpoints.push_back(cap);
    return endpoints;
}

inline std::int64_t tower_phase_rounds(const ConstantsProfile& profile, double t_over_vmax) {
    return std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::ceil(profile.phase_len_coeff * std::log2(t_over_vmax))));
}

inline SeqBoundReport check_seq_bound(std::span<const double> tower_endpoints, double vmax,
                                      const ConstantsProfile& profile) {
    return check_seq_bound(tower_endpoints, vmax, profile.goodness_coeff,
                           profile.phase_len_coeff);
}

struct TowerSearchResult {
    std::int64_t index = 0;  // 0-based endpoint index of the last successful phase
    // Both candidate intervals (the pair preceding the index and the pair
    // following it), then the coin-chosen one.
    double lo_min = 0, lo_max = 0;
    double hi_min = 0, hi_max = 0;
    double t_min = 0, t_max = 0;
    bool picked_hi = false;
};

inline TowerSearchResult power_tower_search(TrialContext& ctx, double budget,
                                            std::span<const double> endpoints) {
    if (endpoints.size() < 2)
        throw std::invalid_argument("power_tower_search: need at least two endpoints");
    ctx.period = 2;
    const auto& profile = ctx.profile();
    const double vmax = ctx.vmax_est();
    TowerSearchResult res;
    const std::size_t last = endpoints.size() - 1;
    for (std::size_t i = 1; i < last; ++i) {
        const double t_i = endpoints[i];
        const double a_i = profile.goodness_coeff * vmax / t_i;
        const std::int64_t gamma_i = tower_phase_rounds(profile, t_i / vmax);
        auto phase = test_threshold(ctx, budget, gamma_i, a_i, t_i,
                                    static_cast<std::int64_t>(i));
        if (ctx.aborted()) return res;
        if (phase.hit) res.index = static_cast<std::int64_t>(i);
    }
    const auto idx = static_cast<std::size_t>(res.index);
    if (idx >= 1) {
        res.lo_min = endpoints[idx - 1];
        res.lo_max = endpoints[idx];
    } else {
        res.lo_min = endpoints[0];
        res.lo_max = endpoints[1];
    }
    if (idx + 1 <= last) {
        res.hi_min = endpoints[idx];
        res.hi_max = endpoints[idx + 1];
    } else {
        res.hi_min = endpoints[last - 1];
        res.hi_max = endpoints[last];
    }
    res.picked_hi = ctx.rng().bernoulli(0.5);
    res.t_min = res.picked_hi ? res.hi_min : res.lo_min;
    res.t_max = res.picked_hi ? res.hi_max : res.lo_max;
    return res;
}

// ---------------------------------------------------------------------------
// Periods 3 and 4 share their phase parameters.

struct PhaseParams {
    std::int64_t m = 1;       // rounds per phase
    double a = 1.0 / 6.0;     // length parameter
    std::int64_t loglog = 1;  // ceil(loglog(t_max / t_min)), clamped to >= 1
};

inline PhaseParams bs_phase_params(const ConstantsProfile& profile, double t_min,
                                   double t_max) {
    PhaseParams p;
    const double lg = std::log2(std::max(t_max / t_min, 2.0));
    const double llraw = std::max(std::log2(lg), 0.0);
    p.loglog = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(llraw)));
    p.m = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::ceil(profile.bs_phase_coeff * llraw)));
    p.a = 1.0 / (profile.bs_len_denom * static_cast<double>(p.loglog) *
                 static_cast<double>(p.m));
    return p;
}

struct SearchOverrides {
    std::optional<std::int64_t> m;
    std::optional<double> a;
    RoundLenSource* rounds = nullptr;
};

struct BinarySearchResult {
    double t_init = 0;
    std::int64_t phases = 0;
    bool out_of_rounds = false;
};

// Binary search over exponents: threshold 2^mid * t_min per phase, low moves
// up on a hit, high moves down on a miss. Stops once the bracket collapses to
// one step or after ceil(log2(span)) phases.
inline BinarySearchResult binary_search(TrialContext& ctx, double budget, double t_min,
                                        double t_max, SearchOverrides ov = {}) {
    ctx.period = 3;
    BinarySearchResult res;
    const double ratio = t_max / t_min;
    const std::int64_t high0 =
        (ratio <= 1.0) ? 0 : static_cast<std::int64_t>(std::ceil(std::log2(ratio) - 1e-12));
    if (high0 < 1) {
        res.t_init = t_min;
        return res;
    }
    PhaseParams params = bs_phase_params(ctx.profile(), t_min, t_max);
    const std::int64_t m = ov.m.value_or(params.m);
    const double a = ov.a.value_or(params.a);
    BinomialRounds default_rounds(a);
    RoundLenSource& rounds = ov.rounds ? *ov.rounds : default_rounds;

    std::int64_t low = 0, high = high0;
    std::int64_t mid = (high + low + 1) / 2;  // ceil
    const auto max_phases = static_cast<std::int64_t>(
        std::ceil(std::log2(static_cast<double>(high0 - low + 1))));
    bool last_hit = false;
    do {
        auto phase = test_threshold_with_source(ctx, budget, m, a, std::exp2(mid) * t_min,
                                                rounds, res.phases);
        ++res.phases;
        if (ctx.aborted()) break;
        if (phase.out_of_rounds) {
            res.out_of_rounds = true;
            last_hit = phase.hit;
            break;
        }
        last_hit = phase.hit;
        if (phase.hit) {
            low = mid;
            mid = (high + low + 1) / 2;
        } else {
            high = mid;
            mid = (high + low) / 2;
        }
    } while (high - low > 1 && res.phases < max_phases);
    res.t_init = last_hit ? std::exp2(mid) * t_min : std::exp2(low) * t_min;
    return res;
}

struct ExploitationResult {
    double final_threshold = 0;
    std::int64_t phases = 0;
    std::vector<double> threshold_history;
    bool out_of_rounds = false;
};

// Doubles the threshold after every successful phase and halves it after
// every failed one, never below the profile's price floor.
inline ExploitationResult exploitation(TrialContext& ctx, double budget, double t_init,
                                       double t_min, double t_max, SearchOverrides ov = {}) {
    ctx.period = 4;
    if (!(t_init > 0)) throw std::invalid_argument("exploitation: t_init must be > 0");
    PhaseParams params = bs_phase_params(ctx.profile(), t_min, t_max);
    const std::int64_t m = ov.m.value_or(params.m);
    const double a = ov.a.value_or(params.a);
    BinomialRounds default_rounds(a);
    RoundLenSource& rounds = ov.rounds ? *ov.rounds : default_rounds;
    const double floor_t = ctx.profile().threshold_floor * ctx.vmax_est();

    ExploitationResult res;
    double t_hat = t_init;
    res.threshold_history.push_back(t_hat);
    for (std::int64_t i = 0; i < params.loglog; ++i) {
        auto phase = test_threshold_with_source(ctx, budget, m, a, t_hat, rounds, i);
        if (ctx.aborted()) break;
        ++res.phases;
        if (phase.out_of_rounds) {
            res.out_of_rounds = true;
            break;
        }
        t_hat = phase.hit ? 2.0 * t_hat : std::max(t_hat / 2.0, std::min(floor_t, t_hat));
        res.threshold_history.push_back(t_hat);
    }
    res.final_threshold = t_hat;
    return res;
}

// ---------------------------------------------------------------------------
// LM-Mechanism: the four periods composed.

struct LmOutcome {
    double value = 0;
    double payments = 0;
    AbortReason abort = AbortReason::none;
    double vmax_est = 0;
    bool vmax_fallback = false;
    std::vector<double> tower;
    TowerSearchResult tower_search;
    double bs_min = 0, bs_max = 0;  // interval handed to BinarySearch (after floor)
    double t_init = 0;
    double final_threshold = 0;
    std::int64_t consumed = 0;
    std::int64_t offers = 0, accepts = 0, price_capped = 0;
    std::array<double, 5> spend_by_period{};  // [period]
};

inline LmOutcome lm_mechanism(const Instance& inst, const ConstantsProfile& profile,
                              Rng& rng, TrialHooks hooks = {}) {
    TrialContext ctx(inst, profile, rng, ArrivalStream::uniform(inst.n(), rng), hooks);
    const double B = inst.budget();
    LmOutcome out;

    auto learned = learning_max_value(ctx);
    out.vmax_est = learned.vmax_est;
    out.vmax_fallback = learned.fallback;
    out.spend_by_period[1] = ctx.payments_total();

    if (learned.vmax_est > 0 && !ctx.aborted()) {
        out.tower = power_tower_build(learned.vmax_est, inst.n(), profile);
        out.tower_search = power_tower_search(ctx, B, out.tower);
        out.spend_by_period[2] = ctx.payments_total() - out.spend_by_period[1];

        if (!ctx.aborted()) {
            // The mechanism never prices below floor * vmax; clamp the search
            // interval accordingly.
            const double floor_t = profile.threshold_floor * learned.vmax_est;
            out.bs_min = std::min(std::max(out.tower_search.t_min, floor_t),
                                  out.tower_search.t_max);
            out.bs_max = out.tower_search.t_max;
            auto bs = binary_search(ctx, B, out.bs_min, out.bs_max);
            out.t_init = bs.t_init;
            out.spend_by_period[3] =
                ctx.payments_total() - out.spend_by_period[1] - out.spend_by_period[2];

            if (!ctx.aborted()) {
                auto ex = exploitation(ctx, B, bs.t_init, out.bs_min, out.bs_max);
                out.final_threshold = ex.final_threshold;
                out.spend_by_period[4] = ctx.payments_total() - out.spend_by_period[1] -
                                         out.spend_by_period[2] - out.spend_by_period[3];
            }
        }
    }

    out.value = ctx.value();
    out.payments = ctx.payments_total();
    out.abort = ctx.abort();
    out.consumed = ctx.stream().consumed();
    out.offers = ctx.offers_made;
    out.accepts = ctx.offers_accepted;
    out.price_capped = ctx.price_capped;
    return out;
}

// ---------------------------------------------------------------------------
// Fixed-threshold linear pricing: offers f_S(b) * B / t_hat to every agent
// left in the stream; agents whose price no longer fits the remaining budget
// are passed over.

inline double linear_pricing_fixed(TrialContext& ctx, double t_hat) {
    if (!(t_hat > 0)) throw std::invalid_argument("linear_pricing_fixed: t_hat must be > 0");
    const double B = ctx.budget();
    const double before = ctx.value();
    auto& stream = ctx.stream();
    std::int64_t round = 0;
    while (!stream.exhausted()) {
        const AgentId b = stream.take(1)[0];
        const double marg = ctx.solution().marginal(b);
        const double price = marg * B / t_hat;
        if (price > ctx.budget_remaining()) {
            ++ctx.price_capped;
            continue;
        }
        ctx.offer(b, price, t_hat, 0, round++);
    }
    return ctx.value() - before;
}

inline double linear_pricing_fixed(const Instance& inst, double t_hat, Rng& rng,
                                   TrialHooks hooks = {}) {
    ConstantsProfile profile = ConstantsProfile::defaults();
    TrialContext ctx(inst, profile, rng, ArrivalStream::uniform(inst.n(), rng), hooks);
    ctx.set_vmax_est(inst.oracle().vmax());
    return linear_pricing_fixed(ctx, t_hat);
}

// ---------------------------------------------------------------------------
// Dynkin's secretary rule: watch floor(n/e) agents, then hand the whole
// budget to the first agent whose (public) singleton value beats everything
// observed. One offer total.

struct DynkinOutcome {
    double value = 0;
    double payments = 0;
    bool offered = false;
    AgentId picked = -1;
};

inline DynkinOutcome dynkin(TrialContext& ctx) {
    ctx.period = 0;
    DynkinOutcome out;
    auto& stream = ctx.stream();
    const std::int64_t n = stream.remaining();
    const auto sample = static_cast<std::int64_t>(std::floor(static_cast<double>(n) /
                                                             2.718281828459045));
    double best = -1;
    for (AgentId b : stream.take(sample))
        best = std::max(best, ctx.instance().oracle().singleton(b));
    while (!stream.exhausted()) {
        const AgentId b = stream.take(1)[0];
        if (ctx.instance().oracle().singleton(b) > best) {
            out.offered = true;
            out.picked = b;
            if (ctx.budget() <= ctx.budget_remaining())
                ctx.offer(b, ctx.budget(), 0.0);
            break;
        }
    }
    out.value = ctx.value();
    out.payments = ctx.payments_total();
    return out;
}

inline DynkinOutcome dynkin(const Instance& inst, Rng& rng, TrialHooks hooks = {}) {
    ConstantsProfile profile = ConstantsProfile::defaults();
    TrialContext ctx(inst, profile, rng, ArrivalStream::uniform(inst.n(), rng), hooks);
    ctx.set_vmax_est(inst.oracle().vmax());
    return dynkin(ctx);
}

// ---------------------------------------------------------------------------
// MediumMarket: learn vmax, then fixed linear pricing at a threshold
// 2^e * vmax with e uniform over {medium_exp_lo, ..., medium_exp_hi}.

inline std::vector<double> medium_thresholds(double vmax, const ConstantsProfile& profile) {
    std::vector<double> ts;
    for (int e = profile.medium_exp_lo; e <= profile.medium_exp_hi; ++e)
        ts.push_back(std::exp2(e) * vmax);
    return ts;
}

struct MediumMarketOutcome {
    double value = 0;
    double payments = 0;
    double vmax_est = 0;
    int exponent = 0;
    double threshold = 0;
};

inline MediumMarketOutcome medium_market(TrialContext& ctx) {
    MediumMarketOutcome out;
    auto learned = learning_max_value(ctx);
    out.vmax_est = learned.vmax_est;
    ctx.period = 0;
    if (learned.vmax_est > 0) {
        const auto& profile = ctx.profile();
        const auto span = static_cast<std::uint64_t>(profile.medium_exp_hi -
                                                     profile.medium_exp_lo + 1);
        out.exponent = profile.medium_exp_lo + static_cast<int>(ctx.rng().below(span));
        out.threshold = std::exp2(out.exponent) * learned.vmax_est;
        linear_pricing_fixed(ctx, out.threshold);
    }
    out.value = ctx.value();
    out.payments = ctx.payments_total();
    return out;
}

inline MediumMarketOutcome medium_market(const Instance& inst, const ConstantsProfile& profile,
                                         Rng& rng, TrialHooks hooks = {}) {
    TrialContext ctx(inst, profile, rng, ArrivalStream::uniform(inst.n(), rng), hooks);
    return medium_market(ctx);
}

// ---------------------------------------------------------------------------
// PostedPrices: the top-level wrapper mixing the three mechanisms.

enum class WrapperBranch { dynkin, medium_market, lm };

inline const char* to_string(WrapperBranch b) {
    switch (b) {
        case WrapperBranch::dynkin: return "dynkin";
        case WrapperBranch::medium_market: return "medium-market";
        case WrapperBranch::lm: return "lm";
    }
    return "?";
}

struct WrapperOutcome {
    WrapperBranch branch = WrapperBranch::lm;
    double value = 0;
    double payments = 0;
    AbortReason abort = AbortReason::none;
    std::optional<LmOutcome> lm;
};

inline WrapperOutcome posted_prices(const Instance& inst, const ConstantsProfile& profile,
                                    Rng& rng, TrialHooks hooks = {}) {
    WrapperOutcome out;
    const double u = rng.next_unit();
    if (u < profile.wrapper_probs[0]) {
        out.branch = WrapperBranch::dynkin;
        TrialContext ctx(inst, profile, rng, ArrivalStream::uniform(inst.n(), rng), hooks);
        ctx.set_vmax_est(inst.oracle().vmax());
        auto r = dynkin(ctx);
        out.value = r.value;
        out.payments = r.payments;
    } else if (u < profile.wrapper_probs[0] + profile.wrapper_probs[1]) {
        out.branch = WrapperBranch::medium_market;
        auto r = medium_market(inst, profile, rng, hooks);
        out.value = r.value;
        out.payments = r.payments;
    } else {
        out.branch = WrapperBranch::lm;
        auto r = lm_mechanism(inst, profile, rng, hooks);
        out.value = r.value;
        out.payments = r.payments;
        out.abort = r.abort;
        out.lm = std::move(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// The non-adaptive benchmark: fixed price B / 2^i against the lower-bound
// distribution. E[ALG] stays near 1 for every price index while E[OPT] grows
// with log n.

struct NonAdaptiveRow {
    std::int64_t price_index = 0;
    double mean_value = 0;
    std::int64_t trials = 0;
};

struct NonAdaptiveTable {
    double expected_opt_closed_form = 0;
    double empirical_mean_opt = 0;
    std::vector<NonAdaptiveRow> rows;
};

// Each (sampled instance, price index) pass is a stand-alone mechanism run;
// the observer sees a trial-start notification per pass.
inline NonAdaptiveTable non_adaptive_experiment(std::int64_t n, double budget,
                                                std::int64_t trials, Rng& rng,
                                                std::span<const std::int64_t> price_indices,
                                                OfferObserver* observer = nullptr) {
    LowerBoundDistribution dist(n, budget);
    const std::int64_t log_n = dist.log_n();
    std::vector<Instance> support;
    for (std::int64_t i = 0; i <= log_n; ++i)
        support.push_back(gen_lower_bound_instance(i, n, budget));

    NonAdaptiveTable table;
    table.expected_opt_closed_form = dist.expected_opt();
    std::vector<double> sums(price_indices.size(), 0.0);
    double opt_sum = 0;
    ConstantsProfile profile = ConstantsProfile::defaults();
    for (std::int64_t t = 0; t < trials; ++t) {
        const std::int64_t j = dist.sample_index(rng);
        opt_sum += std::exp2(static_cast<double>(j));
        const Instance& inst = support[static_cast<std::size_t>(j)];
        for (std::size_t pi = 0; pi < price_indices.size(); ++pi) {
            // Arrival order is immaterial here: all agents of I_j are identical.
            TrialHooks hooks;
            hooks.observer = observer;
            TrialContext ctx(inst, profile, rng, ArrivalStream::identity(inst.n()), hooks);
            ctx.set_vmax_est(1.0);
            const double t_hat = std::exp2(static_cast<double>(price_indices[pi]));
            linear_pricing_fixed(ctx, t_hat);
            sums[pi] += ctx.value();
        }
    }
    table.empirical_mean_opt = opt_sum / static_cast<double>(trials);
    for (std::size_t pi = 0; pi < price_indices.size(); ++pi)
        table.rows.push_back({price_indices[pi], sums[pi] / static_cast<double>(trials), trials});
    return table;
}

}  // namespace procure
