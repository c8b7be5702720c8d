#pragma once

// Monte Carlo harness: seeded experiment configs, per-trial audits (the only
// code besides offline_opt that may read costs), event accounting for
// E1..E5, and summary statistics. Trials are independent work items; records
// are written into pre-sized slots so results are identical for any --jobs.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "procure/instance.hpp"
#include "procure/mechanisms.hpp"
#include "procure/offline_opt.hpp"
#include "procure/prediction.hpp"

namespace procure {

// ---------------------------------------------------------------------------
// Statistics helpers.

struct WilsonInterval {
    double point = 0, lo = 0, hi = 0;
};

inline WilsonInterval wilson_interval(std::int64_t successes, std::int64_t trials,
                                      double z = 1.959963984540054) {
    WilsonInterval w;
    if (trials <= 0) return w;
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    w.point = p;
    w.lo = std::max(0.0, center - half);
    w.hi = std::min(1.0, center + half);
    return w;
}

inline double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// One-sided Wilcoxon rank-sum (Mann-Whitney): p-value for H1 "x tends to be
// larger than y", normal approximation with midranks and tie correction.
inline double wilcoxon_one_sided_p(std::span<const double> x, std::span<const double> y) {
    const std::size_t nx = x.size(), ny = y.size();
    if (nx == 0 || ny == 0) throw std::invalid_argument("wilcoxon: empty sample");
    struct Obs {
        double v;
        bool from_x;
    };
    std::vector<Obs> all;
    all.reserve(nx + ny);
    for (double v : x) all.push_back({v, true});
    for (double v : y) all.push_back({v, false});
    std::sort(all.begin(), all.end(), [](const Obs& a, const Obs& b) { return a.v < b.v; });

    double rank_sum_x = 0;
    double tie_term = 0;
    std::size_t i = 0;
    while (i < all.size()) {
        std::size_t j = i;
        while (j < all.size() && all[j].v == all[i].v) ++j;
        const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        const auto t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].from_x) rank_sum_x += mid_rank;
        i = j;
    }
    const double dnx = static_cast<double>(nx), dny = static_cast<double>(ny);
    const double n = dnx + dny;
    const double u = rank_sum_x - dnx * (dnx + 1.0) / 2.0;
    const double mean_u = dnx * dny / 2.0;
    const double var_u =
        dnx * dny / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var_u <= 0) return u > mean_u ? 0.0 : 1.0;
    const double z = (u - mean_u - 0.5) / std::sqrt(var_u);
    return normal_upper_tail(z);
}

inline double chi_squared_statistic(std::span<const std::int64_t> observed,
                                    std::span<const double> probs, std::int64_t trials) {
    if (observed.size() != probs.size())
        throw std::invalid_argument("chi_squared: size mismatch");
    double stat = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double expect = probs[i] * static_cast<double>(trials);
        const double diff = static_cast<double>(observed[i]) - expect;
        stat += diff * diff / expect;
    }
    return stat;
}

// ---------------------------------------------------------------------------
// Audits. TrialAudit rides along as the offer observer of one trial; at the
// end the harness folds its counters into the run totals. A nonzero counter
// anywhere fails the run.

struct AuditCounters {
    std::int64_t offers = 0;
    std::int64_t ir_violations = 0;           // accepted but paid < cost
    std::int64_t accept_rule_violations = 0;  // accept bit != (price >= cost)
    std::int64_t linear_form_violations = 0;  // price != marginal * B / t_hat
    std::int64_t budget_violations = 0;       // payments exceeded B

    void merge(const AuditCounters& other) {
        offers += other.offers;
        ir_violations += other.ir_violations;
        accept_rule_violations += other.accept_rule_violations;
        linear_form_violations += other.linear_form_violations;
        budget_violations += other.budget_violations;
    }
    std::int64_t total_violations() const {
        return ir_violations + accept_rule_violations + linear_form_violations +
               budget_violations;
    }
};

class TrialAudit final : public OfferObserver {
public:
    void on_trial_start(const Instance&) override { paid_total_ = 0; }

    void on_offer(const Instance& inst, const OfferEvent& ev) override {
        ++counters_.offers;
        const double cost = CostAudit::cost(inst, ev.agent);
        if (ev.accepted != (ev.price >= cost)) ++counters_.accept_rule_violations;
        if (ev.accepted && ev.paid < cost - 1e-12 * std::max(1.0, cost))
            ++counters_.ir_violations;
        if (ev.threshold > 0) {
            const double expect = ev.marginal * inst.budget() / ev.threshold;
            const double scale = std::max({1.0, std::abs(expect), std::abs(ev.price)});
            if (std::abs(ev.price - expect) > 1e-12 * scale)
                ++counters_.linear_form_violations;
        }
        paid_total_ += ev.paid;
        if (paid_total_ > inst.budget() * (1.0 + 1e-12) + 1e-12)
            ++counters_.budget_violations;
    }

    const AuditCounters& counters() const { return counters_; }
    double paid_total() const { return paid_total_; }

private:
    AuditCounters counters_;
    double paid_total_ = 0;
};

// Replays a ledger against the instance, recomputing marginals and prices
// independently of the mechanism path that produced them.
inline AuditCounters replay_ledger(const Instance& inst, std::span<const OfferEvent> ledger) {
    AuditCounters counters;
    SolutionState sol(inst.oracle());
    double paid = 0;
    for (const auto& ev : ledger) {
        ++counters.offers;
        const double cost = CostAudit::cost(inst, ev.agent);
        const double marg = sol.marginal(ev.agent);
        if (ev.threshold > 0) {
            const double expect = marg * inst.budget() / ev.threshold;
            const double scale = std::max({1.0, std::abs(expect), std::abs(ev.price)});
            if (std::abs(ev.price - expect) > 1e-12 * scale)
                ++counters.linear_form_violations;
        }
        if (ev.accepted != (ev.price >= cost)) ++counters.accept_rule_violations;
        if (ev.accepted) {
            if (ev.paid < cost - 1e-12 * std::max(1.0, cost)) ++counters.ir_violations;
            paid += ev.paid;
            sol.add(ev.agent);
        }
    }
    if (paid > inst.budget() * (1.0 + 1e-12) + 1e-12) ++counters.budget_violations;
    return counters;
}

// ---------------------------------------------------------------------------
// Experiment configuration.

enum class MechanismKind {
    posted_prices,
    lm,
    dynkin,
    medium_market,
    linear_fixed,
    prediction,
    mutant_overpay  // audit-sensitivity fixture: deliberately overpays
};

inline const char* to_string(MechanismKind m) {
    switch (m) {
        case MechanismKind::posted_prices: return "posted-prices";
        case MechanismKind::lm: return "lm";
        case MechanismKind::dynkin: return "dynkin";
        case MechanismKind::medium_market: return "medium-market";
        case MechanismKind::linear_fixed: return "linear-fixed";
        case MechanismKind::prediction: return "prediction";
        case MechanismKind::mutant_overpay: return "mutant-overpay";
    }
    return "?";
}

inline MechanismKind mechanism_from_string(const std::string& s) {
    if (s == "posted-prices") return MechanismKind::posted_prices;
    if (s == "lm") return MechanismKind::lm;
    if (s == "dynkin") return MechanismKind::dynkin;
    if (s == "medium-market") return MechanismKind::medium_market;
    if (s == "linear-fixed") return MechanismKind::linear_fixed;
    if (s == "prediction") return MechanismKind::prediction;
    if (s == "mutant-overpay") return MechanismKind::mutant_overpay;
    throw std::invalid_argument("unknown mechanism: " + s);
}

struct FamilyConfig {
    std::string kind = "uniform_additive";  // or random_additive, heavy_tail_additive,
                                            // coverage, concave, distinct_additive
    std::int64_t n = 1 << 14;
    std::int64_t k_target = 1 << 10;
    double budget = 1.0;
    std::int64_t cover_degree = 10;

    nlohmann::json to_json() const {
        return {{"kind", kind},
                {"n", n},
                {"k_target", k_target},
                {"budget", budget},
                {"cover_degree", cover_degree}};
    }
    static FamilyConfig from_json(const nlohmann::json& j) {
        FamilyConfig f;
        f.kind = j.value("kind", f.kind);
        f.n = j.value("n", f.n);
        f.k_target = j.value("k_target", f.k_target);
        f.budget = j.value("budget", f.budget);
        f.cover_degree = j.value("cover_degree", f.cover_degree);
        return f;
    }
};

inline Instance build_family_instance(const FamilyConfig& f, Rng& rng) {
    if (f.kind == "uniform_additive")
        return gen_large_market(OracleKind::additive, f.n, f.k_target, CostModel::uniform,
                                f.budget, rng);
    if (f.kind == "random_additive")
        return gen_large_market(OracleKind::additive, f.n, f.k_target,
                                CostModel::uniform_random, f.budget, rng);
    if (f.kind == "heavy_tail_additive")
        return gen_large_market(OracleKind::additive, f.n, f.k_target, CostModel::heavy_tail,
                                f.budget, rng);
    if (f.kind == "coverage")
        return gen_large_market(OracleKind::coverage, f.n, f.k_target, CostModel::uniform,
                                f.budget, rng, f.cover_degree);
    if (f.kind == "concave")
        return gen_large_market(OracleKind::concave_cardinality, f.n, f.k_target,
                                CostModel::uniform, f.budget, rng);
    if (f.kind == "distinct_additive") {
        // Distinct singleton values, every agent affordable: Dynkin's habitat.
        std::vector<double> weights(static_cast<std::size_t>(f.n));
        for (std::int64_t i = 0; i < f.n; ++i)
            weights[static_cast<std::size_t>(i)] =
                1.0 + static_cast<double>(i) / static_cast<double>(f.n);
        std::vector<double> costs(static_cast<std::size_t>(f.n));
        for (auto& c : costs) c = rng.uniform(0.0, f.budget);
        return Instance(ValuationOracle::additive(std::move(weights)), std::move(costs),
                        f.budget);
    }
    throw std::invalid_argument("unknown family kind: " + f.kind);
}

struct ExperimentConfig {
    FamilyConfig family;
    MechanismKind mechanism = MechanismKind::posted_prices;
    std::string profile_name = "default";
    std::int64_t trials = 100;
    std::uint64_t master_seed = 1;
    int jobs = 1;
    bool per_trial_instance = false;
    bool collect_ledger = false;
    double fixed_threshold = 0;  // for linear-fixed
    double prediction_threshold = 0;  // for prediction; 0 = derive from OPT/10
    std::string records_path;
    std::string summary_path;
    std::string ledger_path;

    ConstantsProfile profile() const { return ConstantsProfile::from_name(profile_name); }

    nlohmann::json to_json() const {
        return {{"family", family.to_json()},
                {"mechanism", to_string(mechanism)},
                {"profile", profile_name},
                {"trials", trials},
                {"master_seed", master_seed},
                {"jobs", jobs},
                {"per_trial_instance", per_trial_instance},
                {"collect_ledger", collect_ledger},
                {"fixed_threshold", fixed_threshold},
                {"prediction_threshold", prediction_threshold}};
    }

    static ExperimentConfig from_json(const nlohmann::json& j) {
        ExperimentConfig c;
        if (j.contains("family")) c.family = FamilyConfig::from_json(j.at("family"));
        c.mechanism = mechanism_from_string(j.value("mechanism", std::string("posted-prices")));
        c.profile_name = j.value("profile", std::string("default"));
        c.trials = j.value("trials", c.trials);
        c.master_seed = j.value("master_seed", c.master_seed);
        c.jobs = j.value("jobs", c.jobs);
        c.per_trial_instance = j.value("per_trial_instance", c.per_trial_instance);
        c.collect_ledger = j.value("collect_ledger", c.collect_ledger);
        c.fixed_threshold = j.value("fixed_threshold", c.fixed_threshold);
        c.prediction_threshold = j.value("prediction_threshold", c.prediction_threshold);
        ConstantsProfile::from_name(c.profile_name);  // validate
        if (c.trials < 1) throw std::invalid_argument("config: trials must be >= 1");
        return c;
    }
};

// ---------------------------------------------------------------------------
// Trial records and event accounting.

struct EventFlags {
    bool known = false;
    bool e1 = false, e2 = false, e3 = false, e4 = false, e5 = false;
    bool e3_known = false;
    bool all() const { return e1 && e2 && e3 && e4 && e5; }
};

struct TrialRecord {
    std::int64_t trial = 0;
    std::string branch;
    double value = 0;
    double payments = 0;
    double opt_value = 0;
    std::string opt_kind;
    EventFlags events;
    std::string abort = "none";
    double vmax_est = 0;
    double t_init = 0;
    double phase_b_value = 0;  // prediction only
    std::int64_t consumed = 0;

    nlohmann::json to_json() const {
        nlohmann::json j{{"trial", trial},
                         {"branch", branch},
                         {"value", value},
                         {"payments", payments},
                         {"opt", opt_value},
                         {"opt_kind", opt_kind},
                         {"abort", abort},
                         {"vmax_est", vmax_est},
                         {"t_init", t_init},
                         {"consumed", consumed}};
        if (events.known) {
            j["events"] = {{"e1", events.e1},
                           {"e2", events.e2},
                           {"e4", events.e4},
                           {"e5", events.e5},
                           {"e", events.all()}};
            if (events.e3_known) j["events"]["e3"] = events.e3;
        }
        if (branch == "prediction") j["phase_b_value"] = phase_b_value;
        return j;
    }
};

namespace detail {

// Closed-form density check for uniform additive families: the round optimum
// under budget 3*C*a*B is min(drawn, floor(budget / cost)) unit values.
inline bool round_dense_uniform(const RoundLogEntry& r, double C, double opt, double budget,
                                double unit_cost, double unit_weight) {
    const double round_budget = 3.0 * C * r.length_param * budget;
    const double affordable =
        unit_cost > 0 ? std::floor(round_budget / unit_cost + 1e-9)
                      : static_cast<double>(r.drawn);
    const double opt_round =
        std::min(static_cast<double>(r.drawn), affordable) * unit_weight;
    return opt_round >= C * r.length_param * opt;
}

}  // namespace detail

inline EventFlags compute_lm_events(const Instance& inst, const LmOutcome& lm,
                                    const ConstantsProfile& profile, double opt_value,
                                    const std::vector<RoundLogEntry>* round_log) {
    EventFlags ev;
    ev.known = true;
    const double true_vmax = inst.oracle().vmax();
    ev.e1 = !lm.vmax_fallback && lm.vmax_est >= true_vmax * (1.0 - 1e-12);
    const double target = opt_value / 8.0;
    const auto& ts = lm.tower_search;
    auto contains = [](double lo, double hi, double x) { return lo <= x && x <= hi; };
    ev.e2 = contains(ts.lo_min, ts.lo_max, target) || contains(ts.hi_min, ts.hi_max, target);
    ev.e5 = ev.e2 && contains(ts.t_min, ts.t_max, target);
    ev.e4 = lm.consumed < inst.n();

    // E3 needs each round's restricted optimum; only uniform additive
    // instances admit the closed form.
    const auto& costs = CostAudit::costs(inst);
    bool uniform = inst.oracle().kind() == OracleKind::additive && inst.n() > 0;
    if (uniform) {
        for (double c : costs)
            if (c != costs[0]) { uniform = false; break; }
        const auto& w = inst.oracle().weights();
        for (double wi : w)
            if (wi != w[0]) { uniform = false; break; }
    }
    if (uniform && round_log) {
        ev.e3_known = true;
        ev.e3 = true;
        struct PhaseTally {
            std::int64_t rounds = 0, dense = 0;
        };
        std::vector<std::pair<std::pair<int, std::int64_t>, PhaseTally>> phases;
        for (const auto& r : *round_log) {
            if (r.period != 3 && r.period != 4) continue;
            const bool dense = detail::round_dense_uniform(
                r, profile.C, opt_value, inst.budget(), costs[0], inst.oracle().weights()[0]);
            auto key = std::make_pair(r.period, r.phase);
            auto it = std::find_if(phases.begin(), phases.end(),
                                   [&](const auto& p) { return p.first == key; });
            if (it == phases.end()) {
                phases.push_back({key, {}});
                it = std::prev(phases.end());
            }
            ++it->second.rounds;
            if (dense) ++it->second.dense;
        }
        for (const auto& [key, tally] : phases)
            if (2 * tally.dense < tally.rounds) ev.e3 = false;
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Summary.

struct EventFrequencyRow {
    std::string name;
    std::int64_t successes = 0;
    std::int64_t trials = 0;
    WilsonInterval wilson;
};

struct Summary {
    std::int64_t trials = 0;
    double mean_value = 0;
    double mean_payments = 0;
    double mean_opt = 0;
    double value_over_opt = 0;  // E[value] / E[OPT]
    double opt_over_value = 0;  // E[OPT] / E[value]; inf when no value collected
    std::string opt_kind;
    std::vector<EventFrequencyRow> events;
    std::int64_t positive_value = 0;
    std::int64_t aborted = 0;
    std::vector<std::pair<std::string, std::int64_t>> abort_breakdown;
    std::int64_t non_aborted_lm = 0;
    std::int64_t lm_spend_within_tenth = 0;  // spend <= B/10 among non-aborted lm trials
    AuditCounters audit;
    std::array<std::int64_t, 3> branch_counts{};  // dynkin, medium, lm

    nlohmann::json to_json() const {
        nlohmann::json ev = nlohmann::json::array();
        for (const auto& row : events)
            ev.push_back({{"event", row.name},
                          {"frequency", row.wilson.point},
                          {"wilson_lo", row.wilson.lo},
                          {"wilson_hi", row.wilson.hi},
                          {"successes", row.successes},
                          {"trials", row.trials}});
        nlohmann::json ab = nlohmann::json::array();
        for (const auto& [name, count] : abort_breakdown)
            ab.push_back({{"reason", name}, {"count", count}});
        return {{"trials", trials},
                {"mean_value", mean_value},
                {"mean_payments", mean_payments},
                {"mean_opt", mean_opt},
                {"value_over_opt", value_over_opt},
                {"opt_over_value", opt_over_value},
                {"opt_kind", opt_kind},
                {"events", ev},
                {"positive_value", positive_value},
                {"aborted", aborted},
                {"abort_breakdown", ab},
                {"non_aborted_lm", non_aborted_lm},
                {"lm_spend_within_tenth", lm_spend_within_tenth},
                {"branch_counts",
                 {{"dynkin", branch_counts[0]},
                  {"medium-market", branch_counts[1]},
                  {"lm", branch_counts[2]}}},
                {"audit",
                 {{"offers", audit.offers},
                  {"ir_violations", audit.ir_violations},
                  {"accept_rule_violations", audit.accept_rule_violations},
                  {"linear_form_violations", audit.linear_form_violations},
                  {"budget_violations", audit.budget_violations}}}};
    }
};

struct ExperimentResult {
    Summary summary;
    std::vector<TrialRecord> records;
    std::vector<std::vector<OfferEvent>> ledgers;  // only when collect_ledger
    bool audit_ok() const { return summary.audit.total_violations() == 0; }
};

// ---------------------------------------------------------------------------
// The runner.

inline OptEstimate estimate_opt(const Instance& inst) {
    try {
        return opt_closed_form(inst);
    } catch (const std::invalid_argument&) {
    }
    if (inst.n() <= 20) return opt_exact(inst);
    return opt_greedy(inst);
}

namespace detail {

inline TrialRecord run_one_trial(const ExperimentConfig& cfg, const Instance& shared_inst,
                                 double shared_opt, const std::string& shared_opt_kind,
                                 std::int64_t trial, AuditCounters& audit_out,
                                 std::vector<OfferEvent>* ledger_out) {
    Rng rng = Rng::for_trial(cfg.master_seed, static_cast<std::uint64_t>(trial));
    const ConstantsProfile profile = cfg.profile();

    std::optional<Instance> local_inst;
    const Instance* inst = &shared_inst;
    double opt_value = shared_opt;
    std::string opt_kind = shared_opt_kind;
    if (cfg.per_trial_instance) {
        local_inst.emplace(build_family_instance(cfg.family, rng));
        inst = &*local_inst;
        auto est = estimate_opt(*inst);
        opt_value = est.value;
        opt_kind = to_string(est.kind);
    }

    TrialAudit audit;
    std::vector<RoundLogEntry> round_log;
    TrialHooks hooks;
    hooks.observer = &audit;
    hooks.round_log = &round_log;
    hooks.ledger = ledger_out;

    TrialRecord rec;
    rec.trial = trial;
    rec.opt_value = opt_value;
    rec.opt_kind = opt_kind;

    switch (cfg.mechanism) {
        case MechanismKind::posted_prices: {
            auto r = posted_prices(*inst, profile, rng, hooks);
            rec.branch = to_string(r.branch);
            rec.value = r.value;
            rec.payments = r.payments;
            rec.abort = to_string(r.abort);
            if (r.lm) {
                rec.events = compute_lm_events(*inst, *r.lm, profile, opt_value, &round_log);
                rec.vmax_est = r.lm->vmax_est;
                rec.t_init = r.lm->t_init;
                rec.consumed = r.lm->consumed;
            }
            break;
        }
        case MechanismKind::lm: {
            auto r = lm_mechanism(*inst, profile, rng, hooks);
            rec.branch = "lm";
            rec.value = r.value;
            rec.payments = r.payments;
            rec.abort = to_string(r.abort);
            rec.events = compute_lm_events(*inst, r, profile, opt_value, &round_log);
            rec.vmax_est = r.vmax_est;
            rec.t_init = r.t_init;
            rec.consumed = r.consumed;
            break;
        }
        case MechanismKind::dynkin: {
            auto r = dynkin(*inst, rng, hooks);
            rec.branch = "dynkin";
            rec.value = r.value;
            rec.payments = r.payments;
            break;
        }
        case MechanismKind::medium_market: {
            auto r = medium_market(*inst, profile, rng, hooks);
            rec.branch = "medium-market";
            rec.value = r.value;
            rec.payments = r.payments;
            rec.vmax_est = r.vmax_est;
            break;
        }
        case MechanismKind::linear_fixed: {
            TrialContext ctx(*inst, profile, rng, ArrivalStream::uniform(inst->n(), rng),
                             hooks);
            ctx.set_vmax_est(inst->oracle().vmax());
            const double t_hat =
                cfg.fixed_threshold > 0 ? cfg.fixed_threshold : opt_value / 2.0;
            linear_pricing_fixed(ctx, t_hat);
            rec.branch = "linear-fixed";
            rec.value = ctx.value();
            rec.payments = ctx.payments_total();
            rec.consumed = ctx.stream().consumed();
            break;
        }
        case MechanismKind::prediction: {
            PredictionConfig pcfg = PredictionConfig::for_market(
                inst->n(),
                cfg.prediction_threshold > 0 ? cfg.prediction_threshold : opt_value / 10.0);
            auto r = prediction_mechanism(*inst, pcfg, profile, rng, hooks);
            rec.branch = "prediction";
            rec.value = r.value;
            rec.payments = r.payments;
            rec.abort = to_string(r.abort);
            rec.phase_b_value = r.phase_b_value;
            rec.t_init = r.t_init;
            rec.consumed = r.consumed;
            break;
        }
        case MechanismKind::mutant_overpay: {
            // Fixture: overpay every acceptance by 40% with no budget guard.
            TrialContext ctx(*inst, profile, rng, ArrivalStream::uniform(inst->n(), rng),
                             hooks);
            ctx.set_vmax_est(inst->oracle().vmax());
            ctx.unsafe_allow_overspend = true;
            const double t_hat = opt_value > 0 ? opt_value / 2.0 : 1.0;
            auto& stream = ctx.stream();
            while (!stream.exhausted()) {
                const AgentId b = stream.take(1)[0];
                const double marg = ctx.solution().marginal(b);
                ctx.offer(b, 1.4 * marg * inst->budget() / t_hat, t_hat);
            }
            rec.branch = "mutant-overpay";
            rec.value = ctx.value();
            rec.payments = ctx.payments_total();
            break;
        }
    }
    audit_out = audit.counters();
    return rec;
}

}  // namespace detail

// The shared instance of an experiment (regenerated per trial when
// per_trial_instance is set, in which case this is trial 0's template).
inline Instance experiment_instance(const ExperimentConfig& cfg) {
    Rng gen_rng(cfg.master_seed ^ 0x5EEDF00Dull);
    return build_family_instance(cfg.family, gen_rng);
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    Instance shared = experiment_instance(cfg);
    auto shared_opt = estimate_opt(shared);
    const std::string shared_opt_kind = to_string(shared_opt.kind);

    ExperimentResult result;
    result.records.resize(static_cast<std::size_t>(cfg.trials));
    std::vector<AuditCounters> audits(static_cast<std::size_t>(cfg.trials));
    if (cfg.collect_ledger) result.ledgers.resize(static_cast<std::size_t>(cfg.trials));

    const int jobs = std::max(1, cfg.jobs);
    std::atomic<std::int64_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::int64_t t = next.fetch_add(1);
            if (t >= cfg.trials) break;
            auto idx = static_cast<std::size_t>(t);
            result.records[idx] = detail::run_one_trial(
                cfg, shared, shared_opt.value, shared_opt_kind, t, audits[idx],
                cfg.collect_ledger ? &result.ledgers[idx] : nullptr);
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // Aggregation.
    Summary& s = result.summary;
    s.trials = cfg.trials;
    s.opt_kind = shared_opt_kind;
    double value_sum = 0, pay_sum = 0, opt_sum = 0;
    std::int64_t e1 = 0, e2 = 0, e3 = 0, e4 = 0, e5 = 0, e_all = 0, flagged = 0, e3_known = 0;
    for (std::size_t i = 0; i < result.records.size(); ++i) {
        const auto& r = result.records[i];
        s.audit.merge(audits[i]);
        value_sum += r.value;
        pay_sum += r.payments;
        opt_sum += r.opt_value;
        if (r.value > 0) ++s.positive_value;
        if (r.abort != "none") {
            ++s.aborted;
            auto it = std::find_if(s.abort_breakdown.begin(), s.abort_breakdown.end(),
                                   [&](const auto& p) { return p.first == r.abort; });
            if (it == s.abort_breakdown.end())
                s.abort_breakdown.push_back({r.abort, 1});
            else
                ++it->second;
        }
        if (r.branch == "dynkin") ++s.branch_counts[0];
        if (r.branch == "medium-market") ++s.branch_counts[1];
        if (r.branch == "lm") {
            ++s.branch_counts[2];
            if (r.abort == "none") {
                ++s.non_aborted_lm;
                const double b = cfg.family.budget;
                if (r.payments <= b / 10.0 + 1e-12) ++s.lm_spend_within_tenth;
            }
        }
        if (r.events.known) {
            ++flagged;
            e1 += r.events.e1;
            e2 += r.events.e2;
            e4 += r.events.e4;
            e5 += r.events.e5;
            if (r.events.e3_known) {
                ++e3_known;
                e3 += r.events.e3;
                e_all += r.events.all();
            }
        }
    }
    s.mean_value = value_sum / static_cast<double>(cfg.trials);
    s.mean_payments = pay_sum / static_cast<double>(cfg.trials);
    s.mean_opt = opt_sum / static_cast<double>(cfg.trials);
    s.value_over_opt = s.mean_opt > 0 ? s.mean_value / s.mean_opt : 0;
    s.opt_over_value = s.mean_value > 0 ? s.mean_opt / s.mean_value
                                        : std::numeric_limits<double>::infinity();
    if (flagged > 0) {
        auto row = [&](const char* name, std::int64_t succ, std::int64_t tr) {
            s.events.push_back({name, succ, tr, wilson_interval(succ, tr)});
        };
        row("E1", e1, flagged);
        row("E2", e2, flagged);
        if (e3_known > 0) row("E3", e3, e3_known);
        row("E4", e4, flagged);
        row("E5", e5, flagged);
        if (e3_known > 0) row("E", e_all, e3_known);
    }
    return result;
}

// Event frequency table over an existing record set.
inline std::vector<EventFrequencyRow> event_frequencies(std::span<const TrialRecord> records) {
    std::int64_t flagged = 0, e3_known = 0;
    std::int64_t e1 = 0, e2 = 0, e3 = 0, e4 = 0, e5 = 0, e_all = 0;
    for (const auto& r : records) {
        if (!r.events.known) continue;
        ++flagged;
        e1 += r.events.e1;
        e2 += r.events.e2;
        e4 += r.events.e4;
        e5 += r.events.e5;
        if (r.events.e3_known) {
            ++e3_known;
            e3 += r.events.e3;
            e_all += r.events.all();
        }
    }
    std::vector<EventFrequencyRow> rows;
    auto row = [&](const char* name, std::int64_t succ, std::int64_t tr) {
        rows.push_back({name, succ, tr, wilson_interval(succ, tr)});
    };
    if (flagged > 0) {
        row("E1", e1, flagged);
        row("E2", e2, flagged);
        if (e3_known > 0) row("E3", e3, e3_known);
        row("E4", e4, flagged);
        row("E5", e5, flagged);
        if (e3_known > 0) row("E", e_all, e3_known);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// File output. Writes go to a temp file first and are renamed into place so a
// crashed run never leaves a half-written artifact.

inline void atomic_write_file(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out << contents;
    }
    fs::rename(tmp, target);
}

inline std::string records_to_jsonl(std::span<const TrialRecord> records) {
    std::string out;
    for (const auto& r : records) {
        out += r.to_json().dump();
        out += '\n';
    }
    return out;
}

inline std::string ledger_to_csv(std::span<const std::vector<OfferEvent>> ledgers) {
    std::ostringstream out;
    out << "trial,period,phase,round,agent,price,threshold,accepted,budget_after\n";
    out.precision(17);
    for (std::size_t t = 0; t < ledgers.size(); ++t)
        for (const auto& ev : ledgers[t])
            out << t << ',' << ev.period << ',' << ev.phase << ',' << ev.round << ','
                << ev.agent << ',' << ev.paid << ',' << ev.threshold << ',' << ev.accepted
                << ',' << ev.budget_after << '\n';
    return out.str();
}

inline std::string walk_traces_to_csv(std::span<const WalkTrace> traces) {
    std::ostringstream out;
    out << "trial,step,state,threshold,hit\n";
    out.precision(17);
    for (std::size_t t = 0; t < traces.size(); ++t)
        for (const auto& s : traces[t].steps)
            out << t << ',' << s.round << ',' << s.state << ',' << s.threshold << ','
                << s.hit << '\n';
    return out.str();
}

// Minimal SVG polyline chart for ratio-vs-n curves.
inline std::string svg_line_chart(std::span<const double> xs, std::span<const double> ys,
                                  const std::string& title) {
    if (xs.size() != ys.size() || xs.empty()) throw std::invalid_argument("svg: bad series");
    const double w = 640, h = 400, pad = 60;
    double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0];
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xmin = std::min(xmin, xs[i]);
        xmax = std::max(xmax, xs[i]);
        ymin = std::min(ymin, ys[i]);
        ymax = std::max(ymax, ys[i]);
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto px = [&](double x) { return pad + (x - xmin) / (xmax - xmin) * (w - 2 * pad); };
    auto py = [&](double y) { return h - pad - (y - ymin) / (ymax - ymin) * (h - 2 * pad); };
    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
        << "<text x='" << w / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
        << "</text>\n<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
    for (std::size_t i = 0; i < xs.size(); ++i) svg << px(xs[i]) << ',' << py(ys[i]) << ' ';
    svg << "'/>\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        svg << "<circle cx='" << px(xs[i]) << "' cy='" << py(ys[i])
            << "' r='3' fill='steelblue'/>\n";
        svg << "<text x='" << px(xs[i]) << "' y='" << h - pad / 2
            << "' text-anchor='middle' font-size='11'>" << xs[i] << "</text>\n";
    }
    svg << "<text x='12' y='" << py(ymax) << "' font-size='11'>" << ymax << "</text>\n";
    svg << "<text x='12' y='" << py(ymin) << "' font-size='11'>" << ymin << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace procure
