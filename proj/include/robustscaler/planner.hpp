#pragma once

// Instance-creation planning.
//
// Each query i is planned independently: HP mode creates at the alpha
// quantile of xi_i - tau_i, RT mode at the point where the expected wait
// reaches d - mu_s, COST mode at the point where the expected idle time
// drops to B - mu_tau - mu_s. SequentialPlanner drives these solves in
// rounds, either every m arrivals (with the kappa look-ahead) or every
// Delta seconds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "robustscaler/arrival_engine.hpp"
#include "robustscaler/errors.hpp"
#include "robustscaler/intensity.hpp"
#include "robustscaler/rng.hpp"
#include "robustscaler/trace_model.hpp"

namespace robustscaler {

enum class PlanMode { hp, rt, cost };
enum class KappaPolicy { global_bound, local_intensity };
enum class PlanTrigger { count, interval };

inline std::string_view to_string(PlanMode m) {
    switch (m) {
        case PlanMode::hp: return "hp";
        case PlanMode::rt: return "rt";
        case PlanMode::cost: return "cost";
    }
    return "?";
}

inline PlanMode parse_plan_mode(std::string_view s) {
    if (s == "hp") return PlanMode::hp;
    if (s == "rt") return PlanMode::rt;
    if (s == "cost") return PlanMode::cost;
    throw InputError("unknown planning mode '" + std::string(s) + "' (expected hp, rt or cost)");
}

inline KappaPolicy parse_kappa_policy(std::string_view s) {
    if (s == "global" || s == "global_bound") return KappaPolicy::global_bound;
    if (s == "local" || s == "local_intensity") return KappaPolicy::local_intensity;
    throw InputError("unknown kappa policy '" + std::string(s) + "'");
}

struct PlannerConfig {
    PlanMode mode = PlanMode::hp;
    double alpha = 0.1;    // miss probability (HP)
    double d = 0.0;        // expected response-time bound, seconds (RT)
    double budget = 0.0;   // expected lifecycle per instance, seconds (COST)
    ServiceTimeModel pending = ServiceTimeModel::fixed(13.0);
    double mu_s = 20.0;
    std::size_t samples = 1000;            // R
    PlanTrigger trigger = PlanTrigger::interval;
    double interval = 1.0;                 // Delta, seconds
    std::size_t m = 1;                     // arrivals per round (count trigger)
    KappaPolicy kappa_policy = KappaPolicy::local_intensity;
    bool force_monte_carlo = false;        // sample even when tau is deterministic
    double horizon_extension = 0.0;        // extra look-ahead per interval round, seconds
    std::uint64_t seed = 0;

    double mu_tau() const { return pending.mean(); }

    void validate() const {
        detail::require(mu_s > 0.0, "mu_s must be positive");
        detail::require(samples >= 1, "R must be >= 1");
        detail::require(interval > 0.0, "planning interval must be positive");
        detail::require(m >= 1, "m must be >= 1");
        detail::require(horizon_extension >= 0.0, "horizon extension must be >= 0");
        switch (mode) {
            case PlanMode::hp:
                detail::require(alpha > 0.0 && alpha < 1.0, "HP mode needs 0 < alpha < 1");
                break;
            case PlanMode::rt:
                detail::require(d > mu_s, "RT mode needs d > mu_s");
                break;
            case PlanMode::cost:
                detail::require(budget > mu_tau() + mu_s, "COST mode needs B > mu_tau + mu_s");
                break;
        }
    }
};

/// A creation time together with whether the target was reachable.
struct Decision {
    double x = 0.0;
    bool infeasible = false;
};

struct PlannedCreation {
    std::size_t index = 0;   // 1-based query index
    double time = 0.0;
    bool infeasible = false;
};

struct ScalingPlan {
    double computed_at = 0.0;
    std::vector<PlannedCreation> creations;   // ascending index and time

    bool empty() const { return creations.empty(); }
    std::size_t first_index() const { return creations.empty() ? 0 : creations.front().index; }
    std::size_t last_index() const { return creations.empty() ? 0 : creations.back().index; }
};

inline Decision clamp_decision(double raw, double now) {
    if (raw < now) return {now, true};
    return {raw, false};
}

/// ceil(p*n)-th smallest value (nearest rank); reorders `v`.
inline double empirical_quantile(std::vector<double>& v, double p) {
    detail::require(!v.empty(), "quantile of an empty sample");
    detail::require(p > 0.0 && p <= 1.0, "quantile level must be in (0, 1]");
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size()) - 1e-12));
    rank = std::clamp<std::size_t>(rank, 1, v.size());
    auto it = v.begin() + static_cast<std::ptrdiff_t>(rank - 1);
    std::nth_element(v.begin(), it, v.end());
    return *it;
}

// ---------------------------------------------------------------------------
// Single-query solves

/// Exact HP solve for deterministic pending time tau: the alpha quantile of
/// the i-th arrival after `now`, minus tau.
inline Decision solve_hp_exact(const PiecewiseIntensity& intensity, double now, std::size_t i, double alpha,
                               double tau) {
    detail::require(alpha > 0.0 && alpha < 1.0, "solve_hp: alpha must be in (0, 1)");
    return clamp_decision(arrival_quantile(intensity, now, i, alpha) - tau, now);
}

/// Monte Carlo HP solve on column i of the sample set.
inline Decision solve_hp(ArrivalSampleSet& samples, std::size_t i, double alpha) {
    detail::require(alpha > 0.0 && alpha < 1.0, "solve_hp: alpha must be in (0, 1)");
    const auto xi = samples.arrivals(i);
    const auto tau = samples.pending(i);
    std::vector<double> v(xi.size());
    for (std::size_t r = 0; r < v.size(); ++r) v[r] = xi[r] - tau[r];
    return clamp_decision(empirical_quantile(v, alpha), samples.now());
}

/// Sample mean of (tau - (xi - x)_+)_+, the expected wait when creating at x.
inline double expected_wait(std::span<const double> xi, std::span<const double> tau, double x) {
    double s = 0.0;
    for (std::size_t r = 0; r < xi.size(); ++r) s += std::max(0.0, tau[r] - std::max(0.0, xi[r] - x));
    return s / static_cast<double>(xi.size());
}

/// Smallest x at which the sample expected wait reaches `target`.
///
/// The expected wait is piecewise linear and non-decreasing in x: each
/// sample contributes slope 1/R between xi - tau and xi. Breakpoints are
/// swept in order, keeping the slope as an integer count; flat segments
/// are skipped. If the wait never reaches the target, the largest xi is
/// returned.
inline double sort_and_search(std::span<const double> xi, std::span<const double> tau, double target) {
    detail::require(!xi.empty() && xi.size() == tau.size(), "sort_and_search needs matching non-empty samples");
    double tau_max = 0.0;
    for (double t : tau) {
        detail::require(t >= 0.0, "pending samples must be non-negative");
        tau_max = std::max(tau_max, t);
    }
    if (!(target >= 0.0 && target <= tau_max)) {
        throw InputError("sort_and_search: target " + std::to_string(target) + " outside [0, " +
                         std::to_string(tau_max) + "]");
    }
    const std::size_t n = xi.size();
    // Breakpoints packed as (value, kind); kind 0 = xi (slope -1) sorts
    // before kind 1 = xi - tau (slope +1) at equal values.
    std::vector<std::pair<double, int>> bp;
    bp.reserve(2 * n);
    double xi_max = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < n; ++r) {
        bp.emplace_back(xi[r], 0);
        bp.emplace_back(xi[r] - tau[r], 1);
        xi_max = std::max(xi_max, xi[r]);
    }
    std::sort(bp.begin(), bp.end());

    const double inv_r = 1.0 / static_cast<double>(n);
    long slope = 0;
    double value = 0.0;
    for (std::size_t k = 0; k < bp.size(); ++k) {
        slope += bp[k].second == 1 ? 1 : -1;
        if (k + 1 == bp.size()) break;
        const double lo = bp[k].first;
        const double hi = bp[k + 1].first;
        if (slope <= 0 || hi <= lo) continue;
        const double rate = static_cast<double>(slope) * inv_r;
        const double next = value + rate * (hi - lo);
        if (next >= target) return lo + (target - value) / rate;
        value = next;
    }
    return xi_max;
}

/// RT solve on column i: the creation time whose expected wait is d - mu_s.
inline Decision solve_rt(ArrivalSampleSet& samples, std::size_t i, double d, double mu_s) {
    detail::require(d > mu_s, "solve_rt: d must exceed mu_s");
    const auto xi = samples.arrivals(i);
    const auto tau = samples.pending(i);
    const double target = d - mu_s;
    double tau_mean = 0.0;
    for (double t : tau) tau_mean += t;
    tau_mean /= static_cast<double>(tau.size());
    if (target >= tau_mean) return {std::max(*std::max_element(xi.begin(), xi.end()), samples.now()), false};
    return clamp_decision(sort_and_search(xi, tau, target), samples.now());
}

/// Sample mean of (v - x)_+ where v = xi - tau: expected idle time.
inline double expected_idle(std::span<const double> v, double x) {
    double s = 0.0;
    for (double e : v) s += std::max(0.0, e - x);
    return s / static_cast<double>(v.size());
}

/// Smallest x >= lower with expected idle time <= slack, for sorted v.
inline double idle_root(std::span<const double> sorted_v, double slack, double lower) {
    detail::require(!sorted_v.empty(), "idle_root needs samples");
    detail::require(slack > 0.0, "idle_root needs positive slack");
    if (expected_idle(sorted_v, lower) <= slack) return lower;
    const std::size_t n = sorted_v.size();
    const double rs = slack * static_cast<double>(n);
    // On (v[k-1], v[k]] the idle curve is (suffix_k - (n-k) x)/n.
    double suffix = 0.0;
    for (std::size_t cnt = 1; cnt <= n; ++cnt) {
        const std::size_t k = n - cnt;
        suffix += sorted_v[k];
        const double x = (suffix - rs) / static_cast<double>(cnt);
        const double floor_v = k > 0 ? sorted_v[k - 1] : -std::numeric_limits<double>::infinity();
        if (x >= floor_v) return std::max(x, lower);
    }
    return lower;
}

/// COST solve on column i.
inline Decision solve_cost(ArrivalSampleSet& samples, std::size_t i, double budget, double mu_tau, double mu_s) {
    detail::require(budget > mu_tau + mu_s, "solve_cost: B must exceed mu_tau + mu_s");
    const auto xi = samples.arrivals(i);
    const auto tau = samples.pending(i);
    std::vector<double> v(xi.size());
    for (std::size_t r = 0; r < v.size(); ++r) v[r] = xi[r] - tau[r];
    std::sort(v.begin(), v.end());
    return {idle_root(v, budget - mu_tau - mu_s, samples.now()), false};
}

// ---------------------------------------------------------------------------
// Kappa

/// Largest i whose alpha quantile of Gamma(i)/lambda_bar - tau is negative.
inline std::size_t compute_kappa(double lambda_bar, double alpha, const ServiceTimeModel& pending,
                                 std::size_t samples = 1000, std::uint64_t seed = 0) {
    detail::require(lambda_bar >= 0.0 && std::isfinite(lambda_bar), "compute_kappa: lambda_bar must be >= 0");
    detail::require(alpha > 0.0 && alpha < 1.0, "compute_kappa: alpha must be in (0, 1)");
    if (lambda_bar == 0.0) return 0;
    if (pending.deterministic()) {
        const double bound = lambda_bar * pending.mean();
        const auto ok = [&](std::size_t i) { return gamma_quantile(i, alpha) < bound; };
        if (!ok(1)) return 0;
        std::size_t lo = 1, hi = 2;
        while (ok(hi)) {
            lo = hi;
            hi *= 2;
        }
        while (hi - lo > 1) {
            const std::size_t mid = lo + (hi - lo) / 2;
            (ok(mid) ? lo : hi) = mid;
        }
        return lo;
    }
    const rng::CounterStream stream(seed);
    std::vector<double> g(samples, 0.0), v(samples);
    for (std::size_t i = 1;; ++i) {
        for (std::size_t r = 0; r < samples; ++r) {
            g[r] += stream.exponential(rng::Domain::kappa, r, 2 * i);
            v[r] = g[r] / lambda_bar - pending.sample(stream.uniform(rng::Domain::kappa, r, 2 * i + 1));
        }
        if (empirical_quantile(v, alpha) >= 0.0) return i - 1;
    }
}

/// RT analogue: largest j whose expected wait when created now already
/// exceeds d - mu_s, under a homogeneous rate lambda_bar.
inline std::size_t compute_kappa_rt(double lambda_bar, double d, double mu_s, const ServiceTimeModel& pending,
                                    std::size_t samples = 1000, std::uint64_t seed = 0) {
    detail::require(d > mu_s, "compute_kappa_rt: d must exceed mu_s");
    if (lambda_bar <= 0.0) return 0;
    const double target = d - mu_s;
    const rng::CounterStream stream(seed);
    std::vector<double> g(samples, 0.0);
    for (std::size_t j = 1;; ++j) {
        double wait = 0.0;
        for (std::size_t r = 0; r < samples; ++r) {
            g[r] += stream.exponential(rng::Domain::kappa, r, 2 * j);
            const double tau = pending.sample(stream.uniform(rng::Domain::kappa, r, 2 * j + 1));
            wait += std::max(0.0, tau - g[r] / lambda_bar);
        }
        if (wait / static_cast<double>(samples) <= target) return j - 1;
    }
}

// ---------------------------------------------------------------------------
// Sequential scheme

struct SequentialState {
    std::size_t arrivals_seen = 0;    // N
    std::size_t kappa = 0;
    std::size_t next_index = 1;       // first query index without a creation time
    std::size_t next_trigger = 0;     // count trigger: plan again when N reaches this
    std::size_t rounds = 0;
    double last_creation = -std::numeric_limits<double>::infinity();
};

class SequentialPlanner {
public:
    /// The intensity must cover the planning horizon and outlive the planner.
    SequentialPlanner(PlannerConfig config, const PiecewiseIntensity& intensity)
        : config_(std::move(config)), intensity_(&intensity) {
        config_.validate();
    }

    const PlannerConfig& config() const { return config_; }
    const SequentialState& state() const { return state_; }

    /// Count trigger: whether a round is due after `arrivals_seen` arrivals.
    bool due(std::size_t arrivals_seen) const { return arrivals_seen >= state_.next_trigger; }

    /// One planning round at time `now` after `arrivals_seen` arrivals.
    ScalingPlan step(double now, std::size_t arrivals_seen) {
        detail::require(arrivals_seen >= state_.arrivals_seen, "arrival count cannot decrease");
        state_.arrivals_seen = arrivals_seen;
        state_.next_index = std::max(state_.next_index, arrivals_seen + 1);
        ScalingPlan plan;
        plan.computed_at = now;
        const std::uint64_t round_seed = rng::derive_seed(config_.seed, state_.rounds);
        ++state_.rounds;

        if (config_.trigger == PlanTrigger::count) {
            state_.kappa = kappa_at(now);
            const std::size_t last = arrivals_seen + state_.kappa + config_.m;
            if (last >= state_.next_index) {
                Solver solver(*this, now, arrivals_seen, round_seed);
                for (std::size_t i = state_.next_index; i <= last; ++i) emit(plan, i, solver.solve(i), now);
            }
            state_.next_trigger = arrivals_seen + config_.m;
            return plan;
        }

        const double until = now + config_.interval + config_.horizon_extension;
        Solver solver(*this, now, arrivals_seen, round_seed);
        for (std::size_t i = state_.next_index;; ++i) {
            const Decision dec = solver.solve(i);
            if (dec.x >= until) break;
            emit(plan, i, dec, now);
        }
        return plan;
    }

    /// Creation times for queries [i_lo, i_hi] planned from `now` with
    /// `arrivals_seen` arrivals so far; does not touch the sequential state.
    std::vector<Decision> plan_range(double now, std::size_t arrivals_seen, std::size_t i_lo, std::size_t i_hi,
                                     std::uint64_t seed) const {
        detail::require(i_lo > arrivals_seen && i_lo <= i_hi, "plan_range needs arrivals_seen < i_lo <= i_hi");
        Solver solver(*this, now, arrivals_seen, seed);
        std::vector<Decision> out;
        for (std::size_t i = i_lo; i <= i_hi; ++i) out.push_back(solver.solve(i));
        return out;
    }

    std::size_t kappa_at(double now) {
        const double lambda_bar =
            config_.kappa_policy == KappaPolicy::local_intensity ? intensity_->rate(now) : intensity_->max_rate();
        const auto it = kappa_cache_.find(lambda_bar);
        if (it != kappa_cache_.end()) return it->second;
        std::size_t k = 0;
        switch (config_.mode) {
            case PlanMode::hp:
                k = compute_kappa(lambda_bar, config_.alpha, config_.pending, config_.samples,
                                  rng::derive_seed(config_.seed, 0x6b61707061ull));
                break;
            case PlanMode::rt:
                k = compute_kappa_rt(lambda_bar, config_.d, config_.mu_s, config_.pending, config_.samples,
                                     rng::derive_seed(config_.seed, 0x6b61707061ull));
                break;
            case PlanMode::cost: k = 0; break;
        }
        kappa_cache_.emplace(lambda_bar, k);
        return k;
    }

private:
    // Solves query indices of one round; Monte Carlo columns are drawn
    // lazily starting at the first requested index.
    class Solver {
    public:
        Solver(const SequentialPlanner& p, double now, std::size_t arrivals_seen, std::uint64_t seed)
            : p_(p), now_(now), n_(arrivals_seen), seed_(seed) {}

        Decision solve(std::size_t i) {
            const auto& c = p_.config_;
            const std::size_t j = i - n_;
            if (c.mode == PlanMode::hp && c.pending.deterministic() && !c.force_monte_carlo) {
                return solve_hp_exact(*p_.intensity_, now_, j, c.alpha, c.pending.mean());
            }
            if (!samples_) {
                // Drawing Gamma(j) directly only pays off for deep indices.
                const std::size_t first = j > 32 ? j : 1;
                samples_.emplace(*p_.intensity_, now_, c.samples, c.pending, seed_, first);
            }
            // Queries are solved in increasing order, so earlier columns are dead.
            samples_->release_before(j);
            switch (c.mode) {
                case PlanMode::hp: return solve_hp(*samples_, j, c.alpha);
                case PlanMode::rt: return solve_rt(*samples_, j, c.d, c.mu_s);
                case PlanMode::cost: return solve_cost(*samples_, j, c.budget, c.mu_tau(), c.mu_s);
            }
            return {};
        }

    private:
        const SequentialPlanner& p_;
        double now_;
        std::size_t n_;
        std::uint64_t seed_;
        std::optional<ArrivalSampleSet> samples_;
    };

    void emit(ScalingPlan& plan, std::size_t i, Decision dec, double now) {
        double t = std::max({dec.x, now, state_.last_creation});
        state_.last_creation = t;
        plan.creations.push_back({i, t, dec.infeasible});
        state_.next_index = i + 1;
    }

    PlannerConfig config_;
    const PiecewiseIntensity* intensity_;
    SequentialState state_;
    std::map<double, std::size_t> kappa_cache_;
};

// ---------------------------------------------------------------------------
// Calibration

/// Achieved-vs-nominal table; inverted by monotone linear interpolation.
class CalibrationMap {
public:
    CalibrationMap(std::vector<double> nominal, std::vector<double> achieved)
        : nominal_(std::move(nominal)), achieved_(std::move(achieved)) {
        detail::require(nominal_.size() == achieved_.size() && nominal_.size() >= 1,
                        "calibration map needs matching non-empty levels");
        for (std::size_t k = 1; k < nominal_.size(); ++k) {
            detail::require(nominal_[k] > nominal_[k - 1] && achieved_[k] > achieved_[k - 1],
                            "calibration levels must be strictly increasing");
        }
    }

    std::span<const double> nominal() const { return nominal_; }
    std::span<const double> achieved() const { return achieved_; }

    /// Nominal level expected to deliver `desired` actual level.
    double calibrate(double desired) const {
        if (desired < achieved_.front() || desired > achieved_.back()) {
            throw InputError("desired level " + std::to_string(desired) + " outside achieved range [" +
                             std::to_string(achieved_.front()) + ", " + std::to_string(achieved_.back()) + "]");
        }
        const auto it = std::lower_bound(achieved_.begin(), achieved_.end(), desired);
        const auto k = static_cast<std::size_t>(it - achieved_.begin());
        if (achieved_[k] == desired) return nominal_[k];
        const double w = (desired - achieved_[k - 1]) / (achieved_[k] - achieved_[k - 1]);
        return nominal_[k - 1] + w * (nominal_[k] - nominal_[k - 1]);
    }

private:
    std::vector<double> nominal_, achieved_;
};

inline double calibrate(const CalibrationMap& map, double desired_actual) { return map.calibrate(desired_actual); }

}  // namespace robustscaler
