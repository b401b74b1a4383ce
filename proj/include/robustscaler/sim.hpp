#pragma once

// Discrete-event replay of per-query scaling.
//
// Every query consumes one instance that is deleted once the query is
// processed. With creation time x, pending time tau, arrival xi and
// processing time s:
//
//   rt   = s + (tau - (xi - x)_+)_+
//   cost = (xi - x - tau)_+ + tau + s
//   hit  = x + tau <= xi
//
// A query whose instance is not created by its arrival triggers a reactive
// creation at xi (any later scheduled creation is cancelled).

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "robustscaler/errors.hpp"
#include "robustscaler/intensity.hpp"
#include "robustscaler/planner.hpp"
#include "robustscaler/rng.hpp"
#include "robustscaler/trace_model.hpp"

namespace robustscaler {

struct SimEvent {
    std::size_t index = 0;   // 1-based
    double arrival = 0.0;
    double creation = 0.0;   // equals arrival for reactive creations
    bool reactive = false;
    double pending = 0.0;
    double processing = 0.0;
    double ready = 0.0;
    double rt = 0.0;
    double cost = 0.0;
    bool hit = false;
};

/// Closed-form event given its inputs.
inline SimEvent make_event(std::size_t index, double arrival, double creation, bool reactive, double pending,
                           double processing) {
    SimEvent e;
    e.index = index;
    e.arrival = arrival;
    e.creation = creation;
    e.reactive = reactive;
    e.pending = pending;
    e.processing = processing;
    e.ready = creation + pending;
    e.rt = processing + std::max(0.0, pending - std::max(0.0, arrival - creation));
    e.cost = std::max(0.0, arrival - creation - pending) + pending + processing;
    e.hit = creation + pending <= arrival;
    return e;
}

struct ScalerAdapter {
    enum class Kind { robustscaler, backup_pool, adaptive_backup_pool };

    Kind kind = Kind::backup_pool;
    PlannerConfig planner;
    std::shared_ptr<const PiecewiseIntensity> intensity;
    std::size_t pool_size = 0;
    double multiplier = 0.0;
    double reset_period = 600.0;

    static ScalerAdapter robustscaler(PlannerConfig config, std::shared_ptr<const PiecewiseIntensity> intensity) {
        detail::require(intensity != nullptr, "RobustScaler adapter needs an intensity");
        config.validate();
        ScalerAdapter a;
        a.kind = Kind::robustscaler;
        a.planner = std::move(config);
        a.intensity = std::move(intensity);
        return a;
    }

    static ScalerAdapter backup_pool(std::size_t b) {
        ScalerAdapter a;
        a.kind = Kind::backup_pool;
        a.pool_size = b;
        return a;
    }

    static ScalerAdapter adaptive_backup_pool(double multiplier, double reset_period = 600.0) {
        detail::require(multiplier >= 0.0 && std::isfinite(multiplier), "AdapBP multiplier must be >= 0");
        detail::require(reset_period > 0.0, "AdapBP reset period must be positive");
        ScalerAdapter a;
        a.kind = Kind::adaptive_backup_pool;
        a.multiplier = multiplier;
        a.reset_period = reset_period;
        return a;
    }

    std::string describe() const {
        switch (kind) {
            case Kind::robustscaler: return "robustscaler_" + std::string(to_string(planner.mode));
            case Kind::backup_pool: return "bp(" + std::to_string(pool_size) + ")";
            case Kind::adaptive_backup_pool: return "adapbp(" + detail::format_double(multiplier) + ")";
        }
        return "?";
    }
};

struct ReplayOptions {
    double start = 0.0;              // scaling starts here (first plan / pool fill)
    bool replay_processing = true;   // reuse processing times recorded in the trace
};

struct SimRun {
    std::vector<SimEvent> events;
    double waste_cost = 0.0;             // lifecycles of instances never paired with a query
    std::size_t wasted_instances = 0;
    std::size_t planning_rounds = 0;
    double planning_seconds = 0.0;       // wall time spent in the planner

    double total_cost() const {
        double c = waste_cost;
        for (const auto& e : events) c += e.cost;
        return c;
    }
};

namespace sim_detail {

struct Draws {
    rng::CounterStream stream;
    ServiceTimeModel pending;
    ServiceTimeModel processing;
    bool replay_processing;

    double tau(std::size_t ordinal) const {
        if (pending.deterministic()) return pending.mean();
        return pending.sample(stream.uniform(rng::Domain::sim_pending, ordinal, 0));
    }

    double s(const QueryEvent& q, std::size_t index) const {
        if (replay_processing && q.processing) return *q.processing;
        return processing.sample(stream.uniform(rng::Domain::sim_processing, index, 0));
    }
};

inline SimRun replay_robustscaler(std::span<const QueryEvent> events, const ScalerAdapter& scaler, const Draws& draws,
                                  const ReplayOptions& opt) {
    SimRun run;
    const std::size_t n = events.size();
    SequentialPlanner planner(scaler.planner, *scaler.intensity);
    std::vector<double> planned(n + 1, std::numeric_limits<double>::infinity());
    std::vector<double> overflow;   // creations planned for indices past the trace

    const auto do_step = [&](double now, std::size_t seen) {
        const auto t0 = std::chrono::steady_clock::now();
        ScalingPlan plan;
        try {
            plan = planner.step(now, seen);
        } catch (const HorizonExhausted& e) {
            throw RuntimeFault("planner at t=" + detail::format_double(now) + " after " + std::to_string(seen) +
                               " arrivals: " + e.what());
        }
        run.planning_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ++run.planning_rounds;
        for (const auto& c : plan.creations) {
            if (c.index <= n) planned[c.index] = c.time;
            else overflow.push_back(c.time);
        }
    };

    const bool by_count = scaler.planner.trigger == PlanTrigger::count;
    const double delta = scaler.planner.interval;
    std::size_t tick = 0;
    if (by_count) do_step(opt.start, 0);

    run.events.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = k + 1;
        const double xi = events[k].arrival;
        if (!by_count) {
            for (;;) {
                const double t = opt.start + delta * static_cast<double>(tick);
                if (t > xi) break;
                // Arrivals strictly before the tick have been seen.
                std::size_t seen = k;
                while (seen > 0 && events[seen - 1].arrival >= t) --seen;
                do_step(t, seen);
                ++tick;
            }
        }
        const double x = planned[i];
        const bool reactive = !(x <= xi);
        const double creation = reactive ? xi : x;
        run.events.push_back(make_event(i, xi, creation, reactive, draws.tau(i), draws.s(events[k], i)));
        if (by_count && planner.due(i)) do_step(xi, i);
    }
    const double end = n > 0 ? events.back().arrival : opt.start;
    for (double x : overflow) {
        if (x <= end) {
            run.waste_cost += end - x;
            ++run.wasted_instances;
        }
    }
    return run;
}

inline SimRun replay_pool(std::span<const QueryEvent> events, const ScalerAdapter& scaler, const Draws& draws,
                          const ReplayOptions& opt) {
    struct Instance {
        double creation;
        double tau;
    };
    SimRun run;
    std::deque<Instance> pool;
    std::size_t ordinal = 0;
    const auto create = [&](double t) {
        ++ordinal;
        pool.push_back({t, draws.tau(ordinal)});
    };

    const bool adaptive = scaler.kind == ScalerAdapter::Kind::adaptive_backup_pool;
    std::size_t target = adaptive ? 0 : scaler.pool_size;
    for (std::size_t b = 0; b < target; ++b) create(opt.start);

    std::size_t resets = 1;   // the reset at opt.start has happened (empty history)
    std::size_t window_lo = 0;
    for (std::size_t k = 0; k < events.size(); ++k) {
        const double xi = events[k].arrival;
        if (adaptive) {
            for (;;) {
                const double t = opt.start + scaler.reset_period * static_cast<double>(resets);
                if (t > xi) break;
                const double from = t - scaler.reset_period;
                while (window_lo < k && events[window_lo].arrival <= from) ++window_lo;
                std::size_t lo = window_lo;
                while (lo < k && events[lo].arrival < opt.start) ++lo;
                const double span_s = std::min(scaler.reset_period, t - opt.start);
                const double qps = static_cast<double>(k - lo) / span_s;
                target = static_cast<std::size_t>(std::ceil(qps * scaler.multiplier - 1e-12));
                while (pool.size() > target) {
                    run.waste_cost += t - pool.back().creation;
                    ++run.wasted_instances;
                    pool.pop_back();
                }
                while (pool.size() < target) create(t);
                ++resets;
            }
        }
        const std::size_t i = k + 1;
        const double s = draws.s(events[k], i);
        if (!pool.empty()) {
            const Instance inst = pool.front();
            pool.pop_front();
            run.events.push_back(make_event(i, xi, inst.creation, false, inst.tau, s));
        } else {
            ++ordinal;
            run.events.push_back(make_event(i, xi, xi, true, draws.tau(ordinal), s));
        }
        while (pool.size() < target) create(xi);
    }
    const double end = events.empty() ? opt.start : events.back().arrival;
    for (const auto& inst : pool) {
        run.waste_cost += std::max(0.0, end - inst.creation);
        ++run.wasted_instances;
    }
    return run;
}

}  // namespace sim_detail

/// Replays a sorted trace under a scaler. Deterministic per seed.
inline SimRun replay(std::span<const QueryEvent> events, const ScalerAdapter& scaler,
                     const ServiceTimeModel& pending_model, const ServiceTimeModel& processing_model,
                     std::uint64_t seed, const ReplayOptions& opt = {}) {
    for (std::size_t k = 1; k < events.size(); ++k) {
        detail::require(events[k - 1].arrival <= events[k].arrival, "replay needs arrivals sorted ascending");
    }
    if (!events.empty()) {
        detail::require(events.front().arrival >= opt.start, "replay start lies after the first arrival");
    }
    const sim_detail::Draws draws{rng::CounterStream(seed), pending_model, processing_model, opt.replay_processing};
    if (scaler.kind == ScalerAdapter::Kind::robustscaler) {
        return sim_detail::replay_robustscaler(events, scaler, draws, opt);
    }
    return sim_detail::replay_pool(events, scaler, draws, opt);
}

// ---------------------------------------------------------------------------
// Metrics

inline constexpr std::array<double, 4> kRtQuantileLevels{0.75, 0.95, 0.99, 0.999};
inline constexpr std::size_t kVarianceWindow = 50;

struct SimResult {
    std::size_t queries = 0;
    double hit_rate = 0.0;
    double total_cost = 0.0;
    double waste_cost = 0.0;
    double reference_cost = 0.0;   // total cost of the purely reactive run
    double relative_cost = 0.0;
    double rt_avg = 0.0;
    double wait_avg = 0.0;         // mean of rt - s
    std::map<double, double> rt_quantiles;
    double hit_rate_windowed_variance = 0.0;
    double rt_windowed_variance = 0.0;
    std::size_t reactive = 0;
};

/// Nearest-rank quantile of an unsorted sample.
inline double nearest_rank(std::vector<double> v, double p) { return empirical_quantile(v, p); }

inline double windowed_variance(std::span<const double> values, std::size_t window) {
    const std::size_t windows = values.size() / window;
    if (windows < 2) return 0.0;
    std::vector<double> means(windows, 0.0);
    for (std::size_t w = 0; w < windows; ++w) {
        for (std::size_t k = 0; k < window; ++k) means[w] += values[w * window + k];
        means[w] /= static_cast<double>(window);
    }
    double mu = 0.0;
    for (double m : means) mu += m;
    mu /= static_cast<double>(windows);
    double var = 0.0;
    for (double m : means) var += (m - mu) * (m - mu);
    return var / static_cast<double>(windows);
}

/// Metrics of a run against the purely reactive total cost.
inline SimResult compute_metrics(const SimRun& run, double reference_cost) {
    detail::require(!run.events.empty(), "metrics need at least one event");
    detail::require(reference_cost > 0.0, "reference cost must be positive");
    SimResult r;
    r.queries = run.events.size();
    std::vector<double> hits, rts;
    hits.reserve(r.queries);
    rts.reserve(r.queries);
    double wait = 0.0;
    for (const auto& e : run.events) {
        hits.push_back(e.hit ? 1.0 : 0.0);
        rts.push_back(e.rt);
        wait += e.rt - e.processing;
        if (e.reactive) ++r.reactive;
    }
    const double n = static_cast<double>(r.queries);
    for (double h : hits) r.hit_rate += h;
    r.hit_rate /= n;
    for (double x : rts) r.rt_avg += x;
    r.rt_avg /= n;
    r.wait_avg = wait / n;
    r.waste_cost = run.waste_cost;
    r.total_cost = run.total_cost();
    r.reference_cost = reference_cost;
    r.relative_cost = r.total_cost / reference_cost;
    for (double p : kRtQuantileLevels) r.rt_quantiles[p] = nearest_rank(rts, p);
    r.hit_rate_windowed_variance = windowed_variance(hits, kVarianceWindow);
    r.rt_windowed_variance = windowed_variance(rts, kVarianceWindow);
    return r;
}

/// Total cost of the purely reactive scaler (BP with B = 0).
inline double reactive_cost(std::span<const QueryEvent> events, const ServiceTimeModel& pending_model,
                            const ServiceTimeModel& processing_model, std::uint64_t seed,
                            const ReplayOptions& opt = {}) {
    return replay(events, ScalerAdapter::backup_pool(0), pending_model, processing_model, seed, opt).total_cost();
}

/// Replay plus metrics relative to the reactive baseline on the same seed.
inline SimResult simulate(std::span<const QueryEvent> events, const ScalerAdapter& scaler,
                          const ServiceTimeModel& pending_model, const ServiceTimeModel& processing_model,
                          std::uint64_t seed, const ReplayOptions& opt = {}, SimRun* run_out = nullptr) {
    SimRun run = replay(events, scaler, pending_model, processing_model, seed, opt);
    const double ref = reactive_cost(events, pending_model, processing_model, seed, opt);
    SimResult res = compute_metrics(run, ref);
    if (run_out) *run_out = std::move(run);
    return res;
}

inline nlohmann::json to_json(const SimResult& r) {
    nlohmann::json j;
    j["queries"] = r.queries;
    j["hit_rate"] = r.hit_rate;
    j["total_cost"] = r.total_cost;
    j["waste_cost"] = r.waste_cost;
    j["reference_cost"] = r.reference_cost;
    j["relative_cost"] = r.relative_cost;
    j["rt_avg"] = r.rt_avg;
    j["wait_avg"] = r.wait_avg;
    j["reactive"] = r.reactive;
    nlohmann::json q = nlohmann::json::object();
    for (const auto& [p, v] : r.rt_quantiles) q[detail::format_double(p)] = v;
    j["rt_quantiles"] = q;
    j["hit_rate_windowed_variance"] = r.hit_rate_windowed_variance;
    j["rt_windowed_variance"] = r.rt_windowed_variance;
    return j;
}

inline void write_events_csv(std::ostream& out, std::span<const SimEvent> events) {
    out << "i,arrival_s,creation_s,pending_s,processing_s,rt_s,cost_s,hit,reactive\n";
    for (const auto& e : events) {
        out << e.index << ',' << detail::format_double(e.arrival) << ',' << detail::format_double(e.creation) << ','
            << detail::format_double(e.pending) << ',' << detail::format_double(e.processing) << ',' << detail::format_double(e.rt) << ','
            << detail::format_double(e.cost) << ',' << (e.hit ? 1 : 0) << ',' << (e.reactive ? 1 : 0) << '\n';
    }
}

}  // namespace robustscaler
