#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "robustscaler/sim.hpp"

using namespace robustscaler;

namespace {

const auto kFixed13 = ServiceTimeModel::fixed(13.0);
const auto kExp20 = ServiceTimeModel::exponential(20.0);

Trace poisson_trace(double rate, double horizon, std::uint64_t seed) {
    return generate_nhpp_trace(PiecewiseIntensity::constant(rate, 0.0, horizon), horizon, seed);
}

ScalerAdapter hp_adapter(double rate, double alpha, PlanTrigger trigger = PlanTrigger::count) {
    PlannerConfig c;
    c.alpha = alpha;
    c.trigger = trigger;
    return ScalerAdapter::robustscaler(c, std::make_shared<PiecewiseIntensity>(PiecewiseIntensity::constant(rate, 0.0, 1e6)));
}

void expect_closed_forms(const SimEvent& e) {
    EXPECT_EQ(e.rt, e.processing + std::max(0.0, e.pending - std::max(0.0, e.arrival - e.creation)));
    EXPECT_EQ(e.cost, std::max(0.0, e.arrival - e.creation - e.pending) + e.pending + e.processing);
    EXPECT_EQ(e.hit, e.creation + e.pending <= e.arrival);
    EXPECT_EQ(e.ready, e.creation + e.pending);
}

}  // namespace

TEST(SimEvent, ReadyBeforeArrival) {
    const auto e = make_event(1, 10.0, 5.0, false, 3.0, 20.0);
    EXPECT_TRUE(e.hit);
    EXPECT_EQ(e.rt, 20.0);
    EXPECT_EQ(e.cost, 25.0);
}

TEST(SimEvent, StillPending) {
    const auto e = make_event(1, 10.0, 9.0, false, 3.0, 20.0);
    EXPECT_FALSE(e.hit);
    EXPECT_EQ(e.rt, 22.0);
    EXPECT_EQ(e.cost, 23.0);
}

TEST(SimEvent, Reactive) {
    const auto e = make_event(1, 10.0, 10.0, true, 3.0, 20.0);
    EXPECT_FALSE(e.hit);
    EXPECT_EQ(e.rt, 23.0);
    EXPECT_EQ(e.cost, 23.0);
}

TEST(Replay, ZeroPoolIsReactive) {
    const auto t = poisson_trace(0.5, 2000.0, 1);
    const auto r = simulate(t, ScalerAdapter::backup_pool(0), kFixed13, kExp20, 3);
    EXPECT_EQ(r.hit_rate, 0.0);
    EXPECT_DOUBLE_EQ(r.relative_cost, 1.0);
    EXPECT_EQ(r.reactive, t.size());
}

TEST(Replay, LargePoolHitsEverything) {
    const auto t = poisson_trace(0.5, 2000.0, 2);
    const auto r = simulate(t, ScalerAdapter::backup_pool(200), kFixed13, kExp20, 3);
    // Only queries within the first 13 s can miss.
    EXPECT_GT(r.hit_rate, 0.99);
}

TEST(Replay, BackupPoolParetoMonotone) {
    const auto t = poisson_trace(0.3, 20000.0, 4);
    for (const auto& pending : {kFixed13, ServiceTimeModel::exponential(13.0)}) {
        double prev_hit = -1.0, prev_cost = -1.0;
        for (std::size_t b = 0; b <= 8; ++b) {
            const auto r = simulate(t, ScalerAdapter::backup_pool(b), pending, kExp20, 5);
            EXPECT_GE(r.hit_rate, prev_hit) << b;
            EXPECT_GE(r.total_cost, prev_cost) << b;
            prev_hit = r.hit_rate;
            prev_cost = r.total_cost;
        }
    }
}

TEST(Replay, AdaptivePoolTargetFromRecentRate) {
    Trace t;
    for (int k = 0; k < 120; ++k) t.push_back({5.0 * k, std::nullopt});
    t.push_back({601.0, std::nullopt});
    t.push_back({602.0, std::nullopt});
    t.push_back({603.0, std::nullopt});
    SimRun run;
    simulate(t, ScalerAdapter::adaptive_backup_pool(10.0), kFixed13, kExp20, 1, {}, &run);
    for (std::size_t k = 0; k < 120; ++k) EXPECT_TRUE(run.events[k].reactive);
    EXPECT_FALSE(run.events[120].reactive);
    EXPECT_EQ(run.events[120].creation, 600.0);
    EXPECT_EQ(run.events[121].creation, 600.0);
    EXPECT_EQ(run.events[122].creation, 601.0);
}

TEST(Replay, AdaptivePoolShrinksAndChargesWaste) {
    Trace t;
    for (int k = 0; k < 600; ++k) t.push_back({static_cast<double>(k), std::nullopt});
    t.push_back({1900.0, std::nullopt});
    SimRun run;
    simulate(t, ScalerAdapter::adaptive_backup_pool(5.0), kFixed13, kExp20, 1, {}, &run);
    // Target 5 from 600 s to 1200 s, then 0: five idle instances deleted at 1200 s.
    EXPECT_TRUE(run.events.back().reactive);
    EXPECT_EQ(run.wasted_instances, 5u);
    EXPECT_DOUBLE_EQ(run.waste_cost, 5.0 * 600.0);
}

TEST(Replay, ConservationAndIdentities) {
    const auto t = poisson_trace(1.0, 3000.0, 6);
    std::vector<ScalerAdapter> scalers{ScalerAdapter::backup_pool(3), ScalerAdapter::adaptive_backup_pool(20.0),
                                       hp_adapter(1.0, 0.1), hp_adapter(1.0, 0.3, PlanTrigger::interval)};
    for (const auto& s : scalers) {
        SimRun run;
        simulate(t, s, ServiceTimeModel::exponential(13.0), kExp20, 8, {}, &run);
        ASSERT_EQ(run.events.size(), t.size()) << s.describe();
        std::size_t hits = 0, pending = 0, reactive = 0;
        for (std::size_t k = 0; k < run.events.size(); ++k) {
            const auto& e = run.events[k];
            EXPECT_EQ(e.index, k + 1);
            EXPECT_EQ(e.arrival, t[k].arrival);
            expect_closed_forms(e);
            if (e.reactive) {
                ++reactive;
                EXPECT_EQ(e.creation, e.arrival);
            } else if (e.hit) {
                ++hits;
            } else {
                ++pending;
            }
            EXPECT_LE(e.creation, e.arrival);
        }
        EXPECT_EQ(hits + pending + reactive, t.size());
    }
}

TEST(Replay, DeterministicPerSeed) {
    const auto t = poisson_trace(0.8, 2000.0, 7);
    const auto s = hp_adapter(0.8, 0.1, PlanTrigger::interval);
    const auto pending = ServiceTimeModel::exponential(13.0);
    const auto a = to_json(simulate(t, s, pending, kExp20, 11)).dump();
    const auto b = to_json(simulate(t, s, pending, kExp20, 11)).dump();
    const auto c = to_json(simulate(t, s, pending, kExp20, 12)).dump();
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

TEST(Replay, HitRateBridgesResponseTime) {
    const auto t = poisson_trace(0.5, 20000.0, 9);
    SimRun run;
    const auto r = simulate(t, hp_adapter(0.5, 0.2), kFixed13, kExp20, 3, {}, &run);
    double mean_s = 0.0;
    for (const auto& e : run.events) mean_s += e.processing / static_cast<double>(run.events.size());
    EXPECT_LE(r.rt_avg, mean_s + 13.0 * (1.0 - r.hit_rate) + 1e-9);
    EXPECT_GE(r.rt_avg, mean_s - 1e-9);
    EXPECT_GT(r.hit_rate, 0.7);
}

TEST(Replay, UnsortedTraceRejected) {
    const Trace t{{2.0, {}}, {1.0, {}}};
    EXPECT_THROW(replay(t, ScalerAdapter::backup_pool(1), kFixed13, kExp20, 1), InputError);
}

TEST(Replay, RecordedProcessingTimesAreReused) {
    const Trace t{{1.0, 7.0}, {2.0, std::nullopt}};
    const auto run = replay(t, ScalerAdapter::backup_pool(0), kFixed13, ServiceTimeModel::fixed(3.0), 1);
    EXPECT_EQ(run.events[0].processing, 7.0);
    EXPECT_EQ(run.events[1].processing, 3.0);
    ReplayOptions opt;
    opt.replay_processing = false;
    EXPECT_EQ(replay(t, ScalerAdapter::backup_pool(0), kFixed13, ServiceTimeModel::fixed(3.0), 1, opt).events[0].processing, 3.0);
}

TEST(Metrics, HalfHits) {
    SimRun run;
    run.events.push_back(make_event(1, 10.0, 5.0, false, 3.0, 20.0));
    run.events.push_back(make_event(2, 10.0, 10.0, true, 3.0, 20.0));
    const auto r = compute_metrics(run, 48.0);
    EXPECT_EQ(r.hit_rate, 0.5);
    EXPECT_EQ(r.total_cost, 48.0);
    EXPECT_EQ(r.relative_cost, 1.0);
    EXPECT_EQ(r.rt_avg, 21.5);
    EXPECT_EQ(r.rt_quantiles.at(0.75), 23.0);
    EXPECT_EQ(r.reactive, 1u);
    EXPECT_EQ(r.hit_rate_windowed_variance, 0.0);
}

TEST(Metrics, QuantilesAndWindowedVariance) {
    SimRun run;
    for (std::size_t i = 1; i <= 200; ++i) {
        const bool hit = i <= 50 || (i > 100 && i <= 150);
        run.events.push_back(make_event(i, 100.0, hit ? 0.0 : 100.0, !hit, 5.0, static_cast<double>(i)));
    }
    const auto r = compute_metrics(run, 1.0);
    std::vector<double> rts;
    for (const auto& e : run.events) rts.push_back(e.rt);
    for (double p : kRtQuantileLevels) EXPECT_EQ(r.rt_quantiles.at(p), oracle::nearest_rank(rts, p));
    EXPECT_DOUBLE_EQ(r.hit_rate_windowed_variance, 0.25);
    EXPECT_EQ(windowed_variance(std::vector<double>(99, 1.0), 50), 0.0);
    EXPECT_THROW(compute_metrics(SimRun{}, 1.0), InputError);
}

TEST(Metrics, JsonAndCsv) {
    SimRun run;
    run.events.push_back(make_event(1, 10.0, 5.0, false, 3.0, 20.0));
    const auto j = to_json(compute_metrics(run, 25.0));
    EXPECT_EQ(j.at("hit_rate").get<double>(), 1.0);
    EXPECT_TRUE(j.at("rt_quantiles").contains("0.999"));
    std::ostringstream out;
    write_events_csv(out, run.events);
    EXPECT_NE(out.str().find("i,arrival_s"), std::string::npos);
    EXPECT_NE(out.str().find("\n1,10,5,3,20,20,25,1,0"), std::string::npos) << out.str();
}
