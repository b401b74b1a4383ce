// Fit an intensity to a synthetic periodic trace, then compare a backup
// pool against hit-probability planning on the following day.

#include <iostream>
#include <memory>

#include "robustscaler/robustscaler.hpp"

namespace rs = robustscaler;

int main() {
    const double period = 86400.0;
    rs::GenerationOptions gen;
    gen.cell = 60.0;
    gen.processing = rs::ServiceTimeModel::exponential(20.0);
    const auto trace = rs::generate_nhpp_trace(
        [&](double t) { return rs::sinusoid_rate(t, 0.5, 10.0, period); }, 4 * period, 42, gen);

    const double split = 3 * period;
    const auto series = rs::aggregate_qps(trace, 60.0, 0.0, split);
    const auto info = rs::detect_period(series, 1440);
    std::cout << "period: " << (info.detected ? std::to_string(info.period_bins) + " bins" : "none") << '\n';

    const auto fit = rs::train(series, rs::TrainConfig{}, info);
    std::cout << "ADMM iterations: " << fit.state.iteration << (fit.converged ? " (converged)" : "") << '\n';

    const auto intensity = std::make_shared<const rs::PiecewiseIntensity>(
        rs::predict_intensity(fit.model, split, period + 3600.0, 2 * period));
    const auto test = rs::test_split(trace, split);
    const auto pending = rs::ServiceTimeModel::fixed(13.0);
    const auto processing = rs::ServiceTimeModel::exponential(20.0);
    const rs::ReplayOptions opt{split, true};

    const auto bp = rs::simulate(test, rs::ScalerAdapter::backup_pool(2), pending, processing, 1, opt);
    rs::PlannerConfig cfg;
    cfg.alpha = 0.1;
    const auto hp = rs::simulate(test, rs::ScalerAdapter::robustscaler(cfg, intensity), pending, processing, 1, opt);

    std::cout << "BP(2):      hit_rate=" << bp.hit_rate << " relative_cost=" << bp.relative_cost << '\n';
    std::cout << "HP(0.9):    hit_rate=" << hp.hit_rate << " relative_cost=" << hp.relative_cost << '\n';
}
