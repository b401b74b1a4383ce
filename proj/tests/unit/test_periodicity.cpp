#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "robustscaler/periodicity.hpp"
#include "robustscaler/rng.hpp"

using namespace robustscaler;

namespace {

std::vector<double> sinusoid(std::size_t n, double period, double amplitude, double offset = 10.0) {
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t) {
        x[t] = offset + amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period);
    }
    return x;
}

}  // namespace

TEST(DetectPeriod, CleanSinusoid) {
    const auto x = sinusoid(240, 24.0, 1.0);
    const auto info = detect_period(x, 100);
    ASSERT_TRUE(info.detected);
    EXPECT_EQ(info.period_bins, 24u);
    EXPECT_GT(info.score, 0.0);
    EXPECT_LE(info.score, 1.0);
}

TEST(DetectPeriod, ConstantSeriesHasNoPeriod) {
    const std::vector<double> x(500, 7.0);
    EXPECT_FALSE(detect_period(x, 100).detected);
}

TEST(DetectPeriod, LinearTrendHasNoPeriod) {
    std::vector<double> x(500);
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = 3.0 + 0.5 * static_cast<double>(t);
    EXPECT_FALSE(detect_period(x, 100).detected);
}

TEST(DetectPeriod, PoissonNoiseMostlyUndetected) {
    int detections = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        rng::PhiloxEngine eng(seed, 1);
        std::poisson_distribution<int> pois(5.0);
        std::vector<double> x(2000);
        for (auto& v : x) v = pois(eng);
        if (detect_period(x, 500).detected) ++detections;
    }
    EXPECT_LE(detections, 2);
}

TEST(DetectPeriod, ScaleInvariant) {
    auto x = sinusoid(480, 37.0, 2.0);
    rng::PhiloxEngine eng(3, 0);
    std::normal_distribution<double> noise(0.0, 0.5);
    for (auto& v : x) v += noise(eng);
    const auto base = detect_period(x, 150);
    ASSERT_TRUE(base.detected);
    for (double c : {0.01, 3.0, 1e4}) {
        std::vector<double> y(x);
        for (auto& v : y) v *= c;
        const auto scaled = detect_period(y, 150);
        EXPECT_EQ(scaled.detected, base.detected) << c;
        EXPECT_EQ(scaled.period_bins, base.period_bins) << c;
    }
}

TEST(DetectPeriod, RecoversPeriodAtSnrFour) {
    int exact = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto x = sinusoid(24 * 12, 24.0, 4.0);
        rng::PhiloxEngine eng(seed, 7);
        std::normal_distribution<double> noise(0.0, 1.0);
        for (auto& v : x) v += noise(eng);
        const auto info = detect_period(x, 72);
        if (info.detected && info.period_bins == 24) ++exact;
    }
    EXPECT_GE(exact, 95);
}

TEST(DetectPeriod, PrefersFundamentalOverMultiples) {
    // Two harmonics; the fundamental is 30 bins.
    std::vector<double> x(600);
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double ph = 2.0 * std::numbers::pi * static_cast<double>(t) / 30.0;
        x[t] = 5.0 + std::sin(ph) + 0.6 * std::sin(2.0 * ph + 0.4);
    }
    const auto info = detect_period(x, 200);
    ASSERT_TRUE(info.detected);
    EXPECT_EQ(info.period_bins, 30u);
}

TEST(DetectPeriod, ShortSeriesThrows) {
    const auto x = sinusoid(50, 10.0, 1.0);
    EXPECT_THROW(detect_period(x, 30), InputError);
    EXPECT_THROW(detect_period(x, 1), InputError);
}

TEST(DetectPeriod, NonFiniteThrows) {
    auto x = sinusoid(100, 10.0, 1.0);
    x[5] = std::nan("");
    EXPECT_THROW(detect_period(x, 20), InputError);
}

TEST(DetectPeriod, WindowAveragedSeries) {
    std::vector<std::int64_t> counts(1440 * 3);
    for (std::size_t t = 0; t < counts.size(); ++t) {
        counts[t] = static_cast<std::int64_t>(
            std::lround(50.0 + 40.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 1440.0)));
    }
    const QpsSeries q(counts, 60.0, 0.0);
    const auto info = detect_period(q, 1440, 10);
    ASSERT_TRUE(info.detected);
    EXPECT_EQ(info.period_bins, 1440u);
}

TEST(Periodogram, PureToneHasSinglePeak) {
    const auto x = periodicity::detrend(sinusoid(128, 16.0, 1.0, 0.0));
    const auto p = periodicity::periodogram(x);
    std::size_t best = 1;
    for (std::size_t f = 1; f < p.size(); ++f) {
        if (p[f] > p[best]) best = f;
    }
    EXPECT_EQ(best, 8u);
}

TEST(Autocorrelation, LagZeroIsOne) {
    const auto x = periodicity::detrend(sinusoid(100, 10.0, 1.0));
    const auto acf = periodicity::autocorrelation(x, 20);
    EXPECT_NEAR(acf[0], 1.0, 1e-12);
    EXPECT_GT(acf[10], 0.8);
    EXPECT_LT(acf[5], -0.8);
}
