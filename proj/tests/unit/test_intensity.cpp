#include <gtest/gtest.h>

#include <vector>

#include "robustscaler/arrival_engine.hpp"
#include "robustscaler/intensity.hpp"
#include "robustscaler/rng.hpp"

using namespace robustscaler;

TEST(Integrate, ConstantRectangle) {
    const auto f = PiecewiseIntensity::constant(2.0, 0.0, 10.0);
    EXPECT_DOUBLE_EQ(integrate(f, 0.0, 3.0), 6.0);
}

TEST(Integrate, PiecewiseBins) {
    const PiecewiseIntensity f(0.0, 1.0, {1.0, 2.0});
    EXPECT_DOUBLE_EQ(f.cumulative(1.5), 2.0);
    EXPECT_DOUBLE_EQ(integrate(f, 0.0, 1.5), 2.0);
}

TEST(Integrate, EmptyInterval) {
    const PiecewiseIntensity f(0.0, 1.0, {1.0, 2.0});
    EXPECT_EQ(integrate(f, 0.7, 0.7), 0.0);
}

TEST(Integrate, RejectsReversedBounds) {
    const PiecewiseIntensity f(0.0, 1.0, {1.0, 2.0});
    EXPECT_THROW(integrate(f, 1.0, 0.5), InputError);
}

TEST(InverseIntegrate, ConstantRectangle) {
    const auto f = PiecewiseIntensity::constant(2.0, 0.0, 10.0);
    EXPECT_DOUBLE_EQ(inverse_integrate(f, 0.0, 6.0), 3.0);
}

TEST(InverseIntegrate, ZeroMassIsIdentity) {
    const PiecewiseIntensity f(0.0, 1.0, {1.0, 2.0});
    EXPECT_EQ(inverse_integrate(f, 0.25, 0.0), 0.25);
}

TEST(InverseIntegrate, PiecewiseBins) {
    const PiecewiseIntensity f(0.0, 1.0, {1.0, 2.0});
    EXPECT_DOUBLE_EQ(inverse_integrate(f, 0.0, 2.0), 1.5);
}

TEST(InverseIntegrate, SkipsZeroRateBins) {
    const PiecewiseIntensity f(0.0, 1.0, {1.0, 0.0, 0.0, 3.0});
    EXPECT_DOUBLE_EQ(inverse_integrate(f, 0.5, 0.5), 1.0);
    EXPECT_DOUBLE_EQ(inverse_integrate(f, 0.5, 0.5 + 1.5), 3.5);
}

TEST(InverseIntegrate, UnreachableMassThrows) {
    const PiecewiseIntensity f(0.0, 1.0, {1.0, 2.0});
    EXPECT_THROW(inverse_integrate(f, 0.0, 3.5), HorizonExhausted);
}

TEST(InverseIntegrate, RoundTripProperty) {
    const rng::CounterStream s(3);
    std::vector<double> rates(200);
    for (std::size_t k = 0; k < rates.size(); ++k) {
        // Some zero bins to exercise the flat parts of the cumulative.
        rates[k] = k % 17 == 3 ? 0.0 : 5.0 * s.uniform(rng::Domain::generic, k, 0);
    }
    const PiecewiseIntensity f(10.0, 0.7, rates);
    for (std::uint64_t i = 0; i < 2000; ++i) {
        double a = f.start() + (f.end() - f.start()) * s.uniform(rng::Domain::generic, i, 1);
        double b = f.start() + (f.end() - f.start()) * s.uniform(rng::Domain::generic, i, 2);
        if (a > b) std::swap(a, b);
        if (f.rate(b) == 0.0) continue;   // inverse returns the first time reaching the mass
        const double m = integrate(f, a, b);
        EXPECT_NEAR(inverse_integrate(f, a, m), b, 1e-9);
    }
}

TEST(PiecewiseIntensity, RejectsNegativeOrNonFinite) {
    EXPECT_THROW(PiecewiseIntensity(0.0, 1.0, {1.0, -1.0}), InputError);
    EXPECT_THROW(PiecewiseIntensity(0.0, 1.0, {1.0, std::nan("")}), InputError);
    EXPECT_THROW(PiecewiseIntensity(0.0, 0.0, {1.0}), InputError);
    EXPECT_THROW(PiecewiseIntensity(0.0, 1.0, {}), InputError);
}

TEST(PiecewiseIntensity, OutsideDomainThrows) {
    const PiecewiseIntensity f(5.0, 1.0, {1.0, 2.0});
    EXPECT_THROW(integrate(f, 4.0, 6.0), HorizonExhausted);
    EXPECT_THROW(integrate(f, 5.0, 7.5), HorizonExhausted);
}

TEST(PiecewiseIntensity, ScaledMultipliesMass) {
    const PiecewiseIntensity f(0.0, 1.0, {1.0, 2.0, 3.0});
    EXPECT_DOUBLE_EQ(integrate(f.scaled(1.5), 0.0, 3.0), 9.0);
}
