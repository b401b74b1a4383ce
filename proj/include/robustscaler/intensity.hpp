#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "robustscaler/errors.hpp"

namespace robustscaler {

/// Piecewise-constant arrival rate on a uniform grid.
///
/// Bin k covers [start + k*step, start + (k+1)*step) with rate rates[k]
/// (events per second). The cumulative intensity is stored at every
/// breakpoint, so integrals and their inverses are exact up to rounding.
/// Outside [start, end()) the rate is undefined; queries that need mass
/// from beyond end() raise HorizonExhausted.
class PiecewiseIntensity {
public:
    PiecewiseIntensity(double start, double step, std::vector<double> rates)
        : start_(start), step_(step), rates_(std::move(rates)) {
        detail::require(step_ > 0.0 && std::isfinite(step_), "intensity step must be positive");
        detail::require(std::isfinite(start_), "intensity start must be finite");
        detail::require(!rates_.empty(), "intensity needs at least one bin");
        cumulative_.resize(rates_.size() + 1);
        cumulative_[0] = 0.0;
        for (std::size_t k = 0; k < rates_.size(); ++k) {
            const double r = rates_[k];
            if (!(r >= 0.0) || !std::isfinite(r)) {
                std::ostringstream os;
                os << "intensity bin " << k << " has invalid rate " << r;
                throw InputError(os.str());
            }
            cumulative_[k + 1] = cumulative_[k] + r * step_;
        }
    }

    static PiecewiseIntensity constant(double rate, double start, double horizon,
                                       double step = 1.0) {
        const auto bins = static_cast<std::size_t>(std::ceil(horizon / step));
        return PiecewiseIntensity(start, step, std::vector<double>(std::max<std::size_t>(bins, 1), rate));
    }

    double start() const { return start_; }
    double step() const { return step_; }
    double end() const { return start_ + step_ * static_cast<double>(rates_.size()); }
    std::size_t bins() const { return rates_.size(); }
    std::span<const double> rates() const { return rates_; }
    std::span<const double> breakpoint_cumulative() const { return cumulative_; }

    double max_rate() const { return *std::max_element(rates_.begin(), rates_.end()); }

    /// Rate at time t; times at or past end() report the last bin.
    double rate(double t) const { return rates_[bin_of(t)]; }

    /// Λ(t) = ∫_start^t λ, for t clamped into [start, end()].
    double cumulative(double t) const {
        if (t <= start_) return 0.0;
        if (t >= end()) return cumulative_.back();
        const std::size_t k = bin_of(t);
        return cumulative_[k] + rates_[k] * (t - breakpoint(k));
    }

    /// ∫_from^to λ(u) du. Requires from <= to; both inside the domain.
    double integrate(double from, double to) const {
        detail::require(from <= to, "integrate: from must not exceed to");
        check_domain(from);
        check_domain(to);
        if (from == to) return 0.0;
        return cumulative(to) - cumulative(from);
    }

    /// Smallest t >= from with ∫_from^t λ = mass.
    double inverse_integrate(double from, double mass) const {
        detail::require(mass >= 0.0 && std::isfinite(mass), "inverse_integrate: mass must be >= 0");
        check_domain(from);
        if (mass == 0.0) return from;
        const double target = cumulative(from) + mass;
        if (target > cumulative_.back()) {
            std::ostringstream os;
            os << "intensity mass " << mass << " unreachable from t=" << from
               << " before horizon end " << end();
            throw HorizonExhausted(os.str());
        }
        // First breakpoint whose cumulative reaches the target.
        const auto first = cumulative_.begin() + static_cast<std::ptrdiff_t>(bin_of(from)) + 1;
        auto it = std::lower_bound(first, cumulative_.end(), target);
        const auto k = static_cast<std::size_t>(it - cumulative_.begin()) - 1;
        // cumulative_[k] < target <= cumulative_[k+1], hence rates_[k] > 0
        // unless k is the bin containing `from`.
        const double base = std::max(breakpoint(k), from);
        const double base_mass = cumulative(base);
        const double t = base + (target - base_mass) / rates_[k];
        return std::clamp(t, from, breakpoint(k + 1));
    }

    /// Copy with every rate multiplied by `factor` (factor >= 0).
    PiecewiseIntensity scaled(double factor) const {
        detail::require(factor >= 0.0, "scale factor must be non-negative");
        std::vector<double> r(rates_);
        for (auto& v : r) v *= factor;
        return PiecewiseIntensity(start_, step_, std::move(r));
    }

private:
    double breakpoint(std::size_t k) const { return start_ + step_ * static_cast<double>(k); }

    std::size_t bin_of(double t) const {
        if (t <= start_) return 0;
        const double pos = (t - start_) / step_;
        auto k = static_cast<std::size_t>(pos);
        if (k >= rates_.size()) return rates_.size() - 1;
        // Guard against rounding that lands t just before its breakpoint.
        if (k + 1 < rates_.size() && breakpoint(k + 1) <= t) ++k;
        return k;
    }

    void check_domain(double t) const {
        const double slack = 1e-9 * std::max(1.0, std::abs(end()));
        if (t < start_ - slack || t > end() + slack) {
            std::ostringstream os;
            os << "time " << t << " outside intensity domain [" << start_ << ", " << end() << "]";
            throw HorizonExhausted(os.str());
        }
    }

    double start_;
    double step_;
    std::vector<double> rates_;
    std::vector<double> cumulative_;
};

}  // namespace robustscaler
