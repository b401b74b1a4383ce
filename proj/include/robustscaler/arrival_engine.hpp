#pragma once

// Quantities over a predicted intensity: integrated intensity and its
// inverse, Gamma quantiles, and Monte Carlo draws of upcoming arrivals.
//
// Under time rescaling the i-th arrival after `now` sits at
// Λ⁻¹(now, G_i) with G_i ~ Gamma(i, 1), which gives both the exact
// quantiles and the sampler.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "robustscaler/errors.hpp"
#include "robustscaler/intensity.hpp"
#include "robustscaler/rng.hpp"
#include "robustscaler/trace_model.hpp"

namespace robustscaler {

inline double integrate(const PiecewiseIntensity& intensity, double from, double to) {
    return intensity.integrate(from, to);
}

inline double inverse_integrate(const PiecewiseIntensity& intensity, double from, double mass) {
    return intensity.inverse_integrate(from, mass);
}

/// q with P(Gamma(shape, 1) <= q) = p.
inline double gamma_quantile(std::size_t shape, double p) {
    detail::require(shape >= 1, "gamma_quantile: shape must be >= 1");
    detail::require(p > 0.0 && p < 1.0, "gamma_quantile: p must be in (0, 1)");
    const double a = static_cast<double>(shape);
    if (shape == 1) return -std::log1p(-p);

    const auto cdf = [a](double x) { return boost::math::gamma_p(a, x); };
    double lo = 0.0;
    double hi = a + 10.0 * std::sqrt(a) + 10.0;
    while (cdf(hi) < p) {
        lo = hi;
        hi *= 2.0;
    }
    // Wilson-Hilferty start.
    const double z = boost::math::quantile(boost::math::normal_distribution<double>(), p);
    const double c = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * std::sqrt(a));
    double x = a * c * c * c;
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);

    for (int it = 0; it < 200; ++it) {
        const double f = cdf(x) - p;
        if (f == 0.0) return x;
        if (f < 0.0) lo = x;
        else hi = x;
        const double tol = std::max(1e-10, 4.0 * std::numeric_limits<double>::epsilon() * x);
        if (hi - lo <= tol) break;
        const double d = boost::math::gamma_p_derivative(a, x);
        double next = d > 0.0 ? x - f / d : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double moved = std::abs(next - x);
        x = next;
        if (moved <= tol) break;
    }
    return x;
}

/// Exact p-quantile of the i-th arrival after `now`.
inline double arrival_quantile(const PiecewiseIntensity& intensity, double now, std::size_t i, double p) {
    return intensity.inverse_integrate(now, gamma_quantile(i, p));
}

/// Monte Carlo draws of upcoming arrivals and their pending times.
///
/// Column k holds, for every row r, the k-th arrival after `now` and an
/// independent pending time for that query. Columns cover arrival indices
/// [first_index, first_index + columns()). Draws are addressed by
/// (row, index), so extending the set or changing R leaves existing
/// samples untouched. The intensity must outlive the sample set.
class ArrivalSampleSet {
public:
    ArrivalSampleSet(const PiecewiseIntensity& intensity, double now, std::size_t rows,
                     ServiceTimeModel pending, std::uint64_t seed, std::size_t first_index = 1)
        : intensity_(&intensity), now_(now), rows_(rows), first_(first_index), pending_(std::move(pending)),
          seed_(seed), stream_(seed), mass_(rows, 0.0) {
        detail::require(rows >= 1, "sample set needs R >= 1");
        detail::require(first_index >= 1, "arrival indices start at 1");
    }

    std::size_t rows() const { return rows_; }
    std::size_t columns() const { return xi_.size(); }
    std::size_t first_index() const { return first_; }
    std::size_t last_index() const { return first_ + xi_.size() - 1; }
    double now() const { return now_; }
    std::uint64_t seed() const { return seed_; }
    const PiecewiseIntensity& intensity() const { return *intensity_; }
    const ServiceTimeModel& pending_model() const { return pending_; }

    /// Makes sure columns up to arrival index `index` exist.
    void ensure(std::size_t index) {
        detail::require(index >= first_ + released_, "arrival index precedes the first retained index");
        while (last_index_or_zero() < index) append_column();
    }

    std::span<const double> arrivals(std::size_t index) {
        ensure(index);
        return xi_[index - first_];
    }

    std::span<const double> pending(std::size_t index) {
        ensure(index);
        return tau_[index - first_];
    }

    double arrival(std::size_t row, std::size_t index) { return arrivals(index)[row]; }
    double pending(std::size_t row, std::size_t index) { return pending(index)[row]; }

    /// Frees the columns of indices below `index`; later columns keep their values.
    void release_before(std::size_t index) {
        for (std::size_t k = released_; k < xi_.size() && first_ + k < index; ++k, ++released_) {
            std::vector<double>().swap(xi_[k]);
            std::vector<double>().swap(tau_[k]);
        }
    }

private:
    std::size_t last_index_or_zero() const { return xi_.empty() ? first_ - 1 : last_index(); }

    void append_column() {
        const std::size_t index = first_ + xi_.size();
        std::vector<double> xi(rows_), tau(rows_);
        for (std::size_t r = 0; r < rows_; ++r) {
            if (index == first_ && first_ > 1) {
                const double u = stream_.uniform(rng::Domain::sample_arrivals, r, 0);
                mass_[r] = boost::math::gamma_p_inv(static_cast<double>(first_), u);
            } else {
                mass_[r] += stream_.exponential(rng::Domain::sample_arrivals, r, index);
            }
            xi[r] = intensity_->inverse_integrate(now_, mass_[r]);
            tau[r] = pending_.deterministic() ? pending_.mean()
                                              : pending_.sample(stream_.uniform(rng::Domain::sample_pending, r, index));
        }
        xi_.push_back(std::move(xi));
        tau_.push_back(std::move(tau));
    }

    const PiecewiseIntensity* intensity_;
    double now_;
    std::size_t rows_;
    std::size_t first_;
    ServiceTimeModel pending_;
    std::uint64_t seed_;
    rng::CounterStream stream_;
    std::vector<double> mass_;
    std::vector<std::vector<double>> xi_, tau_;
    std::size_t released_ = 0;
};

/// First K arrivals after `now` for R independent rows.
inline ArrivalSampleSet sample_arrivals(const PiecewiseIntensity& intensity, double now, std::size_t k,
                                        std::size_t r, const ServiceTimeModel& pending, std::uint64_t seed) {
    detail::require(k >= 1, "sample_arrivals needs K >= 1");
    ArrivalSampleSet set(intensity, now, r, pending, seed);
    set.ensure(k);
    return set;
}

}  // namespace robustscaler
