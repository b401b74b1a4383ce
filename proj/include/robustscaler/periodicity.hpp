#pragma once

// Dominant-period detection on an aggregated count series.
//
// The detector works on the linearly detrended series. A lag L is reported
// when (a) the sample autocorrelation has a prominent local peak at L that
// clears a white-noise significance band, (b) the integer multiples of L
// inside the search range are significant as well, and (c) the dominant
// periodogram frequency is a harmonic of 1/L. The peak lag is then refined
// by a least-squares harmonic fit.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "robustscaler/errors.hpp"
#include "robustscaler/trace_model.hpp"

namespace robustscaler {

struct PeriodInfo {
    bool detected = false;
    std::size_t period_bins = 0;
    double score = 0.0;   // in [0, 1], grows with peak prominence
};

struct PeriodDetectionOptions {
    double significance = 0.01;      // family-wise level of the white-noise band
    std::size_t max_harmonic = 12;   // periodogram harmonics accepted as agreement
    double refine_fraction = 0.05;   // relative neighbourhood searched around a peak
    std::size_t refine_harmonics = 3;  // sine/cosine pairs in the refinement fit
};

namespace periodicity {

inline std::vector<double> detrend(std::span<const double> x) {
    const auto n = static_cast<double>(x.size());
    double st = 0.0, sx = 0.0, stt = 0.0, stx = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        const auto tt = static_cast<double>(t);
        st += tt;
        sx += x[t];
        stt += tt * tt;
        stx += tt * x[t];
    }
    const double denom = n * stt - st * st;
    const double slope = denom != 0.0 ? (n * stx - st * sx) / denom : 0.0;
    const double icpt = (sx - slope * st) / n;
    std::vector<double> out(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) out[t] = x[t] - icpt - slope * static_cast<double>(t);
    return out;
}

/// Biased sample autocorrelation r[0..max_lag] of a zero-mean series.
inline std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
    std::vector<double> acf(max_lag + 1, 0.0);
    double c0 = 0.0;
    for (double v : x) c0 += v * v;
    if (c0 <= 0.0) return acf;
    for (std::size_t k = 0; k <= max_lag && k < x.size(); ++k) {
        double s = 0.0;
        for (std::size_t t = 0; t + k < x.size(); ++t) s += x[t] * x[t + k];
        acf[k] = s / c0;
    }
    return acf;
}

/// Variance explained by a least-squares fit of `harmonics` sine/cosine
/// pairs with the given (possibly non-integer) period. Unlike raw DFT power
/// this is not biased by leakage when only a few cycles are observed.
inline double harmonic_fit_power(std::span<const double> x, double period, std::size_t harmonics) {
    std::size_t h_count = 0;
    while (h_count < harmonics && 2.0 * static_cast<double>(h_count + 1) < period) ++h_count;
    if (h_count == 0) return 0.0;
    const auto p = static_cast<Eigen::Index>(2 * h_count);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd proj = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd row(p);
    std::vector<double> cw(h_count), sw(h_count), c(h_count, 1.0), s(h_count, 0.0);
    for (std::size_t h = 0; h < h_count; ++h) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(h + 1) / period;
        cw[h] = std::cos(w);
        sw[h] = std::sin(w);
    }
    for (std::size_t t = 0; t < x.size(); ++t) {
        for (std::size_t h = 0; h < h_count; ++h) {
            row(static_cast<Eigen::Index>(2 * h)) = c[h];
            row(static_cast<Eigen::Index>(2 * h + 1)) = s[h];
            const double c2 = c[h] * cw[h] - s[h] * sw[h];
            s[h] = s[h] * cw[h] + c[h] * sw[h];
            c[h] = c2;
        }
        gram.selfadjointView<Eigen::Lower>().rankUpdate(row);
        proj += x[t] * row;
    }
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    const Eigen::VectorXd coef = gram.ldlt().solve(proj);
    return coef.dot(proj);
}

/// Periodogram |X_f|^2 for f = 0..n/2 (f = 0 included for indexing).
inline std::vector<double> periodogram(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<double> power(n / 2 + 1, 0.0);
    for (std::size_t f = 1; f <= n / 2; ++f) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(f) / static_cast<double>(n);
        // Rotating phasor; renormalised periodically to bound drift.
        const double cw = std::cos(w), sw = std::sin(w);
        double c = 1.0, s = 0.0, re = 0.0, im = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            re += x[t] * c;
            im -= x[t] * s;
            const double nc = c * cw - s * sw;
            s = s * cw + c * sw;
            c = nc;
            if ((t & 1023u) == 1023u) {
                const double a = static_cast<double>(t + 1) * w;
                c = std::cos(a);
                s = std::sin(a);
            }
        }
        power[f] = re * re + im * im;
    }
    return power;
}

/// Averages consecutive windows of `window` bins (the trailing partial
/// window is dropped).
inline std::vector<double> window_average(std::span<const double> x, std::size_t window) {
    detail::require(window >= 1, "aggregation window must be >= 1");
    std::vector<double> out;
    for (std::size_t b = 0; b + window <= x.size(); b += window) {
        double s = 0.0;
        for (std::size_t k = 0; k < window; ++k) s += x[b + k];
        out.push_back(s / static_cast<double>(window));
    }
    return out;
}

}  // namespace periodicity

inline PeriodInfo detect_period(std::span<const double> series, std::size_t max_period,
                                const PeriodDetectionOptions& opt = {}) {
    const std::size_t n = series.size();
    detail::require(max_period >= 2, "max_period must be at least 2");
    if (n < 2 * max_period) {
        throw InputError("series of length " + std::to_string(n) + " is shorter than 2*max_period (" +
                         std::to_string(2 * max_period) + ")");
    }
    for (double v : series) detail::require(std::isfinite(v), "series must be finite");

    const auto x = periodicity::detrend(series);
    double energy = 0.0, scale = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        energy += x[t] * x[t];
        scale += series[t] * series[t];
    }
    if (energy <= 1e-20 * std::max(scale, 1e-300) || energy == 0.0) return {};

    // Largest lag strictly below n/2.
    const std::size_t max_lag = std::min(max_period, (n - 1) / 2);
    const auto acf = periodicity::autocorrelation(x, max_lag);
    const boost::math::normal_distribution<double> normal;
    const double z = boost::math::quantile(normal, 1.0 - opt.significance / (2.0 * static_cast<double>(max_lag)));
    const double band = z / std::sqrt(static_cast<double>(n));

    // Prominent local maxima above the band.
    struct Peak {
        std::size_t lag;
        double prominence;
    };
    std::vector<Peak> peaks;
    double running_min = acf[0];
    for (std::size_t k = 1; k <= max_lag; ++k) {
        running_min = std::min(running_min, acf[k]);
        if (k < 2) continue;
        const bool left = acf[k] >= acf[k - 1];
        const bool right = k == max_lag || acf[k] > acf[k + 1];
        const double prominence = acf[k] - running_min;
        if (left && right && acf[k] > band && prominence > band) peaks.push_back({k, prominence});
    }
    if (peaks.empty()) return {};

    auto significant_near = [&](std::size_t lag) {
        double best = -1.0;
        for (std::size_t j = lag > 0 ? lag - 1 : 0; j <= std::min(lag + 1, max_lag); ++j) best = std::max(best, acf[j]);
        return best > band;
    };
    auto multiples_significant = [&](std::size_t lag) {
        for (std::size_t m = 2 * lag; m <= max_lag; m += lag) {
            if (!significant_near(m)) return false;
        }
        return true;
    };

    const auto strongest = *std::max_element(peaks.begin(), peaks.end(),
                                             [&](const Peak& a, const Peak& b) { return acf[a.lag] < acf[b.lag]; });
    // Smallest significant peak that the strongest peak is a multiple of.
    std::size_t chosen = strongest.lag;
    for (const auto& p : peaks) {
        if (p.lag > strongest.lag) break;
        const double ratio = static_cast<double>(strongest.lag) / static_cast<double>(p.lag);
        const double tol = std::max(1.0, opt.refine_fraction * static_cast<double>(strongest.lag)) /
                           static_cast<double>(p.lag);
        if (std::abs(ratio - std::round(ratio)) <= tol && multiples_significant(p.lag)) {
            chosen = p.lag;
            break;
        }
    }
    // Refine: the ACF peak of a smooth periodic signal is flat and the
    // biased estimate drags it toward shorter lags, so the lag is
    // re-estimated from a least-squares harmonic fit, which is far sharper.
    // The window is re-centred while the optimum sits on its edge.
    {
        const auto radius = std::max<std::size_t>(1, static_cast<std::size_t>(opt.refine_fraction * static_cast<double>(chosen)));
        const std::size_t floor_lag = chosen > 3 * radius + 2 ? chosen - 3 * radius : 2;
        const std::size_t ceil_lag = std::min(chosen + 3 * radius, max_lag);
        std::map<std::size_t, double> cache;
        const auto fit = [&](std::size_t k) {
            auto it = cache.find(k);
            if (it == cache.end()) {
                it = cache.emplace(k, periodicity::harmonic_fit_power(x, static_cast<double>(k), opt.refine_harmonics)).first;
            }
            return it->second;
        };
        std::size_t centre = chosen;
        for (int pass = 0; pass < 3; ++pass) {
            const std::size_t lo = std::max(floor_lag, centre > radius ? centre - radius : 2);
            const std::size_t hi = std::min(ceil_lag, centre + radius);
            std::size_t best = centre;
            for (std::size_t k = lo; k <= hi; ++k) {
                if (fit(k) > fit(best)) best = k;
            }
            const bool on_edge = (best == lo && lo > floor_lag) || (best == hi && hi < ceil_lag);
            centre = best;
            if (!on_edge) break;
        }
        chosen = centre;
    }
    if (!multiples_significant(chosen) || acf[chosen] <= band || 2 * chosen >= n) return {};

    // Cross-check against the periodogram's dominant frequency.
    const auto power = periodicity::periodogram(x);
    std::size_t f_star = 1;
    for (std::size_t f = 2; f < power.size(); ++f) {
        if (power[f] > power[f_star]) f_star = f;
    }
    const double nd = static_cast<double>(n);
    const double p_lo = nd / (static_cast<double>(f_star) + 0.5);
    const double p_hi = f_star > 0 ? nd / (static_cast<double>(f_star) - 0.5) : nd;
    bool agrees = false;
    for (std::size_t h = 1; h <= opt.max_harmonic && !agrees; ++h) {
        const double candidate = static_cast<double>(chosen) / static_cast<double>(h);
        agrees = candidate >= p_lo - 1.0 && candidate <= p_hi + 1.0;
    }
    if (!agrees) return {};

    double min_before = acf[0];
    for (std::size_t k = 1; k <= chosen; ++k) min_before = std::min(min_before, acf[k]);
    const double prominence = acf[chosen] - min_before;
    return {true, chosen, std::clamp(prominence / 2.0, 0.0, 1.0)};
}

/// Detection on a count series, optionally after averaging windows of
/// `window` bins. The reported period is in units of the original bins.
inline PeriodInfo detect_period(const QpsSeries& series, std::size_t max_period, std::size_t window = 1,
                                const PeriodDetectionOptions& opt = {}) {
    const auto raw = series.as_doubles();
    if (window <= 1) return detect_period(std::span<const double>(raw), max_period, opt);
    const auto coarse = periodicity::window_average(raw, window);
    auto info = detect_period(std::span<const double>(coarse), std::max<std::size_t>(2, max_period / window), opt);
    info.period_bins *= window;
    return info;
}

}  // namespace robustscaler
