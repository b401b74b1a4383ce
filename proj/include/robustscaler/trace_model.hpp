#pragma once

// Query traces: CSV ingestion, fixed-step aggregation, service-time models
// and synthetic NHPP trace generation by time rescaling.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "robustscaler/errors.hpp"
#include "robustscaler/intensity.hpp"
#include "robustscaler/rng.hpp"

namespace robustscaler {

struct QueryEvent {
    double arrival = 0.0;                  // seconds since trace epoch
    std::optional<double> processing;      // seconds; absent => drawn from a model

    friend bool operator==(const QueryEvent&, const QueryEvent&) = default;
};

using Trace = std::vector<QueryEvent>;

/// Query counts per fixed time step.
class QpsSeries {
public:
    QpsSeries(std::vector<std::int64_t> counts, double step, double epoch = 0.0)
        : counts_(std::move(counts)), step_(step), epoch_(epoch) {
        detail::require(step_ > 0.0 && std::isfinite(step_), "QPS step must be positive");
        detail::require(!counts_.empty(), "QPS series needs at least one bin");
        for (std::size_t t = 0; t < counts_.size(); ++t) {
            if (counts_[t] < 0) {
                throw InputError("QPS count at bin " + std::to_string(t) + " is negative");
            }
        }
    }

    std::span<const std::int64_t> counts() const { return counts_; }
    std::size_t size() const { return counts_.size(); }
    double step() const { return step_; }
    double epoch() const { return epoch_; }
    double end() const { return epoch_ + step_ * static_cast<double>(counts_.size()); }

    std::int64_t total() const {
        std::int64_t s = 0;
        for (auto c : counts_) s += c;
        return s;
    }

    std::vector<double> as_doubles() const { return {counts_.begin(), counts_.end()}; }

    /// Bins [first, first + length).
    QpsSeries slice(std::size_t first, std::size_t length) const {
        detail::require(first + length <= counts_.size() && length > 0, "QPS slice out of range");
        std::vector<std::int64_t> c(counts_.begin() + static_cast<std::ptrdiff_t>(first),
                                    counts_.begin() + static_cast<std::ptrdiff_t>(first + length));
        return QpsSeries(std::move(c), step_, epoch_ + step_ * static_cast<double>(first));
    }

private:
    std::vector<std::int64_t> counts_;
    double step_;
    double epoch_;
};

/// Distribution of processing (s_i) or pending (τ_i) times.
class ServiceTimeModel {
public:
    enum class Kind { fixed, exponential, empirical };

    static ServiceTimeModel fixed(double seconds) { return ServiceTimeModel(Kind::fixed, seconds, {}); }
    static ServiceTimeModel exponential(double mean) {
        return ServiceTimeModel(Kind::exponential, mean, {});
    }
    static ServiceTimeModel empirical(std::vector<double> samples) {
        detail::require(!samples.empty(), "empirical service-time model needs samples");
        double sum = 0.0;
        for (double s : samples) {
            detail::require(s > 0.0 && std::isfinite(s), "empirical service times must be positive");
            sum += s;
        }
        const double mean = sum / static_cast<double>(samples.size());
        return ServiceTimeModel(Kind::empirical, mean, std::move(samples));
    }

    /// Parses "fixed:13", "exp:20" or "exponential:20".
    static ServiceTimeModel parse(std::string_view text) {
        const auto colon = text.find(':');
        if (colon == std::string_view::npos) {
            throw InputError("service-time model must look like kind:mean, got '" + std::string(text) + "'");
        }
        const auto kind = text.substr(0, colon);
        double value = 0.0;
        const auto num = text.substr(colon + 1);
        const auto res = std::from_chars(num.data(), num.data() + num.size(), value);
        if (res.ec != std::errc{} || res.ptr != num.data() + num.size()) {
            throw InputError("bad service-time value in '" + std::string(text) + "'");
        }
        if (kind == "fixed") return fixed(value);
        if (kind == "exp" || kind == "exponential") return exponential(value);
        throw InputError("unknown service-time kind '" + std::string(kind) + "'");
    }

    Kind kind() const { return kind_; }
    double mean() const { return mean_; }
    bool deterministic() const { return kind_ == Kind::fixed; }
    std::span<const double> samples() const { return samples_; }

    /// Draw from a uniform u in (0, 1).
    double sample(double u) const {
        switch (kind_) {
            case Kind::fixed: return mean_;
            case Kind::exponential: return -mean_ * std::log(u);
            case Kind::empirical: {
                auto k = static_cast<std::size_t>(u * static_cast<double>(samples_.size()));
                return samples_[std::min(k, samples_.size() - 1)];
            }
        }
        return mean_;
    }

    std::string describe() const {
        std::ostringstream os;
        switch (kind_) {
            case Kind::fixed: os << "fixed:" << mean_; break;
            case Kind::exponential: os << "exp:" << mean_; break;
            case Kind::empirical: os << "empirical(n=" << samples_.size() << ",mean=" << mean_ << ")"; break;
        }
        return os.str();
    }

private:
    ServiceTimeModel(Kind kind, double mean, std::vector<double> samples)
        : kind_(kind), mean_(mean), samples_(std::move(samples)) {
        detail::require(mean_ > 0.0 && std::isfinite(mean_), "service-time mean must be positive");
    }

    Kind kind_;
    double mean_;
    std::vector<double> samples_;
};

// ---------------------------------------------------------------------------
// CSV I/O

struct CsvSchema {
    std::string arrival_column = "arrival_s";
    std::string processing_column = "processing_s";
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

}  // namespace detail

/// Parses a trace from CSV text. Rows are sorted by arrival time on return;
/// every malformed row is reported in a single InputError.
inline Trace parse_trace(std::istream& in, const CsvSchema& schema = {}) {
    std::string line;
    std::size_t line_no = 0;
    std::optional<std::size_t> arrival_col;
    std::optional<std::size_t> processing_col;
    std::size_t columns = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto header = detail::split_csv(line);
        columns = header.size();
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == schema.arrival_column) arrival_col = c;
            if (header[c] == schema.processing_column) processing_col = c;
        }
        break;
    }
    if (!arrival_col) {
        throw InputError("trace header must contain column '" + schema.arrival_column + "'");
    }

    Trace events;
    std::vector<std::string> problems;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv(line);
        if (cells.size() > columns) {
            problems.push_back("line " + std::to_string(line_no) + ": too many fields");
            continue;
        }
        cells.resize(columns);
        const auto arrival = detail::parse_double(cells[*arrival_col]);
        if (!arrival || !std::isfinite(*arrival)) {
            problems.push_back("line " + std::to_string(line_no) + ": unparseable arrival '" +
                               std::string(cells[*arrival_col]) + "'");
            continue;
        }
        if (*arrival < 0.0) {
            problems.push_back("line " + std::to_string(line_no) + ": negative arrival " +
                               std::string(cells[*arrival_col]));
            continue;
        }
        QueryEvent ev{*arrival, std::nullopt};
        if (processing_col && !cells[*processing_col].empty()) {
            const auto proc = detail::parse_double(cells[*processing_col]);
            if (!proc || !std::isfinite(*proc) || *proc <= 0.0) {
                problems.push_back("line " + std::to_string(line_no) + ": processing time must be positive, got '" +
                                   std::string(cells[*processing_col]) + "'");
                continue;
            }
            ev.processing = *proc;
        }
        events.push_back(ev);
    }
    if (!problems.empty()) {
        std::string msg = "malformed trace rows:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw InputError(msg);
    }
    if (events.empty()) throw InputError("trace contains no events");
    std::stable_sort(events.begin(), events.end(),
                     [](const QueryEvent& a, const QueryEvent& b) { return a.arrival < b.arrival; });
    return events;
}

inline Trace ingest_trace(const std::string& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open trace file '" + path + "'");
    return parse_trace(in, schema);
}

/// Writes `arrival_s[,processing_s]`; doubles use the shortest exact
/// representation so that parse_trace(write_trace(x)) == x.
inline void write_trace(std::ostream& out, std::span<const QueryEvent> events) {
    const bool any_processing =
        std::any_of(events.begin(), events.end(), [](const QueryEvent& e) { return e.processing.has_value(); });
    out << "arrival_s";
    if (any_processing) out << ",processing_s";
    out << '\n';
    for (const auto& e : events) {
        out << detail::format_double(e.arrival);
        if (any_processing) {
            out << ',';
            if (e.processing) out << detail::format_double(*e.processing);
        }
        out << '\n';
    }
}

inline void save_trace(const std::string& path, std::span<const QueryEvent> events) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write trace file '" + path + "'");
    write_trace(out, events);
}

// ---------------------------------------------------------------------------
// Aggregation

/// Counts per step over [begin, end); events outside are ignored.
inline QpsSeries aggregate_qps(std::span<const QueryEvent> events, double step, double begin, double end) {
    detail::require(step > 0.0, "aggregation step must be positive");
    detail::require(end > begin, "aggregation window must be non-empty");
    const auto bins = static_cast<std::size_t>(std::ceil((end - begin) / step - 1e-12));
    std::vector<std::int64_t> counts(std::max<std::size_t>(bins, 1), 0);
    for (const auto& e : events) {
        if (e.arrival < begin || e.arrival >= end) continue;
        auto b = static_cast<std::size_t>(std::floor((e.arrival - begin) / step));
        counts[std::min(b, counts.size() - 1)] += 1;
    }
    return QpsSeries(std::move(counts), step, begin);
}

/// Counts per step from `epoch` through the bin holding the last event.
inline QpsSeries aggregate_qps(std::span<const QueryEvent> events, double step, double epoch = 0.0) {
    detail::require(step > 0.0, "aggregation step must be positive");
    if (events.empty()) throw InputError("cannot aggregate an empty trace");
    double last = epoch;
    for (const auto& e : events) {
        detail::require(e.arrival >= epoch, "event precedes aggregation epoch");
        last = std::max(last, e.arrival);
    }
    const auto bins = static_cast<std::size_t>(std::floor((last - epoch) / step)) + 1;
    std::vector<std::int64_t> counts(bins, 0);
    for (const auto& e : events) {
        auto b = static_cast<std::size_t>(std::floor((e.arrival - epoch) / step));
        counts[std::min(b, bins - 1)] += 1;
    }
    return QpsSeries(std::move(counts), step, epoch);
}

// ---------------------------------------------------------------------------
// Synthetic generation

struct GenerationOptions {
    double start = 0.0;
    double cell = 1.0;           // integration cell width for callable intensities
    double tolerance = 1e-9;     // inversion tolerance in seconds
    std::optional<ServiceTimeModel> processing;
};

namespace detail {

// 5-point Gauss-Legendre nodes/weights on [-1, 1].
inline constexpr std::array<double, 5> kGlNodes{0.0, -0.5384693101056831, 0.5384693101056831,
                                                -0.9061798459386640, 0.9061798459386640};
inline constexpr std::array<double, 5> kGlWeights{0.5688888888888889, 0.4786286704993665,
                                                  0.4786286704993665, 0.2369268850561891,
                                                  0.2369268850561891};

template <class F>
double checked_rate(const F& lambda, double t) {
    const double v = lambda(t);
    if (!std::isfinite(v)) {
        throw InputError("intensity is not finite at t=" + format_double(t));
    }
    if (v < 0.0) throw InputError("intensity is negative at t=" + format_double(t));
    return v;
}

template <class F>
double gauss_legendre(const F& lambda, double a, double b) {
    if (b <= a) return 0.0;
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double s = 0.0;
    for (std::size_t k = 0; k < kGlNodes.size(); ++k) s += kGlWeights[k] * checked_rate(lambda, mid + half * kGlNodes[k]);
    return s * half;
}

inline void attach_processing(Trace& events, const GenerationOptions& opt, std::uint64_t seed) {
    if (!opt.processing) return;
    const rng::CounterStream stream(seed);
    for (std::size_t i = 0; i < events.size(); ++i) {
        events[i].processing = opt.processing->sample(stream.uniform(rng::Domain::trace_processing, i, 0));
    }
}

}  // namespace detail

/// NHPP arrivals on [start, start + horizon) from an arbitrary rate function,
/// by time rescaling: unit-rate exponential sums mapped through the
/// numerically inverted cumulative intensity.
template <class F>
    requires std::invocable<const F&, double>
Trace generate_nhpp_trace(const F& lambda, double horizon, std::uint64_t seed,
                          const GenerationOptions& opt = {}) {
    detail::require(horizon > 0.0 && std::isfinite(horizon), "generation horizon must be positive");
    detail::require(opt.cell > 0.0, "generation cell must be positive");
    const auto cells = static_cast<std::size_t>(std::ceil(horizon / opt.cell));
    const double t_end = opt.start + horizon;
    auto cell_lo = [&](std::size_t c) { return opt.start + opt.cell * static_cast<double>(c); };
    auto cell_hi = [&](std::size_t c) { return std::min(t_end, cell_lo(c + 1)); };

    std::vector<double> cum(cells + 1, 0.0);
    for (std::size_t c = 0; c < cells; ++c) cum[c + 1] = cum[c] + detail::gauss_legendre(lambda, cell_lo(c), cell_hi(c));

    const rng::CounterStream stream(seed);
    Trace events;
    double mass = 0.0;
    std::size_t c = 0;
    for (std::uint64_t i = 0;; ++i) {
        mass += stream.exponential(rng::Domain::trace_arrivals, i, 0);
        if (mass >= cum.back()) break;
        while (cum[c + 1] < mass) ++c;
        // Safeguarded Newton on G(t) = cum[c] + ∫_lo^t λ - mass over [lo, hi].
        const double lo0 = cell_lo(c);
        double lo = lo0;
        double hi = cell_hi(c);
        const double span_mass = cum[c + 1] - cum[c];
        double t = lo + (mass - cum[c]) / span_mass * (hi - lo);
        for (int it = 0; it < 100; ++it) {
            const double g = cum[c] + detail::gauss_legendre(lambda, lo0, t) - mass;
            if (g > 0.0) hi = t; else lo = t;
            const double rate = detail::checked_rate(lambda, t);
            double next = rate > 0.0 ? t - g / rate : 0.5 * (lo + hi);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            const bool done = std::abs(next - t) < opt.tolerance || hi - lo < opt.tolerance;
            t = next;
            if (done) break;
        }
        events.push_back({t, std::nullopt});
    }
    detail::attach_processing(events, opt, seed);
    return events;
}

/// Exact time-rescaling generation for a piecewise-constant intensity.
inline Trace generate_nhpp_trace(const PiecewiseIntensity& intensity, double horizon, std::uint64_t seed,
                                 const GenerationOptions& opt = {}) {
    detail::require(horizon > 0.0, "generation horizon must be positive");
    const double from = std::max(opt.start, intensity.start());
    const double to = std::min(from + horizon, intensity.end());
    const double total = intensity.integrate(from, to);
    const rng::CounterStream stream(seed);
    Trace events;
    double mass = 0.0;
    for (std::uint64_t i = 0;; ++i) {
        mass += stream.exponential(rng::Domain::trace_arrivals, i, 0);
        if (mass >= total) break;
        events.push_back({intensity.inverse_integrate(from, mass), std::nullopt});
    }
    detail::attach_processing(events, opt, seed);
    return events;
}

}  // namespace robustscaler
