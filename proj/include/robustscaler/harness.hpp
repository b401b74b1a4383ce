#pragma once

// Experiment plumbing: parameter sweeps, trace perturbation and the
// detect -> train -> sweep pipeline driven by an INI file.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "robustscaler/errors.hpp"
#include "robustscaler/intensity.hpp"
#include "robustscaler/nhpp.hpp"
#include "robustscaler/periodicity.hpp"
#include "robustscaler/planner.hpp"
#include "robustscaler/rng.hpp"
#include "robustscaler/sim.hpp"
#include "robustscaler/trace_model.hpp"

namespace robustscaler {

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepScaler { bp, adapbp, rs_hp, rs_rt, rs_cost };

inline std::string_view to_string(SweepScaler s) {
    switch (s) {
        case SweepScaler::bp: return "bp";
        case SweepScaler::adapbp: return "adapbp";
        case SweepScaler::rs_hp: return "rs_hp";
        case SweepScaler::rs_rt: return "rs_rt";
        case SweepScaler::rs_cost: return "rs_cost";
    }
    return "?";
}

inline SweepScaler parse_sweep_scaler(std::string_view s) {
    for (auto k : {SweepScaler::bp, SweepScaler::adapbp, SweepScaler::rs_hp, SweepScaler::rs_rt, SweepScaler::rs_cost}) {
        if (to_string(k) == s) return k;
    }
    throw InputError("unknown scaler '" + std::string(s) + "' (expected bp, adapbp, rs_hp, rs_rt or rs_cost)");
}

/// Grid semantics: bp -> pool size B; adapbp -> multiplier; rs_hp ->
/// nominal hit probability (alpha = 1 - p); rs_rt -> d in seconds;
/// rs_cost -> budget B in seconds.
struct SweepSpec {
    SweepScaler scaler = SweepScaler::bp;
    std::vector<double> grid;
    double split = 0.0;                  // replay events with arrival >= split, starting at split
    std::uint64_t seed = 0;
    ServiceTimeModel pending = ServiceTimeModel::fixed(13.0);
    ServiceTimeModel processing = ServiceTimeModel::exponential(20.0);
    bool replay_processing = true;
    PlannerConfig planner;               // template for RobustScaler points
    std::shared_ptr<const PiecewiseIntensity> intensity;
    std::size_t workers = 1;
};

struct SweepRow {
    double param = 0.0;
    SimResult result;
};

inline ScalerAdapter adapter_for(const SweepSpec& spec, double param) {
    switch (spec.scaler) {
        case SweepScaler::bp: {
            detail::require(param >= 0.0 && std::floor(param) == param, "BP grid values must be non-negative integers");
            return ScalerAdapter::backup_pool(static_cast<std::size_t>(param));
        }
        case SweepScaler::adapbp: return ScalerAdapter::adaptive_backup_pool(param);
        default: break;
    }
    detail::require(spec.intensity != nullptr, "RobustScaler sweeps need a predicted intensity");
    PlannerConfig cfg = spec.planner;
    cfg.pending = spec.pending;
    cfg.mu_s = spec.processing.mean();
    cfg.seed = rng::derive_seed(spec.seed, 0x706c616eull);
    if (spec.scaler == SweepScaler::rs_hp) {
        cfg.mode = PlanMode::hp;
        cfg.alpha = 1.0 - param;
    } else if (spec.scaler == SweepScaler::rs_rt) {
        cfg.mode = PlanMode::rt;
        cfg.d = param;
    } else {
        cfg.mode = PlanMode::cost;
        cfg.budget = param;
    }
    return ScalerAdapter::robustscaler(cfg, spec.intensity);
}

inline std::vector<QueryEvent> test_split(std::span<const QueryEvent> events, double split) {
    std::vector<QueryEvent> out;
    for (const auto& e : events) {
        if (e.arrival >= split) out.push_back(e);
    }
    return out;
}

/// One replay per grid point on the test split, run on a bounded pool of
/// worker threads. Rows come back in grid order.
inline std::vector<SweepRow> run_sweep(std::span<const QueryEvent> events, const SweepSpec& spec) {
    detail::require(!spec.grid.empty(), "sweep grid is empty");
    const auto test = test_split(events, spec.split);
    if (test.empty()) throw InputError("test split starting at " + detail::format_double(spec.split) + " is empty");
    const ReplayOptions opt{spec.split, spec.replay_processing};
    const double ref = reactive_cost(test, spec.pending, spec.processing, spec.seed, opt);

    std::vector<ScalerAdapter> adapters;
    for (double p : spec.grid) adapters.push_back(adapter_for(spec, p));

    std::vector<SweepRow> rows(spec.grid.size());
    std::vector<std::exception_ptr> errors(spec.grid.size());
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t k = next++; k < rows.size(); k = next++) {
            try {
                const auto run = replay(test, adapters[k], spec.pending, spec.processing, spec.seed, opt);
                rows[k] = {spec.grid[k], compute_metrics(run, ref)};
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(spec.workers, 1, rows.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    for (std::size_t k = 0; k < errors.size(); ++k) {
        if (!errors[k]) continue;
        const std::string where = std::string(to_string(spec.scaler)) + " point " + detail::format_double(spec.grid[k]);
        try {
            std::rethrow_exception(errors[k]);
        } catch (const InputError& e) {
            throw InputError(where + ": " + e.what());
        } catch (const std::exception& e) {
            throw RuntimeFault(where + ": " + e.what());
        }
    }
    return rows;
}

inline void write_sweep_csv(std::ostream& out, SweepScaler scaler, std::span<const SweepRow> rows) {
    out << "scaler,param,hit_rate,relative_cost,rt_avg,wait_avg,total_cost,hit_rate_windowed_variance,"
           "rt_windowed_variance\n";
    for (const auto& r : rows) {
        const auto& m = r.result;
        out << to_string(scaler) << ',' << detail::format_double(r.param) << ',' << detail::format_double(m.hit_rate)
            << ',' << detail::format_double(m.relative_cost) << ',' << detail::format_double(m.rt_avg) << ','
            << detail::format_double(m.wait_avg) << ',' << detail::format_double(m.total_cost) << ','
            << detail::format_double(m.hit_rate_windowed_variance) << ','
            << detail::format_double(m.rt_windowed_variance) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Perturbation

/// Hourly deletion windows and burst injection windows. Windows repeat
/// every `period` seconds starting at `origin + offset`.
struct PerturbationSpec {
    double origin = 0.0;
    double period = 3600.0;
    double width = 300.0;
    bool delete_windows = true;
    double deletion_offset = 0.0;
    double c = 0.0;                  // replicas added per event in injection windows
    double injection_offset = 300.0;

    void validate() const {
        detail::require(period > 0.0 && width > 0.0 && width <= period, "perturbation windows need 0 < width <= period");
        detail::require(c >= 0.0 && std::isfinite(c), "amplification c must be >= 0");
        detail::require(deletion_offset >= 0.0 && deletion_offset + width <= period, "deletion window must fit the period");
        detail::require(injection_offset >= 0.0 && injection_offset + width <= period,
                        "injection window must fit the period");
    }
};

struct PerturbResult {
    Trace events;
    std::size_t deleted = 0;
    std::size_t injected = 0;
    bool all_deleted = false;
};

inline PerturbResult perturb_trace(std::span<const QueryEvent> events, const PerturbationSpec& spec,
                                   std::uint64_t seed) {
    spec.validate();
    const rng::CounterStream stream(seed);
    const auto window_of = [&](double t, double offset) -> std::optional<double> {
        if (t < spec.origin) return std::nullopt;
        const double k = std::floor((t - spec.origin) / spec.period);
        const double lo = spec.origin + k * spec.period + offset;
        if (t >= lo && t < lo + spec.width) return lo;
        return std::nullopt;
    };
    const auto whole = static_cast<std::size_t>(std::floor(spec.c));
    const double frac = spec.c - static_cast<double>(whole);

    PerturbResult out;
    for (std::size_t k = 0; k < events.size(); ++k) {
        const auto& e = events[k];
        if (spec.delete_windows && window_of(e.arrival, spec.deletion_offset)) {
            ++out.deleted;
        } else {
            out.events.push_back(e);
        }
        if (spec.c <= 0.0) continue;
        const auto lo = window_of(e.arrival, spec.injection_offset);
        if (!lo) continue;
        std::size_t copies = whole;
        if (frac > 0.0 && stream.uniform(rng::Domain::perturb, k, 0) < frac) ++copies;
        for (std::size_t j = 0; j < copies; ++j) {
            QueryEvent rep = e;
            rep.arrival = *lo + spec.width * stream.uniform(rng::Domain::perturb, k, j + 1);
            out.events.push_back(rep);
            ++out.injected;
        }
    }
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const QueryEvent& a, const QueryEvent& b) { return a.arrival < b.arrival; });
    out.all_deleted = !events.empty() && out.events.empty();
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic intensities

/// mean * (1 + a sin(2 pi t / period)) with (1 + a) / (1 - a) = ratio.
inline double sinusoid_rate(double t, double mean, double ratio, double period) {
    const double a = (ratio - 1.0) / (ratio + 1.0);
    return mean * (1.0 + a * std::sin(2.0 * std::numbers::pi * t / period));
}

/// 4^10 u^10 (1-u)^10 + 0.1 with u the time of day as a fraction.
inline double daily_bump_rate(double t) {
    const double u = std::fmod(t, 86400.0) / 86400.0;
    return std::pow(4.0, 10.0) * std::pow(u, 10.0) * std::pow(1.0 - u, 10.0) + 0.1;
}

/// Bin-averaged copy of a continuous rate on [start, start + bins*step).
template <class F>
PiecewiseIntensity bin_average(const F& rate, double start, double step, std::size_t bins) {
    std::vector<double> r(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        const double lo = start + step * static_cast<double>(b);
        r[b] = detail::gauss_legendre(rate, lo, lo + step) / step;
    }
    return PiecewiseIntensity(start, step, std::move(r));
}

// ---------------------------------------------------------------------------
// End-to-end configuration

struct E2eConfig {
    // [run]
    std::uint64_t seed = 7;
    std::string out_dir = "e2e_out";
    std::size_t workers = 1;
    // [trace]
    std::string trace_path;                // empty: synthesize
    double synthetic_days = 4.0;
    double synthetic_mean_qps = 0.5;
    double synthetic_ratio = 10.0;
    double synthetic_period_s = 86400.0;
    // [split]
    double train_fraction = 0.75;
    // [detect]
    std::size_t max_period_bins = 1440;
    std::size_t detect_window_bins = 1;
    // [train]
    double dt = 60.0;
    double beta1 = 10.0;
    double beta2 = 1.0;
    double rho = 1.0;
    std::string period = "auto";           // auto | none | <bins>
    std::size_t max_iters = 500;
    // [sim]
    std::string pending = "fixed:13";
    std::string processing = "exp:20";
    bool replay_processing = true;
    double horizon_margin_s = 3600.0;
    // [sweep]
    std::vector<std::string> scalers{"bp", "rs_hp"};
    std::vector<double> bp_grid{0, 1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<double> adapbp_grid{1, 2, 5, 10, 20};
    std::vector<double> rs_hp_grid{0.1, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.99};
    std::vector<double> rs_rt_grid{21, 22, 25, 28};
    std::vector<double> rs_cost_grid{34, 35, 37, 40};
    double interval = 1.0;
    std::size_t samples = 1000;
    std::string kappa_policy = "local";

    bool operator==(const E2eConfig&) const = default;

    void validate() const {
        detail::require(!out_dir.empty(), "run.out_dir must be set");
        if (trace_path.empty()) {
            detail::require(synthetic_days > 0.0 && synthetic_mean_qps > 0.0 && synthetic_ratio >= 1.0 &&
                                synthetic_period_s > 0.0,
                            "synthetic trace parameters must be positive (ratio >= 1)");
        }
        detail::require(train_fraction > 0.0 && train_fraction < 1.0, "split.train_fraction must be in (0, 1)");
        detail::require(dt > 0.0, "train.dt must be positive");
        detail::require(rho > 0.0, "train.rho must be positive");
        detail::require(!scalers.empty(), "sweep.scalers must list at least one scaler");
        for (const auto& s : scalers) parse_sweep_scaler(s);
        (void)ServiceTimeModel::parse(pending);
        (void)ServiceTimeModel::parse(processing);
        (void)parse_kappa_policy(kappa_policy);
        if (period != "auto" && period != "none") {
            detail::require(detail::parse_double(period).has_value(), "train.period must be auto, none or a bin count");
        }
    }
};

namespace config_detail {

inline std::string join(std::span<const double> v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k) s += ", ";
        s += detail::format_double(v[k]);
    }
    return s;
}

inline std::string join(std::span<const std::string> v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k) s += ", ";
        s += v[k];
    }
    return s;
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    for (auto part : detail::split_csv(text)) {
        const auto t = detail::trim(part);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

inline std::vector<double> split_numbers(const std::string& key, const std::string& text) {
    std::vector<double> out;
    for (const auto& s : split_list(text)) {
        const auto v = detail::parse_double(s);
        if (!v) throw InputError("config key " + key + ": '" + s + "' is not a number");
        out.push_back(*v);
    }
    return out;
}

}  // namespace config_detail

inline E2eConfig parse_e2e_config(std::istream& in) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    E2eConfig c;
    // An explicit empty value selects the synthetic trace.
    if (!tree.get_optional<std::string>("trace.path")) throw InputError("config: trace.path is required");
    const auto get = [&](const char* key, auto& field) {
        using T = std::decay_t<decltype(field)>;
        const auto node = tree.get_optional<std::string>(key);
        if (!node) return;
        const std::string text(detail::trim(*node));
        if constexpr (std::is_same_v<T, std::string>) {
            field = text;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (text == "true" || text == "1") field = true;
            else if (text == "false" || text == "0") field = false;
            else throw InputError(std::string("config key ") + key + ": expected true/false, got '" + text + "'");
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            field = config_detail::split_numbers(key, text);
        } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
            field = config_detail::split_list(text);
        } else {
            const auto v = detail::parse_double(text);
            if (!v) throw InputError(std::string("config key ") + key + ": '" + text + "' is not a number");
            if constexpr (std::is_integral_v<T>) {
                if (*v < 0 || std::floor(*v) != *v) {
                    throw InputError(std::string("config key ") + key + ": expected a non-negative integer");
                }
                field = static_cast<T>(*v);
            } else {
                field = *v;
            }
        }
    };
    get("run.seed", c.seed);
    get("run.out_dir", c.out_dir);
    get("run.workers", c.workers);
    get("trace.path", c.trace_path);
    get("trace.synthetic_days", c.synthetic_days);
    get("trace.synthetic_mean_qps", c.synthetic_mean_qps);
    get("trace.synthetic_ratio", c.synthetic_ratio);
    get("trace.synthetic_period_s", c.synthetic_period_s);
    get("split.train_fraction", c.train_fraction);
    get("detect.max_period_bins", c.max_period_bins);
    get("detect.window_bins", c.detect_window_bins);
    get("train.dt", c.dt);
    get("train.beta1", c.beta1);
    get("train.beta2", c.beta2);
    get("train.rho", c.rho);
    get("train.period", c.period);
    get("train.max_iters", c.max_iters);
    get("sim.pending", c.pending);
    get("sim.processing", c.processing);
    get("sim.replay_processing", c.replay_processing);
    get("sim.horizon_margin_s", c.horizon_margin_s);
    get("sweep.scalers", c.scalers);
    get("sweep.bp_grid", c.bp_grid);
    get("sweep.adapbp_grid", c.adapbp_grid);
    get("sweep.rs_hp_grid", c.rs_hp_grid);
    get("sweep.rs_rt_grid", c.rs_rt_grid);
    get("sweep.rs_cost_grid", c.rs_cost_grid);
    get("sweep.interval", c.interval);
    get("sweep.samples", c.samples);
    get("sweep.kappa_policy", c.kappa_policy);
    c.validate();
    return c;
}

inline E2eConfig load_e2e_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config '" + path + "'");
    return parse_e2e_config(in);
}

/// Canonical text form; parse_e2e_config(serialize_e2e_config(c)) == c.
inline std::string serialize_e2e_config(const E2eConfig& c) {
    using config_detail::join;
    using detail::format_double;
    std::ostringstream os;
    os << "[run]\n"
       << "seed = " << c.seed << "\n"
       << "out_dir = " << c.out_dir << "\n"
       << "workers = " << c.workers << "\n\n"
       << "[trace]\n"
       << "path = " << c.trace_path << "\n"
       << "synthetic_days = " << format_double(c.synthetic_days) << "\n"
       << "synthetic_mean_qps = " << format_double(c.synthetic_mean_qps) << "\n"
       << "synthetic_ratio = " << format_double(c.synthetic_ratio) << "\n"
       << "synthetic_period_s = " << format_double(c.synthetic_period_s) << "\n\n"
       << "[split]\n"
       << "train_fraction = " << format_double(c.train_fraction) << "\n\n"
       << "[detect]\n"
       << "max_period_bins = " << c.max_period_bins << "\n"
       << "window_bins = " << c.detect_window_bins << "\n\n"
       << "[train]\n"
       << "dt = " << format_double(c.dt) << "\n"
       << "beta1 = " << format_double(c.beta1) << "\n"
       << "beta2 = " << format_double(c.beta2) << "\n"
       << "rho = " << format_double(c.rho) << "\n"
       << "period = " << c.period << "\n"
       << "max_iters = " << c.max_iters << "\n\n"
       << "[sim]\n"
       << "pending = " << c.pending << "\n"
       << "processing = " << c.processing << "\n"
       << "replay_processing = " << (c.replay_processing ? "true" : "false") << "\n"
       << "horizon_margin_s = " << format_double(c.horizon_margin_s) << "\n\n"
       << "[sweep]\n"
       << "scalers = " << join(c.scalers) << "\n"
       << "bp_grid = " << join(c.bp_grid) << "\n"
       << "adapbp_grid = " << join(c.adapbp_grid) << "\n"
       << "rs_hp_grid = " << join(c.rs_hp_grid) << "\n"
       << "rs_rt_grid = " << join(c.rs_rt_grid) << "\n"
       << "rs_cost_grid = " << join(c.rs_cost_grid) << "\n"
       << "interval = " << format_double(c.interval) << "\n"
       << "samples = " << c.samples << "\n"
       << "kappa_policy = " << c.kappa_policy << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Pipeline

/// Runs `f`, prefixing any error with the stage name and keeping its class.
template <class F>
auto run_stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const InputError& e) {
        throw InputError(name + ": " + e.what());
    } catch (const HorizonExhausted& e) {
        throw HorizonExhausted(name + ": " + e.what());
    } catch (const std::exception& e) {
        throw RuntimeFault(name + ": " + e.what());
    }
}

inline std::optional<PeriodInfo> resolve_period(const std::string& spec, const QpsSeries& series,
                                                std::size_t max_period, std::size_t window) {
    if (spec == "none") return std::nullopt;
    if (spec == "auto") {
        const std::size_t cap = std::min(max_period, series.size() / 2);
        if (cap < 2) return std::nullopt;
        return detect_period(series, cap, window);
    }
    const auto v = detail::parse_double(spec);
    detail::require(v && *v >= 2 && std::floor(*v) == *v, "period must be auto, none or an integer >= 2");
    return PeriodInfo{true, static_cast<std::size_t>(*v), 1.0};
}

struct E2eReport {
    std::size_t events = 0;
    double split = 0.0;
    std::optional<PeriodInfo> period;
    bool converged = false;
    std::size_t iterations = 0;
    std::vector<std::pair<SweepScaler, std::vector<SweepRow>>> sweeps;
    std::vector<std::string> files;
};

inline Trace synthetic_trace(const E2eConfig& c) {
    const double horizon = c.synthetic_days * 86400.0;
    GenerationOptions gen;
    gen.cell = std::min(60.0, c.synthetic_period_s / 100.0);
    gen.processing = ServiceTimeModel::parse(c.processing);
    const auto rate = [&](double t) { return sinusoid_rate(t, c.synthetic_mean_qps, c.synthetic_ratio, c.synthetic_period_s); };
    return generate_nhpp_trace(rate, horizon, rng::derive_seed(c.seed, 0x7472616365ull), gen);
}

inline E2eReport end_to_end(const E2eConfig& config, std::ostream* log = nullptr) {
    run_stage("config", [&] { config.validate(); return 0; });
    namespace fs = std::filesystem;
    E2eReport report;
    const fs::path out(config.out_dir);
    run_stage("output", [&] { fs::create_directories(out); return 0; });
    const auto note = [&](const std::string& s) {
        if (log) *log << s << '\n';
    };
    note("config:\n" + serialize_e2e_config(config));

    const Trace trace = run_stage("ingest", [&] {
        return config.trace_path.empty() ? synthetic_trace(config) : ingest_trace(config.trace_path);
    });
    report.events = trace.size();
    const double t_end = trace.back().arrival;
    const double split = std::floor(config.train_fraction * t_end / config.dt) * config.dt;
    report.split = split;
    const QpsSeries series = run_stage("aggregate", [&] { return aggregate_qps(trace, config.dt, 0.0, split); });

    report.period = run_stage("detect-period", [&] {
        return resolve_period(config.period, series, config.max_period_bins, config.detect_window_bins);
    });
    {
        nlohmann::json j;
        j["detected"] = report.period ? report.period->detected : false;
        j["period_bins"] = report.period && report.period->detected ? nlohmann::json(report.period->period_bins)
                                                                     : nlohmann::json(nullptr);
        j["score"] = report.period ? report.period->score : 0.0;
        std::ofstream(out / "period.json") << j.dump(1) << '\n';
        report.files.push_back((out / "period.json").string());
    }
    note("period: " + (report.period && report.period->detected ? std::to_string(report.period->period_bins) + " bins"
                                                                 : std::string("none")));

    const TrainResult trained = run_stage("train", [&] {
        TrainConfig tc;
        tc.beta1 = config.beta1;
        tc.beta2 = config.beta2;
        tc.rho = config.rho;
        tc.max_iters = config.max_iters;
        return train(series, tc, report.period);
    });
    report.converged = trained.converged;
    report.iterations = trained.state.iteration;
    save_model((out / "model.json").string(), trained.model);
    report.files.push_back((out / "model.json").string());
    note("train: iterations=" + std::to_string(trained.state.iteration) +
         " converged=" + (trained.converged ? "true" : "false"));

    const double horizon = (t_end - split) + config.horizon_margin_s;
    auto intensity = run_stage("predict", [&] {
        return std::make_shared<const PiecewiseIntensity>(
            predict_intensity(trained.model, split, horizon, std::max(kDefaultPredictionCap, horizon)));
    });

    for (const auto& name : config.scalers) {
        const SweepScaler kind = parse_sweep_scaler(name);
        SweepSpec spec;
        spec.scaler = kind;
        spec.split = split;
        spec.seed = config.seed;
        spec.pending = ServiceTimeModel::parse(config.pending);
        spec.processing = ServiceTimeModel::parse(config.processing);
        spec.replay_processing = config.replay_processing;
        spec.intensity = intensity;
        spec.workers = config.workers;
        spec.planner.interval = config.interval;
        spec.planner.samples = config.samples;
        spec.planner.kappa_policy = parse_kappa_policy(config.kappa_policy);
        switch (kind) {
            case SweepScaler::bp: spec.grid = config.bp_grid; break;
            case SweepScaler::adapbp: spec.grid = config.adapbp_grid; break;
            case SweepScaler::rs_hp: spec.grid = config.rs_hp_grid; break;
            case SweepScaler::rs_rt: spec.grid = config.rs_rt_grid; break;
            case SweepScaler::rs_cost: spec.grid = config.rs_cost_grid; break;
        }
        auto rows = run_stage("sweep " + name, [&] { return run_sweep(trace, spec); });
        const auto path = out / ("sweep_" + name + ".csv");
        std::ofstream f(path);
        write_sweep_csv(f, kind, rows);
        report.files.push_back(path.string());
        note("sweep " + name + ": " + std::to_string(rows.size()) + " points");
        report.sweeps.emplace_back(kind, std::move(rows));
    }
    return report;
}

}  // namespace robustscaler
