// robustscaler command-line tool.
//
// Exit codes: 0 success, 2 configuration/input error, 3 runtime error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "robustscaler/robustscaler.hpp"

namespace rs = robustscaler;
namespace fs = std::filesystem;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct Globals {
    std::uint64_t seed = 7;
    double dt = 60.0;
    std::size_t workers = 1;
    std::string out_dir = ".";
};

fs::path out_path(const Globals& g, const std::string& name) {
    fs::create_directories(g.out_dir);
    return fs::path(g.out_dir) / name;
}

rs::CsvSchema schema_from(const std::string& arrival_col, const std::string& processing_col) {
    rs::CsvSchema s;
    s.arrival_column = arrival_col;
    s.processing_column = processing_col;
    return s;
}

// "bp:3", "adapbp:10", "rs_hp:0.9", "rs_rt:22", "rs_cost:40"
std::pair<rs::SweepScaler, double> parse_scaler_arg(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw rs::InputError("scaler must look like kind:value, got '" + text + "'");
    const auto kind = rs::parse_sweep_scaler(text.substr(0, colon));
    const auto v = rs::detail::parse_double(text.substr(colon + 1));
    if (!v) throw rs::InputError("bad scaler value in '" + text + "'");
    return {kind, *v};
}

std::optional<rs::PeriodInfo> period_from_arg(const std::string& arg, const rs::QpsSeries& series,
                                              std::size_t max_period, std::size_t window) {
    std::string spec = arg;
    if (spec == "NONE" || spec == "None") spec = "none";
    return rs::resolve_period(spec, series, max_period, window);
}

nlohmann::json period_json(const std::optional<rs::PeriodInfo>& p) {
    nlohmann::json j;
    j["detected"] = p ? p->detected : false;
    j["period_bins"] = p && p->detected ? nlohmann::json(p->period_bins) : nlohmann::json(nullptr);
    j["score"] = p ? p->score : 0.0;
    return j;
}

std::shared_ptr<const rs::PiecewiseIntensity> intensity_for(const rs::IntensityModel& model, double from,
                                                            double horizon) {
    return std::make_shared<const rs::PiecewiseIntensity>(
        rs::predict_intensity(model, from, horizon, std::max(rs::kDefaultPredictionCap, horizon)));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RobustScaler: NHPP-based proactive autoscaling toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--dt", g.dt, "Aggregation step in seconds")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--workers", g.workers, "Concurrent sweep workers")->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
    app.fallthrough();

    std::string arrival_col = "arrival_s", processing_col = "processing_s";
    const auto add_schema = [&](CLI::App* sub) {
        sub->add_option("--arrival-column", arrival_col, "CSV column with arrival seconds")->capture_default_str();
        sub->add_option("--processing-column", processing_col, "CSV column with processing seconds")
            ->capture_default_str();
    };

    // generate
    auto* gen = app.add_subcommand("generate", "Synthesize an NHPP trace");
    std::string gen_kind = "sinusoid", gen_out = "trace.csv", gen_processing = "exp:20";
    double gen_horizon = 86400.0, gen_mean = 1.0, gen_ratio = 10.0, gen_period = 86400.0;
    gen->add_option("--intensity", gen_kind, "sinusoid | daily-bump | constant")->capture_default_str();
    gen->add_option("--horizon", gen_horizon, "Seconds to generate")->capture_default_str();
    gen->add_option("--mean-qps", gen_mean, "Mean rate (sinusoid, constant)")->capture_default_str();
    gen->add_option("--ratio", gen_ratio, "Peak-to-trough ratio (sinusoid)")->capture_default_str();
    gen->add_option("--period", gen_period, "Period in seconds (sinusoid)")->capture_default_str();
    gen->add_option("--processing", gen_processing, "Processing-time model, e.g. exp:20")->capture_default_str();
    gen->add_option("--out", gen_out, "Output CSV (relative to --out-dir)")->capture_default_str();

    // detect-period
    auto* det = app.add_subcommand("detect-period", "Detect the dominant period of a trace");
    std::string det_input;
    std::size_t det_max = 1440, det_window = 1;
    det->add_option("--input", det_input, "Trace CSV")->required();
    det->add_option("--max-period", det_max, "Largest period in bins")->capture_default_str();
    det->add_option("--window", det_window, "Averaging window in bins")->capture_default_str();
    add_schema(det);

    // train
    auto* trn = app.add_subcommand("train", "Fit the regularized NHPP intensity");
    std::string trn_input, trn_period = "auto", trn_out = "model.json";
    double beta1 = 10.0, beta2 = 1.0, trn_rho = 1.0;
    std::size_t trn_max = 1440, trn_iters = 500;
    std::vector<double> tune1, tune2;
    trn->add_option("--input", trn_input, "Trace CSV")->required();
    trn->add_option("--beta1", beta1, "Smoothness weight")->capture_default_str();
    trn->add_option("--beta2", beta2, "Periodicity weight")->capture_default_str();
    trn->add_option("--period", trn_period, "auto | NONE | <bins>")->capture_default_str();
    trn->add_option("--max-period", trn_max, "Largest period for auto detection, in bins")->capture_default_str();
    trn->add_option("--rho", trn_rho, "ADMM penalty parameter")->capture_default_str()->check(CLI::PositiveNumber);
    trn->add_option("--max-iters", trn_iters, "ADMM iteration cap")->capture_default_str();
    trn->add_option("--tune-beta1", tune1, "Grid for held-out beta1 selection")->delimiter(',');
    trn->add_option("--tune-beta2", tune2, "Grid for held-out beta2 selection")->delimiter(',');
    trn->add_option("--out", trn_out, "Model JSON (relative to --out-dir)")->capture_default_str();
    add_schema(trn);

    // plan
    auto* pln = app.add_subcommand("plan", "Emit instance creation times for a horizon");
    std::string pln_model, pln_mode = "hp", pln_pending = "fixed:13", pln_out = "plan.csv";
    double pln_level = 0.9, pln_horizon = 600.0, pln_mu_s = 20.0;
    std::optional<double> pln_from;
    std::size_t pln_samples = 1000;
    pln->add_option("--model", pln_model, "Model JSON")->required();
    pln->add_option("--mode", pln_mode, "hp | rt | cost")->capture_default_str();
    pln->add_option("--level", pln_level, "hp: target hit probability; rt: d seconds; cost: B seconds")
        ->capture_default_str();
    pln->add_option("--horizon", pln_horizon, "Plan creations in [from, from + horizon)")->capture_default_str();
    pln->add_option("--from", pln_from, "Planning time (default: end of the model)");
    pln->add_option("--pending", pln_pending, "Pending-time model")->capture_default_str();
    pln->add_option("--mu-s", pln_mu_s, "Mean processing time")->capture_default_str();
    pln->add_option("--samples", pln_samples, "Monte Carlo sample size R")->capture_default_str();
    pln->add_option("--out", pln_out, "Plan CSV (relative to --out-dir)")->capture_default_str();

    // simulate
    auto* sim = app.add_subcommand("simulate", "Replay a trace under one scaler");
    std::string sim_input, sim_scaler = "bp:0", sim_model, sim_pending = "fixed:13", sim_processing = "exp:20";
    double sim_start = 0.0, sim_interval = 1.0, sim_margin = 3600.0;
    std::size_t sim_samples = 1000;
    bool sim_no_replay = false;
    sim->add_option("--input", sim_input, "Trace CSV")->required();
    sim->add_option("--scaler", sim_scaler, "bp:B | adapbp:M | rs_hp:p | rs_rt:d | rs_cost:B")->capture_default_str();
    sim->add_option("--model", sim_model, "Model JSON (RobustScaler scalers)");
    sim->add_option("--start", sim_start, "Replay events from this time")->capture_default_str();
    sim->add_option("--interval", sim_interval, "Planning interval in seconds")->capture_default_str();
    sim->add_option("--samples", sim_samples, "Monte Carlo sample size R")->capture_default_str();
    sim->add_option("--margin", sim_margin, "Extra prediction horizon past the trace")->capture_default_str();
    sim->add_option("--pending", sim_pending, "Pending-time model")->capture_default_str();
    sim->add_option("--processing", sim_processing, "Processing-time model")->capture_default_str();
    sim->add_flag("--resample-processing", sim_no_replay, "Ignore processing times recorded in the trace");
    add_schema(sim);

    // sweep
    auto* swp = app.add_subcommand("sweep", "Pareto sweep of one scaler family");
    std::string swp_input, swp_scaler = "bp", swp_model, swp_pending = "fixed:13", swp_processing = "exp:20";
    std::vector<double> swp_grid;
    double swp_split = 0.0, swp_interval = 1.0, swp_margin = 3600.0;
    std::size_t swp_samples = 1000;
    swp->add_option("--input", swp_input, "Trace CSV")->required();
    swp->add_option("--scaler", swp_scaler, "bp | adapbp | rs_hp | rs_rt | rs_cost")->capture_default_str();
    swp->add_option("--grid", swp_grid, "Comma-separated parameter grid")->delimiter(',')->required();
    swp->add_option("--model", swp_model, "Model JSON (RobustScaler scalers)");
    swp->add_option("--split", swp_split, "Test split starts here (seconds)")->capture_default_str();
    swp->add_option("--interval", swp_interval, "Planning interval in seconds")->capture_default_str();
    swp->add_option("--samples", swp_samples, "Monte Carlo sample size R")->capture_default_str();
    swp->add_option("--margin", swp_margin, "Extra prediction horizon past the trace")->capture_default_str();
    swp->add_option("--pending", swp_pending, "Pending-time model")->capture_default_str();
    swp->add_option("--processing", swp_processing, "Processing-time model")->capture_default_str();
    add_schema(swp);

    // perturb
    auto* per = app.add_subcommand("perturb", "Delete hourly windows and inject bursts");
    std::string per_input, per_out = "perturbed.csv";
    rs::PerturbationSpec pspec;
    bool per_keep = false;
    per->add_option("--input", per_input, "Trace CSV")->required();
    per->add_option("--c", pspec.c, "Replicas added per event in injection windows")->capture_default_str();
    per->add_option("--period", pspec.period, "Window period in seconds")->capture_default_str();
    per->add_option("--width", pspec.width, "Window width in seconds")->capture_default_str();
    per->add_option("--origin", pspec.origin, "Time of the first period")->capture_default_str();
    per->add_option("--deletion-offset", pspec.deletion_offset, "Deletion window offset")->capture_default_str();
    per->add_option("--injection-offset", pspec.injection_offset, "Injection window offset")->capture_default_str();
    per->add_flag("--no-delete", per_keep, "Keep events in deletion windows");
    per->add_option("--out", per_out, "Output CSV (relative to --out-dir)")->capture_default_str();
    add_schema(per);

    // e2e
    auto* e2e = app.add_subcommand("e2e", "detect-period -> train -> sweep from an INI config");
    std::string e2e_config;
    bool e2e_print = false;
    e2e->add_option("--config", e2e_config, "INI config file")->required();
    e2e->add_flag("--print-config", e2e_print, "Print the canonical config and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfigError;
    }

    try {
        if (*gen) {
            rs::GenerationOptions opt;
            opt.processing = rs::ServiceTimeModel::parse(gen_processing);
            rs::Trace trace;
            if (gen_kind == "sinusoid") {
                opt.cell = std::min(60.0, gen_period / 100.0);
                trace = rs::generate_nhpp_trace(
                    [&](double t) { return rs::sinusoid_rate(t, gen_mean, gen_ratio, gen_period); }, gen_horizon,
                    g.seed, opt);
            } else if (gen_kind == "daily-bump") {
                opt.cell = 60.0;
                trace = rs::generate_nhpp_trace(rs::daily_bump_rate, gen_horizon, g.seed, opt);
            } else if (gen_kind == "constant") {
                trace = rs::generate_nhpp_trace(rs::PiecewiseIntensity::constant(gen_mean, 0.0, gen_horizon),
                                                gen_horizon, g.seed, opt);
            } else {
                throw rs::InputError("unknown intensity '" + gen_kind + "'");
            }
            const auto path = out_path(g, gen_out);
            rs::save_trace(path.string(), trace);
            std::cout << "wrote " << trace.size() << " events to " << path.string() << '\n';
        } else if (*det) {
            const auto trace = rs::ingest_trace(det_input, schema_from(arrival_col, processing_col));
            const auto series = rs::aggregate_qps(trace, g.dt);
            std::cout << period_json(period_from_arg("auto", series, det_max, det_window)).dump() << '\n';
        } else if (*trn) {
            const auto trace = rs::ingest_trace(trn_input, schema_from(arrival_col, processing_col));
            const auto series = rs::aggregate_qps(trace, g.dt);
            const auto period = period_from_arg(trn_period, series, trn_max, 1);
            rs::TrainConfig tc;
            tc.beta1 = beta1;
            tc.beta2 = beta2;
            tc.max_iters = trn_iters;
            tc.rho = trn_rho;
            if (!tune1.empty() || !tune2.empty()) {
                if (tune1.empty()) tune1 = {beta1};
                if (tune2.empty()) tune2 = {beta2};
                const auto sel = rs::select_betas(series, tune1, tune2, period, 0.2, tc);
                for (const auto& c : sel.table) {
                    std::cerr << "beta1=" << c.beta1 << " beta2=" << c.beta2 << " heldout_nll=" << c.heldout_nll << '\n';
                }
                tc.beta1 = sel.best.beta1;
                tc.beta2 = sel.best.beta2;
            }
            const auto res = rs::train(series, tc, period);
            const auto path = out_path(g, trn_out);
            rs::save_model(path.string(), res.model);
            nlohmann::json j;
            j["model"] = path.string();
            j["period"] = period_json(period);
            j["beta1"] = tc.beta1;
            j["beta2"] = tc.beta2;
            j["iterations"] = res.state.iteration;
            j["converged"] = res.converged;
            j["primal_residual"] = std::max(res.state.primal_residual_y, res.state.primal_residual_z);
            j["dual_residual"] = res.state.dual_residual;
            j["objective"] = res.objective;
            std::cout << j.dump() << '\n';
            if (!res.converged) std::cerr << "warning: ADMM stopped at max_iters without meeting tolerances\n";
        } else if (*pln) {
            const auto model = rs::load_model(pln_model);
            const double from = pln_from.value_or(model.end());
            rs::PlannerConfig cfg;
            cfg.mode = rs::parse_plan_mode(pln_mode);
            cfg.pending = rs::ServiceTimeModel::parse(pln_pending);
            cfg.mu_s = pln_mu_s;
            cfg.samples = pln_samples;
            cfg.seed = g.seed;
            cfg.trigger = rs::PlanTrigger::interval;
            cfg.interval = pln_horizon;
            if (cfg.mode == rs::PlanMode::hp) cfg.alpha = 1.0 - pln_level;
            else if (cfg.mode == rs::PlanMode::rt) cfg.d = pln_level;
            else cfg.budget = pln_level;
            // Enough look-ahead for arrivals whose creation falls inside the horizon.
            const double look = pln_horizon + 10.0 * cfg.pending.mean() + 3600.0;
            const auto intensity = intensity_for(model, from, look);
            rs::SequentialPlanner planner(cfg, *intensity);
            const auto plan = planner.step(from, 0);
            const auto path = out_path(g, pln_out);
            std::ofstream out(path);
            out << "index,creation_time_s\n";
            for (const auto& c : plan.creations) out << c.index << ',' << rs::detail::format_double(c.time) << '\n';
            std::cout << "wrote " << plan.creations.size() << " creations to " << path.string() << '\n';
        } else if (*sim) {
            const auto trace = rs::ingest_trace(sim_input, schema_from(arrival_col, processing_col));
            const auto events = rs::test_split(trace, sim_start);
            if (events.empty()) throw rs::InputError("no events at or after --start");
            const auto [kind, value] = parse_scaler_arg(sim_scaler);
            rs::SweepSpec spec;
            spec.scaler = kind;
            spec.grid = {value};
            spec.split = sim_start;
            spec.seed = g.seed;
            spec.pending = rs::ServiceTimeModel::parse(sim_pending);
            spec.processing = rs::ServiceTimeModel::parse(sim_processing);
            spec.replay_processing = !sim_no_replay;
            spec.planner.interval = sim_interval;
            spec.planner.samples = sim_samples;
            if (kind != rs::SweepScaler::bp && kind != rs::SweepScaler::adapbp) {
                if (sim_model.empty()) throw rs::InputError("RobustScaler scalers need --model");
                const auto model = rs::load_model(sim_model);
                spec.intensity = intensity_for(model, sim_start, events.back().arrival - sim_start + sim_margin);
            }
            const auto adapter = rs::adapter_for(spec, value);
            const rs::ReplayOptions opt{sim_start, spec.replay_processing};
            rs::SimRun run;
            const auto result = rs::simulate(events, adapter, spec.pending, spec.processing, g.seed, opt, &run);
            std::ofstream(out_path(g, "result.json")) << rs::to_json(result).dump(1) << '\n';
            std::ofstream ev(out_path(g, "events.csv"));
            rs::write_events_csv(ev, run.events);
            std::cout << rs::to_json(result).dump() << '\n';
        } else if (*swp) {
            const auto trace = rs::ingest_trace(swp_input, schema_from(arrival_col, processing_col));
            rs::SweepSpec spec;
            spec.scaler = rs::parse_sweep_scaler(swp_scaler);
            spec.grid = swp_grid;
            spec.split = swp_split;
            spec.seed = g.seed;
            spec.workers = g.workers;
            spec.pending = rs::ServiceTimeModel::parse(swp_pending);
            spec.processing = rs::ServiceTimeModel::parse(swp_processing);
            spec.planner.interval = swp_interval;
            spec.planner.samples = swp_samples;
            if (spec.scaler != rs::SweepScaler::bp && spec.scaler != rs::SweepScaler::adapbp) {
                if (swp_model.empty()) throw rs::InputError("RobustScaler sweeps need --model");
                const auto model = rs::load_model(swp_model);
                spec.intensity = intensity_for(model, swp_split, trace.back().arrival - swp_split + swp_margin);
            }
            const auto rows = rs::run_sweep(trace, spec);
            const auto path = out_path(g, "sweep_" + swp_scaler + ".csv");
            std::ofstream out(path);
            rs::write_sweep_csv(out, spec.scaler, rows);
            rs::write_sweep_csv(std::cout, spec.scaler, rows);
        } else if (*per) {
            const auto trace = rs::ingest_trace(per_input, schema_from(arrival_col, processing_col));
            pspec.delete_windows = !per_keep;
            const auto res = rs::perturb_trace(trace, pspec, g.seed);
            if (res.all_deleted) {
                std::cerr << "warning: every event fell in a deletion window; output is empty\n";
            }
            const auto path = out_path(g, per_out);
            std::ofstream out(path);
            rs::write_trace(out, res.events);
            std::cout << "deleted " << res.deleted << ", injected " << res.injected << ", wrote "
                      << res.events.size() << " events to " << path.string() << '\n';
        } else if (*e2e) {
            auto cfg = rs::load_e2e_config(e2e_config);
            if (app.get_option("--seed")->count() > 0) cfg.seed = g.seed;
            if (app.get_option("--workers")->count() > 0) cfg.workers = g.workers;
            if (app.get_option("--out-dir")->count() > 0) cfg.out_dir = g.out_dir;
            if (app.get_option("--dt")->count() > 0) cfg.dt = g.dt;
            if (e2e_print) {
                std::cout << rs::serialize_e2e_config(cfg);
                return 0;
            }
            const auto report = rs::end_to_end(cfg, &std::cerr);
            for (const auto& f : report.files) std::cout << f << '\n';
        }
    } catch (const rs::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return 0;
}
