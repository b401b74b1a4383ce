#pragma once

// Periodicity-regularised NHPP intensity estimation.
//
// The per-bin log intensity r minimises
//
//   -Q^T r + dt * 1^T exp(r) + beta1 * |D2 r|_1 + beta2/2 * |DL r|_2^2
//
// where D2 is the second-difference operator and DL the L-step forward
// difference. The solver is a linearised ADMM: the exponential is replaced
// by its second-order expansion around the current iterate, so each
// r-update is one SPD solve with
//
//   A_k = dt * diag(exp(r_k)) + rho * D2^T D2 + rho * DL^T DL,
//
// a banded matrix of half-bandwidth max(2, L).

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <nlohmann/json.hpp>

#include "robustscaler/banded.hpp"
#include "robustscaler/errors.hpp"
#include "robustscaler/intensity.hpp"
#include "robustscaler/periodicity.hpp"
#include "robustscaler/trace_model.hpp"

namespace robustscaler {

enum class LinearSolverKind { automatic, banded, sparse };

struct TrainConfig {
    double beta1 = 10.0;
    double beta2 = 1.0;
    double rho = 1.0;
    std::size_t max_iters = 500;
    double tol_primal = 1e-6;
    double tol_dual = 1e-6;
    double r_floor = -20.0;
    LinearSolverKind solver = LinearSolverKind::automatic;

    void validate() const {
        detail::require(beta1 >= 0.0 && std::isfinite(beta1), "beta1 must be >= 0");
        detail::require(beta2 >= 0.0 && std::isfinite(beta2), "beta2 must be >= 0");
        detail::require(rho > 0.0 && std::isfinite(rho), "rho must be > 0");
        detail::require(tol_primal > 0.0 && tol_dual > 0.0, "tolerances must be > 0");
        detail::require(max_iters >= 1, "max_iters must be >= 1");
    }
};

struct AdmmState {
    std::vector<double> r, y, z, nu_y, nu_z;
    std::size_t iteration = 0;
    double primal_residual_y = std::numeric_limits<double>::infinity();
    double primal_residual_z = 0.0;
    double dual_residual = std::numeric_limits<double>::infinity();
};

namespace nhpp {

/// out[t] = r[t] - 2 r[t+1] + r[t+2], t < T-2.
inline void second_difference(std::span<const double> r, std::span<double> out) {
    for (std::size_t t = 0; t + 2 < r.size(); ++t) out[t] = r[t] - 2.0 * r[t + 1] + r[t + 2];
}

/// out += D2^T v.
inline void add_second_difference_transpose(std::span<const double> v, std::span<double> out) {
    for (std::size_t t = 0; t < v.size(); ++t) {
        out[t] += v[t];
        out[t + 1] -= 2.0 * v[t];
        out[t + 2] += v[t];
    }
}

/// out[t] = r[t] - r[t+L], t < T-L.
inline void lag_difference(std::span<const double> r, std::size_t lag, std::span<double> out) {
    for (std::size_t t = 0; t + lag < r.size(); ++t) out[t] = r[t] - r[t + lag];
}

/// out += DL^T v.
inline void add_lag_difference_transpose(std::span<const double> v, std::size_t lag, std::span<double> out) {
    for (std::size_t t = 0; t < v.size(); ++t) {
        out[t] += v[t];
        out[t + lag] -= v[t];
    }
}

inline double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace nhpp

inline double soft_threshold(double x, double c) {
    detail::require(c >= 0.0, "soft threshold must be non-negative");
    const double m = std::abs(x) - c;
    if (m <= 0.0) return 0.0;
    return x > 0.0 ? m : -m;
}

/// Regularised negative log-likelihood (up to r-independent constants).
inline double loss(const QpsSeries& series, std::span<const double> r, const TrainConfig& config,
                   std::optional<std::size_t> period = std::nullopt) {
    const std::size_t n = series.size();
    if (r.size() != n) {
        throw InputError("loss: r has length " + std::to_string(r.size()) + ", series has " + std::to_string(n));
    }
    if (config.beta2 > 0.0) {
        detail::require(period.has_value(), "loss: beta2 > 0 requires a period");
        detail::require(*period >= 1 && *period < n, "loss: period must be shorter than the series");
    }
    const auto q = series.counts();
    const double dt = series.step();
    double v = 0.0;
    for (std::size_t t = 0; t < n; ++t) v += -static_cast<double>(q[t]) * r[t] + dt * std::exp(r[t]);
    if (config.beta1 > 0.0 && n >= 3) {
        double s = 0.0;
        for (std::size_t t = 0; t + 2 < n; ++t) s += std::abs(r[t] - 2.0 * r[t + 1] + r[t + 2]);
        v += config.beta1 * s;
    }
    if (config.beta2 > 0.0) {
        double s = 0.0;
        for (std::size_t t = 0; t + *period < n; ++t) {
            const double d = r[t] - r[t + *period];
            s += d * d;
        }
        v += 0.5 * config.beta2 * s;
    }
    return v;
}

namespace nhpp {

/// A_k = dt*diag(w) + rho*(D2^T D2 + DL^T DL), refactored each iteration.
class SystemSolver {
public:
    SystemSolver(std::size_t n, std::optional<std::size_t> lag, double rho, LinearSolverKind kind)
        : n_(n), lag_(lag), rho_(rho) {
        const std::size_t bw = std::max<std::size_t>(2, lag.value_or(0));
        if (kind == LinearSolverKind::automatic) {
            const double cost = static_cast<double>(n) * static_cast<double>(bw + 1) * static_cast<double>(bw + 1);
            kind = cost <= 5e7 ? LinearSolverKind::banded : LinearSolverKind::sparse;
        }
        kind_ = kind;
        if (kind_ == LinearSolverKind::banded) {
            base_ = std::make_unique<BandedSpdMatrix<double>>(n, bw);
            work_ = std::make_unique<BandedSpdMatrix<double>>(n, bw);
            add_constant_part([&](std::size_t i, std::size_t j, double v) {
                if (j <= i) base_->add(i, j, v);
            });
        } else {
            std::vector<Eigen::Triplet<double>> trip;
            for (std::size_t t = 0; t < n; ++t) trip.emplace_back(static_cast<int>(t), static_cast<int>(t), 0.0);
            add_constant_part([&](std::size_t i, std::size_t j, double v) {
                trip.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
            });
            sparse_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
            sparse_.setFromTriplets(trip.begin(), trip.end());
            sparse_.makeCompressed();
            sparse_base_.assign(sparse_.valuePtr(), sparse_.valuePtr() + sparse_.nonZeros());
            diag_index_.resize(n);
            for (Eigen::Index c = 0; c < sparse_.outerSize(); ++c) {
                for (auto k = sparse_.outerIndexPtr()[c]; k < sparse_.outerIndexPtr()[c + 1]; ++k) {
                    if (sparse_.innerIndexPtr()[k] == c) diag_index_[static_cast<std::size_t>(c)] = static_cast<std::size_t>(k);
                }
            }
            ldlt_.analyzePattern(sparse_);
        }
    }

    LinearSolverKind kind() const { return kind_; }

    /// Solves (diag(diag_weights) + constant part) x = rhs in place.
    void solve(std::span<const double> diag_weights, std::span<double> rhs) {
        if (kind_ == LinearSolverKind::banded) {
            *work_ = *base_;
            for (std::size_t t = 0; t < n_; ++t) work_->at(t, t) += diag_weights[t];
            banded_cholesky(*work_);
            banded_cholesky_solve<double>(*work_, rhs);
            return;
        }
        std::copy(sparse_base_.begin(), sparse_base_.end(), sparse_.valuePtr());
        for (std::size_t t = 0; t < n_; ++t) sparse_.valuePtr()[diag_index_[t]] += diag_weights[t];
        ldlt_.factorize(sparse_);
        if (ldlt_.info() != Eigen::Success) throw RuntimeFault("sparse LDL^T factorisation failed");
        Eigen::Map<Eigen::VectorXd> b(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
        Eigen::VectorXd x = ldlt_.solve(b);
        if (ldlt_.info() != Eigen::Success) throw RuntimeFault("sparse LDL^T solve failed");
        b = x;
    }

private:
    template <class Add>
    void add_constant_part(Add&& add) {
        // rho * D2^T D2: each row of D2 is (1, -2, 1) at columns t..t+2.
        static constexpr double kStencil[3] = {1.0, -2.0, 1.0};
        for (std::size_t t = 0; t + 2 < n_; ++t) {
            for (std::size_t a = 0; a < 3; ++a) {
                for (std::size_t b = 0; b < 3; ++b) add(t + a, t + b, rho_ * kStencil[a] * kStencil[b]);
            }
        }
        if (lag_) {
            const std::size_t l = *lag_;
            for (std::size_t t = 0; t + l < n_; ++t) {
                add(t, t, rho_);
                add(t + l, t + l, rho_);
                add(t, t + l, -rho_);
                add(t + l, t, -rho_);
            }
        }
    }

    std::size_t n_;
    std::optional<std::size_t> lag_;
    double rho_;
    LinearSolverKind kind_{};
    std::unique_ptr<BandedSpdMatrix<double>> base_, work_;
    Eigen::SparseMatrix<double> sparse_;
    std::vector<double> sparse_base_;
    std::vector<std::size_t> diag_index_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
};

}  // namespace nhpp

/// Linearised ADMM iterations on one count series.
class AdmmSolver {
public:
    AdmmSolver(const QpsSeries& series, const TrainConfig& config, std::optional<std::size_t> period = std::nullopt)
        : counts_(series.as_doubles()), dt_(series.step()), config_(config) {
        config_.validate();
        const std::size_t n = counts_.size();
        detail::require(n >= 3, "training needs at least 3 bins");
        if (period && config_.beta2 > 0.0) {
            detail::require(*period >= 2 && *period < n, "period must satisfy 2 <= L < T");
            lag_ = period;
        }
        system_ = std::make_unique<nhpp::SystemSolver>(n, lag_, config_.rho, config_.solver);

        state_.r.resize(n);
        for (std::size_t t = 0; t < n; ++t) state_.r[t] = std::max(config_.r_floor, std::log((counts_[t] + 1.0) / dt_));
        state_.y.assign(n - 2, 0.0);
        nhpp::second_difference(state_.r, state_.y);
        state_.nu_y.assign(n - 2, 0.0);
        if (lag_) {
            state_.z.assign(n - *lag_, 0.0);
            nhpp::lag_difference(state_.r, *lag_, state_.z);
            state_.nu_z.assign(n - *lag_, 0.0);
        }
    }

    void warm_start(AdmmState state) {
        const std::size_t n = counts_.size();
        detail::require(state.r.size() == n && state.y.size() == n - 2 && state.nu_y.size() == n - 2,
                        "warm start state has wrong dimensions");
        if (lag_) {
            detail::require(state.z.size() == n - *lag_ && state.nu_z.size() == n - *lag_,
                            "warm start state has wrong periodic dimensions");
        }
        state_ = std::move(state);
    }

    const AdmmState& state() const { return state_; }
    std::optional<std::size_t> period() const { return lag_; }
    nhpp::SystemSolver& system() { return *system_; }

    bool converged() const {
        return state_.primal_residual_y < config_.tol_primal && state_.primal_residual_z < config_.tol_primal &&
               state_.dual_residual < config_.tol_dual;
    }

    /// One ADMM iteration; returns whether the stopping rule holds afterwards.
    bool step() {
        const std::size_t n = counts_.size();
        const double rho = config_.rho;
        auto& s = state_;

        std::vector<double> weight(n), rhs(n);
        for (std::size_t t = 0; t < n; ++t) {
            const double w = dt_ * std::exp(s.r[t]);
            weight[t] = w;
            rhs[t] = counts_[t] - w + w * s.r[t];
        }
        std::vector<double> tmp(s.y.size());
        for (std::size_t t = 0; t < tmp.size(); ++t) tmp[t] = s.nu_y[t] + rho * s.y[t];
        nhpp::add_second_difference_transpose(tmp, rhs);
        if (lag_) {
            std::vector<double> tz(s.z.size());
            for (std::size_t t = 0; t < tz.size(); ++t) tz[t] = s.nu_z[t] + rho * s.z[t];
            nhpp::add_lag_difference_transpose(tz, *lag_, rhs);
        }
        system_->solve(weight, rhs);
        for (auto& v : rhs) {
            if (!std::isfinite(v)) throw RuntimeFault("ADMM r-update produced a non-finite value");
            v = std::max(v, config_.r_floor);
        }

        const std::vector<double> r_prev = std::exchange(s.r, std::move(rhs));
        const std::vector<double> y_prev = s.y;

        std::vector<double> d2r(n - 2);
        nhpp::second_difference(s.r, d2r);
        const double thresh = config_.beta1 / rho;
        for (std::size_t t = 0; t < d2r.size(); ++t) s.y[t] = soft_threshold(d2r[t] - s.nu_y[t] / rho, thresh);
        double py = 0.0;
        for (std::size_t t = 0; t < d2r.size(); ++t) {
            const double gap = s.y[t] - d2r[t];
            s.nu_y[t] += rho * gap;
            py += gap * gap;
        }
        s.primal_residual_y = std::sqrt(py / static_cast<double>(d2r.size()));

        std::vector<double> dual_vec(n, 0.0);
        {
            std::vector<double> dy(s.y.size());
            for (std::size_t t = 0; t < dy.size(); ++t) dy[t] = rho * (s.y[t] - y_prev[t]);
            nhpp::add_second_difference_transpose(dy, dual_vec);
        }
        double dual = nhpp::norm2(dual_vec);

        s.primal_residual_z = 0.0;
        if (lag_) {
            const std::vector<double> z_prev = s.z;
            std::vector<double> dlr(n - *lag_);
            nhpp::lag_difference(s.r, *lag_, dlr);
            double pz = 0.0;
            for (std::size_t t = 0; t < dlr.size(); ++t) {
                s.z[t] = (rho * dlr[t] - s.nu_z[t]) / (config_.beta2 + rho);
                const double gap = s.z[t] - dlr[t];
                s.nu_z[t] += rho * gap;
                pz += gap * gap;
            }
            s.primal_residual_z = std::sqrt(pz / static_cast<double>(dlr.size()));
            std::fill(dual_vec.begin(), dual_vec.end(), 0.0);
            std::vector<double> dz(s.z.size());
            for (std::size_t t = 0; t < dz.size(); ++t) dz[t] = rho * (s.z[t] - z_prev[t]);
            nhpp::add_lag_difference_transpose(dz, *lag_, dual_vec);
            dual = std::max(dual, nhpp::norm2(dual_vec));
        }
        double dr = 0.0;
        for (std::size_t t = 0; t < n; ++t) dr += (s.r[t] - r_prev[t]) * (s.r[t] - r_prev[t]);
        dual = std::max(dual, std::sqrt(dr));
        s.dual_residual = dual / std::sqrt(static_cast<double>(n));
        ++s.iteration;
        return converged();
    }

private:
    std::vector<double> counts_;
    double dt_;
    TrainConfig config_;
    std::optional<std::size_t> lag_;
    std::unique_ptr<nhpp::SystemSolver> system_;
    AdmmState state_;
};

// ---------------------------------------------------------------------------
// Fitted model and extrapolation

enum class Extrapolation { periodic_tile, trailing_mean };

struct IntensityModel {
    std::vector<double> log_intensity;   // natural log of events/second per bin
    double step = 60.0;
    double epoch = 0.0;
    std::optional<std::size_t> period_bins;
    Extrapolation extrapolation = Extrapolation::trailing_mean;
    std::size_t trailing_window = 60;

    std::size_t size() const { return log_intensity.size(); }
    double end() const { return epoch + step * static_cast<double>(log_intensity.size()); }

    void validate() const {
        detail::require(!log_intensity.empty(), "model has no bins");
        detail::require(step > 0.0, "model step must be positive");
        for (double v : log_intensity) detail::require(std::isfinite(v), "model log intensity must be finite");
        if (period_bins) {
            detail::require(*period_bins >= 2 && *period_bins < log_intensity.size(), "model period must satisfy 2 <= L < T");
        }
        if (extrapolation == Extrapolation::periodic_tile) {
            detail::require(period_bins.has_value(), "periodic extrapolation needs a period");
        }
        detail::require(trailing_window >= 1, "trailing window must be >= 1");
    }

    /// Rate of the bin with index `bin` (relative to epoch), extrapolating
    /// past the fitted range.
    double rate_at_bin(std::size_t bin) const {
        const std::size_t n = log_intensity.size();
        if (bin < n) return std::exp(log_intensity[bin]);
        if (extrapolation == Extrapolation::periodic_tile) {
            const std::size_t l = *period_bins;
            return std::exp(log_intensity[n - l + (bin - n) % l]);
        }
        const std::size_t w = std::min(trailing_window, n);
        double s = 0.0;
        for (std::size_t t = n - w; t < n; ++t) s += std::exp(log_intensity[t]);
        return s / static_cast<double>(w);
    }

    std::vector<double> rates() const {
        std::vector<double> out(log_intensity.size());
        for (std::size_t t = 0; t < out.size(); ++t) out[t] = std::exp(log_intensity[t]);
        return out;
    }
};

struct TrainResult {
    IntensityModel model;
    AdmmState state;
    bool converged = false;
    double objective = 0.0;
    LinearSolverKind solver = LinearSolverKind::banded;
};

inline TrainResult train(const QpsSeries& series, const TrainConfig& config,
                         const std::optional<PeriodInfo>& period = std::nullopt) {
    std::optional<std::size_t> lag;
    if (period && period->detected) lag = period->period_bins;
    AdmmSolver solver(series, config, lag);
    bool done = false;
    for (std::size_t k = 0; k < config.max_iters && !done; ++k) done = solver.step();

    TrainResult out;
    out.state = solver.state();
    out.converged = done;
    out.solver = solver.system().kind();
    out.model.log_intensity = out.state.r;
    out.model.step = series.step();
    out.model.epoch = series.epoch();
    out.model.period_bins = lag;
    out.model.extrapolation = lag ? Extrapolation::periodic_tile : Extrapolation::trailing_mean;
    TrainConfig used = config;
    if (!solver.period()) used.beta2 = 0.0;
    out.objective = loss(series, out.state.r, used, solver.period());
    return out;
}

/// Default cap on how far a model is extrapolated (seconds).
inline constexpr double kDefaultPredictionCap = 86400.0;

/// Piecewise-constant intensity on [from, from + horizon), aligned to the
/// model's bin grid. Inside the fitted range the fitted rates are used.
inline PiecewiseIntensity predict_intensity(const IntensityModel& model, double from, double horizon,
                                            double cap = kDefaultPredictionCap) {
    model.validate();
    detail::require(horizon > 0.0, "prediction horizon must be positive");
    if (horizon > cap) {
        throw InputError("prediction horizon " + std::to_string(horizon) + " s exceeds the cap of " +
                         std::to_string(cap) + " s");
    }
    detail::require(from >= model.epoch, "prediction cannot start before the model epoch");
    const auto first = static_cast<std::size_t>(std::floor((from - model.epoch) / model.step));
    const auto last = static_cast<std::size_t>(std::ceil((from + horizon - model.epoch) / model.step));
    std::vector<double> rates;
    rates.reserve(last - first);
    for (std::size_t b = first; b < std::max(last, first + 1); ++b) rates.push_back(model.rate_at_bin(b));
    return PiecewiseIntensity(model.epoch + model.step * static_cast<double>(first), model.step, std::move(rates));
}

// ---------------------------------------------------------------------------
// Hyper-parameter selection by held-out likelihood

struct BetaCandidate {
    double beta1 = 0.0;
    double beta2 = 0.0;
    double heldout_nll = 0.0;
};

struct BetaSelection {
    BetaCandidate best;
    std::vector<BetaCandidate> table;
};

/// Poisson negative log-likelihood (dropping log Q!) of counts under rates.
inline double poisson_nll(std::span<const std::int64_t> counts, std::span<const double> rates, double dt) {
    double v = 0.0;
    for (std::size_t t = 0; t < counts.size(); ++t) {
        const double mu = std::max(rates[t] * dt, 1e-300);
        v += mu - static_cast<double>(counts[t]) * std::log(mu);
    }
    return v;
}

inline BetaSelection select_betas(const QpsSeries& series, std::span<const double> beta1_grid,
                                  std::span<const double> beta2_grid, const std::optional<PeriodInfo>& period,
                                  double holdout_fraction = 0.2, TrainConfig base = {}) {
    detail::require(!beta1_grid.empty() && !beta2_grid.empty(), "beta grids must be non-empty");
    detail::require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "holdout fraction must be in (0, 1)");
    const std::size_t n = series.size();
    const auto holdout = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(n)));
    detail::require(holdout >= 1 && n - holdout >= 3, "series too short for held-out selection");
    const auto fit = series.slice(0, n - holdout);
    const auto test = series.slice(n - holdout, holdout);
    std::optional<PeriodInfo> fit_period = period;
    if (fit_period && fit_period->detected && fit_period->period_bins >= fit.size()) fit_period.reset();

    BetaSelection sel;
    bool first = true;
    for (double b1 : beta1_grid) {
        for (double b2 : beta2_grid) {
            TrainConfig cfg = base;
            cfg.beta1 = b1;
            cfg.beta2 = b2;
            auto res = train(fit, cfg, fit_period);
            std::vector<double> rates(holdout);
            for (std::size_t t = 0; t < holdout; ++t) rates[t] = res.model.rate_at_bin(fit.size() + t);
            const BetaCandidate c{b1, b2, poisson_nll(test.counts(), rates, series.step())};
            sel.table.push_back(c);
            if (first || c.heldout_nll < sel.best.heldout_nll) sel.best = c;
            first = false;
        }
    }
    return sel;
}

// ---------------------------------------------------------------------------
// Serialisation

inline nlohmann::json to_json(const IntensityModel& m) {
    nlohmann::json j;
    j["step"] = m.step;
    j["epoch"] = m.epoch;
    j["period_bins"] = m.period_bins ? nlohmann::json(*m.period_bins) : nlohmann::json(nullptr);
    j["log_intensity"] = m.log_intensity;
    j["extrapolation"] = m.extrapolation == Extrapolation::periodic_tile ? "periodic_tile" : "trailing_mean";
    j["trailing_window_bins"] = m.trailing_window;
    return j;
}

inline IntensityModel model_from_json(const nlohmann::json& j) {
    try {
        IntensityModel m;
        m.step = j.at("step").get<double>();
        m.epoch = j.at("epoch").get<double>();
        if (j.contains("period_bins") && !j.at("period_bins").is_null()) m.period_bins = j.at("period_bins").get<std::size_t>();
        m.log_intensity = j.at("log_intensity").get<std::vector<double>>();
        const auto rule = j.at("extrapolation").get<std::string>();
        if (rule == "periodic_tile") m.extrapolation = Extrapolation::periodic_tile;
        else if (rule == "trailing_mean") m.extrapolation = Extrapolation::trailing_mean;
        else throw InputError("unknown extrapolation rule '" + rule + "'");
        if (j.contains("trailing_window_bins")) m.trailing_window = j.at("trailing_window_bins").get<std::size_t>();
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed model JSON: ") + e.what());
    }
}

inline void save_model(const std::string& path, const IntensityModel& m) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write model file '" + path + "'");
    out << to_json(m).dump(1) << '\n';
}

inline IntensityModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open model file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("model file is not JSON: ") + e.what());
    }
    return model_from_json(j);
}

}  // namespace robustscaler
