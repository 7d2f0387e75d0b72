#include "piv/sde_engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "piv/errors.hpp"
#include "piv/rng.hpp"

namespace piv {

std::size_t SimConfig::steps() const
{
    if (n_steps > 0) {
        return n_steps;
    }
    return std::max<std::size_t>(16, static_cast<std::size_t>(std::ceil(252.0 * horizon_t - 1e-9)));
}

void SimConfig::validate() const
{
    if (n_paths < 1) {
        throw std::invalid_argument("n_paths must be at least 1");
    }
    if (!(horizon_t > 0.0) || !std::isfinite(horizon_t)) {
        throw std::invalid_argument("horizon_t must be positive");
    }
    if (!std::isfinite(initial_log_return)) {
        throw std::invalid_argument("initial_log_return must be finite");
    }
}

namespace {

// Runs `path(i, stream, row)` for every path; the path returns the step at
// which it went non-finite, or 0. Each path draws from its own keyed stream
// so the output is independent of the thread count.
template <typename PathFn>
PathBatch run_paths(const SimConfig& config, Measure measure, Process process, PathFn&& path)
{
    config.validate();
    const std::size_t n_steps = config.steps();
    const auto n = static_cast<Eigen::Index>(config.n_paths);

    PathBatch batch;
    batch.measure = measure;
    batch.process = process;
    batch.n_steps = n_steps;
    batch.dt = config.horizon_t / static_cast<double>(n_steps);
    batch.terminal.resize(n);
    if (config.keep_paths) {
        batch.paths.resize(n, static_cast<Eigen::Index>(n_steps + 1));
    }

    std::vector<std::size_t> failed_at(config.n_paths, 0);
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = static_cast<std::uint64_t>(i);
        const std::uint64_t stream = config.antithetic ? idx / 2 : idx;
        const double sign = (config.antithetic && (idx % 2 == 1)) ? -1.0 : 1.0;
        RngStream rng(config.seed, stream);
        double* row = config.keep_paths ? batch.paths.row(i).data() : nullptr;
        failed_at[static_cast<std::size_t>(i)] = path(rng, sign, batch.dt, n_steps, row, batch.terminal[i]);
    }

    for (std::size_t i = 0; i < failed_at.size(); ++i) {
        if (failed_at[i] != 0) {
            std::ostringstream msg;
            msg << "path " << i << " became non-finite at step " << failed_at[i];
            throw NumericalError(msg.str());
        }
    }
    return batch;
}

// Scalar Euler-Maruyama for R with coefficient functors.
template <typename Drift, typename Diffusion>
auto euler_r(double r0, Drift drift, Diffusion diffusion)
{
    return [=](RngStream& rng, double sign, double dt, std::size_t n_steps, double* row, double& terminal) -> std::size_t {
        const double sqdt = std::sqrt(dt);
        double r = r0;
        if (row != nullptr) {
            row[0] = r;
        }
        for (std::size_t k = 1; k <= n_steps; ++k) {
            const double z = sign * rng.normal();
            r = r + drift(r) * dt + diffusion(r) * sqdt * z;
            if (!std::isfinite(r)) {
                return k;
            }
            if (row != nullptr) {
                row[k] = r;
            }
        }
        terminal = r;
        return 0;
    };
}

PathBatch q_log_return_paths(const PivParams& params, double rate, const SimConfig& config)
{
    params.validate();
    if (!std::isfinite(rate)) {
        throw std::invalid_argument("rate must be finite");
    }
    const double kappa = params.kappa();
    return run_paths(config, Measure::Q, Process::R,
                     euler_r(
                         config.initial_log_return, [=](double r) { return piv_q_drift(kappa, rate, r); },
                         [=](double r) { return piv_q_diffusion(kappa, r); }));
}

void to_price(PathBatch& batch, double s0, double r0)
{
    batch.process = Process::S;
    const double anchor = s0 * std::exp(-r0);
    batch.terminal = anchor * batch.terminal.array().exp();
    if (batch.has_paths()) {
        batch.paths = anchor * batch.paths.array().exp();
    }
}

void require_spot(double s0)
{
    if (!(s0 > 0.0) || !std::isfinite(s0)) {
        throw std::invalid_argument("s0 must be positive");
    }
}

}  // namespace

PathBatch simulate_r_paths_p(const PivParams& params, const SimConfig& config)
{
    params.validate();
    return run_paths(config, Measure::P, Process::R,
                     euler_r(
                         config.initial_log_return, [params](double r) { return piv_drift(params, r); },
                         [params](double r) { return piv_diffusion(params, r); }));
}

PathBatch simulate_r_paths_q(const PivParams& params, double rate, const SimConfig& config)
{
    return q_log_return_paths(params, rate, config);
}

PathBatch simulate_s_paths_q(const PivParams& params, double s0, double rate, const SimConfig& config)
{
    require_spot(s0);
    PathBatch batch = q_log_return_paths(params, rate, config);
    to_price(batch, s0, config.initial_log_return);
    return batch;
}

PathBatch simulate_gbm_paths(const BsParams& bs, double s0, double rate, const SimConfig& config)
{
    require_spot(s0);
    if (!(bs.sigma_bs >= 0.0) || !std::isfinite(bs.sigma_bs)) {
        throw std::invalid_argument("sigma_bs must be non-negative");
    }
    const double sigma = bs.sigma_bs;
    const double log_s0 = std::log(s0);
    return run_paths(config, Measure::Q, Process::S,
                     [=](RngStream& rng, double sign, double dt, std::size_t n_steps, double* row,
                         double& terminal) -> std::size_t {
                         const double step_drift = (rate - 0.5 * sigma * sigma) * dt;
                         const double step_vol = sigma * std::sqrt(dt);
                         double x = log_s0;
                         if (row != nullptr) {
                             row[0] = s0;
                         }
                         for (std::size_t k = 1; k <= n_steps; ++k) {
                             x += step_drift + step_vol * sign * rng.normal();
                             if (row != nullptr) {
                                 row[k] = std::exp(x);
                             }
                         }
                         terminal = std::exp(x);
                         return std::isfinite(terminal) ? 0 : n_steps;
                     });
}

PathBatch simulate_heston_paths(const HestonParams& h, double s0, double rate, const SimConfig& config)
{
    require_spot(s0);
    h.validate();
    const double rho_perp = std::sqrt(std::max(0.0, 1.0 - h.rho * h.rho));
    const double log_s0 = std::log(s0);
    return run_paths(config, Measure::Q, Process::S,
                     [=](RngStream& rng, double sign, double dt, std::size_t n_steps, double* row,
                         double& terminal) -> std::size_t {
                         const double sqdt = std::sqrt(dt);
                         double x = log_s0;
                         double v = h.v0;
                         if (row != nullptr) {
                             row[0] = s0;
                         }
                         for (std::size_t k = 1; k <= n_steps; ++k) {
                             const double z1 = sign * rng.normal();
                             const double z2 = sign * rng.normal();
                             const double vp = std::max(v, 0.0);
                             const double sq = std::sqrt(vp) * sqdt;
                             x += (rate - 0.5 * vp) * dt + sq * z1;
                             v += h.kappa_v * (h.theta_v - vp) * dt + h.xi * sq * (h.rho * z1 + rho_perp * z2);
                             if (!std::isfinite(x) || !std::isfinite(v)) {
                                 return k;
                             }
                             if (row != nullptr) {
                                 row[k] = std::exp(x);
                             }
                         }
                         terminal = std::exp(x);
                         return 0;
                     });
}

void write_paths_csv(const PathBatch& batch, std::ostream& out)
{
    if (!batch.has_paths()) {
        throw std::invalid_argument("path dump requires SimConfig::keep_paths");
    }
    out.precision(17);
    out << "path_id,step,t,value\n";
    for (Eigen::Index i = 0; i < batch.paths.rows(); ++i) {
        for (Eigen::Index k = 0; k < batch.paths.cols(); ++k) {
            out << i << ',' << k << ',' << static_cast<double>(k) * batch.dt << ',' << batch.paths(i, k) << '\n';
        }
    }
}

}  // namespace piv
