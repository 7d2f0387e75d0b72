#pragma once

#include <cstddef>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "piv/model_core.hpp"
#include "piv/nelder_mead.hpp"

namespace piv {

/// Observed log returns at a fixed sampling interval.
struct ReturnSeries {
    Eigen::VectorXd values;
    double dt = 1.0 / 252.0;  // years per observation
    std::string instrument;
    std::string date_range;

    /// At least 30 finite values with non-zero dispersion, dt > 0.
    void validate() const;
    std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

using ModelParams = std::variant<PivParams, BsParams, HestonParams>;

struct FitResult {
    ModelKind model = ModelKind::Piv;
    ModelParams params;
    double objective = 0.0;  // negative log-likelihood (estimation) or SSE (calibration)
    bool converged = false;
    std::size_t iterations = 0;
    double simplex_spread = 0.0;
    bool boundary_hit = false;
    double v_last = 0.0;  // Heston: filtered variance at the end of the sample
    std::string note;

    const PivParams& piv() const { return std::get<PivParams>(params); }
    const BsParams& bs() const { return std::get<BsParams>(params); }
    const HestonParams& heston() const { return std::get<HestonParams>(params); }
};

/// Euler (Gaussian) pseudo log-likelihood of consecutive pairs:
/// R_{k+1} | R_k ~ N(R_k + drift(R_k) dt, 2 theta sigma^2 a (1 + R_k^2) dt).
/// Needs at least two finite values; returns -infinity when the parameters
/// make any term non-finite.
double euler_pseudo_loglik(const PivParams& params, const ReturnSeries& series);

/// Maximizes the pseudo-likelihood over (theta, a, mu) with sigma fixed to 1,
/// from eight fixed starts over theta in {0.5, 5}, c in {0.01, 1}, mu in {-0.1, 0.1}.
FitResult mle_piv(const ReturnSeries& series);

/// Gaussian MLE: sigma_bs = population std / sqrt(dt), drift_bs = mean/dt + sigma_bs^2/2.
FitResult mle_bs(const ReturnSeries& series);

/// Heston pseudo-MLE from a realized-variance proxy: block means of squared
/// demeaned returns over window_rv observations are filtered with a Kalman
/// recursion using the exact square-root-diffusion conditional moments, jointly
/// with the block returns. v0 is the first proxy value; v_last the last
/// filtered variance. Requires series length >= 5 window_rv.
FitResult estimate_heston(const ReturnSeries& series, std::size_t window_rv = 21);

}  // namespace piv
