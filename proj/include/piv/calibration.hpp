#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "piv/estimation.hpp"
#include "piv/market_data.hpp"
#include "piv/pricing.hpp"

namespace piv {

enum class PivPricer { MonteCarlo, Pde };

std::string to_string(PivPricer p);
PivPricer parse_piv_pricer(const std::string& name);

/// How a list of quotes is priced under a model.
struct QuotePricing {
    std::size_t n_paths = 200000;  // PIV Monte Carlo, antithetic pairs
    std::uint64_t seed = 0;
    PivPricer piv_pricer = PivPricer::MonteCarlo;
    PdeGrid pde_grid{400, 200, 0.0, false};
    HestonQuadrature heston_quad{128, 200.0, false};
};

/// Model prices for every quote at the given rate, in input order. Quotes
/// sharing (underlying, maturity) form one group: one Monte Carlo path set
/// (common random numbers, seed derived from the maturity in days) or one
/// characteristic-function integral.
std::vector<double> price_quotes(const ModelParams& params, const std::vector<OptionQuote>& quotes, double rate,
                                 const QuotePricing& pricing);

struct CalibrationProblem {
    std::vector<OptionQuote> quotes;
    double rate = 0.0;
    ModelKind model = ModelKind::Bs;
    QuotePricing pricing{};

    /// At least one quote, one trade date, positive strikes and prices.
    void validate() const;
};

/// Sum of squared pricing errors at `params`.
double calibration_sse(const CalibrationProblem& problem, const ModelParams& params);

/// Least-squares fit to the quotes with Nelder-Mead from fixed starts.
/// BS fits sigma_bs; PIV fits kappa alone and reports PivParams::from_kappa;
/// Heston fits (kappa_v, theta_v, xi, rho, v0).
FitResult calibrate_implied(const CalibrationProblem& problem);

/// PIV least squares over the full (theta, a, mu, sigma) vector. Only
/// kappa = theta sigma^2 a reaches the prices.
FitResult calibrate_piv_full(const CalibrationProblem& problem);

/// Black-Scholes implied volatility by bisection on [1e-6, 5]. Prices outside
/// [max(s0 - K e^{-rT}, 0), s0) throw std::domain_error.
double implied_vol_bs(const ContractSpec& c, double market_price);

}  // namespace piv
