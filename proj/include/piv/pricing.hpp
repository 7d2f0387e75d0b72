#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "piv/model_core.hpp"
#include "piv/sde_engine.hpp"

namespace piv {

struct ContractSpec {
    double s0 = 100.0;
    double strike = 100.0;
    double ttm = 1.0;   // years
    double rate = 0.0;  // continuously compounded
    double initial_log_return = 0.0;  // R at the pricing date; the model prices at R = 0

    void validate() const;
};

enum class PriceMethod { MonteCarlo, Pde, ClosedForm, CharacteristicFunction };

std::string to_string(PriceMethod m);

struct PriceDiagnostics {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::size_t n_space = 0;
    std::size_t n_time = 0;
    double half_width = 0.0;
    double residual = 0.0;  // PDE: boundary-doubling delta; CF: node-doubling delta
};

struct PriceResult {
    double price = 0.0;
    double std_error = 0.0;
    PriceMethod method = PriceMethod::ClosedForm;
    PriceDiagnostics diagnostics;
};

// --- Black-Scholes ---------------------------------------------------------

double normal_cdf(double x);

/// Black-Scholes call. sigma = 0 (or a vanishing ttm) gives max(s0 - K e^{-rT}, 0).
PriceResult price_call_bs(double bs_sigma, const ContractSpec& c);

// --- Heston ----------------------------------------------------------------

struct HestonQuadrature {
    std::size_t n_nodes = 256;
    double u_max = 200.0;
    bool check_convergence = true;
};

/// Gauss-Legendre nodes and weights on [-1, 1] (Golub-Welsch), cached per size.
struct GaussLegendre {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
};
const GaussLegendre& gauss_legendre(std::size_t n);

/// Heston (1993) two-probability formula, "little trap" branch of the logarithm.
PriceResult price_call_heston(const HestonParams& h, const ContractSpec& c, const HestonQuadrature& quad = {});

/// Same characteristic-function integrals reused across strikes sharing spot,
/// rate and maturity. Convergence checking is left to the caller.
std::vector<double> price_calls_heston(const HestonParams& h, double s0, double rate, double ttm,
                                       const std::vector<double>& strikes, const HestonQuadrature& quad = {});

// --- PIV Monte Carlo -------------------------------------------------------

/// e^{-rT} mean(max(S_T - K, 0)) over Q-paths; std_error from the payoff sample.
PriceResult price_call_piv_mc(const PivParams& params, const ContractSpec& c, const SimConfig& config);

/// Several strikes priced off one set of paths (common random numbers). The
/// contracts must share s0, ttm, rate and initial log return; config.horizon_t
/// is replaced by that ttm.
std::vector<PriceResult> price_calls_piv_mc(const PivParams& params, const std::vector<ContractSpec>& contracts,
                                            const SimConfig& config);

/// Discounted terminal-price mean and its standard error (martingale diagnostic).
PriceResult discounted_terminal_mean(const PivParams& params, const ContractSpec& c, const SimConfig& config);

// --- PIV PDE ---------------------------------------------------------------

struct PdeGrid {
    std::size_t n_space = 400;
    std::size_t n_time = 200;
    double half_width = 0.0;  // log units; 0 picks 10 effective std devs past the strike
    bool check_domain = true;
};

/// Crank-Nicolson with Rannacher start-up for
///   F_t + r x F_x + kappa x^2 (1 + ln^2(x/S_0)) F_xx = r F
/// in y = ln(x/s0) with Dirichlet boundaries 0 and x - K e^{-r(T-t)}.
PriceResult price_call_piv_pde(const PivParams& params, const ContractSpec& c, const PdeGrid& grid = {});

struct PdeSolution {
    Eigen::VectorXd y;         // log-price nodes, ln(x/s0)
    Eigen::VectorXd terminal;  // payoff on the nodes
    Eigen::VectorXd value;     // F(0, .) on the nodes
};

/// Full-grid solve without the domain check, for diagnostics and tests.
PdeSolution solve_piv_pde(double kappa, const ContractSpec& c, const PdeGrid& grid);

}  // namespace piv
