#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>

#include <Eigen/Dense>

#include "piv/model_core.hpp"

namespace piv {

enum class Measure { P, Q };
enum class Process { R, S };

struct SimConfig {
    std::size_t n_paths = 200000;
    std::size_t n_steps = 0;  // 0 selects max(16, ceil(252 horizon_t))
    double horizon_t = 1.0;   // years
    std::uint64_t seed = 0;
    bool antithetic = false;
    bool keep_paths = false;
    double initial_log_return = 0.0;  // R_0; the model starts at 0

    std::size_t steps() const;
    void validate() const;
};

using PathMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Simulated terminal values (and optionally whole paths, one row per path).
struct PathBatch {
    Eigen::VectorXd terminal;
    PathMatrix paths;  // empty unless SimConfig::keep_paths
    Measure measure = Measure::P;
    Process process = Process::R;
    double dt = 0.0;
    std::size_t n_steps = 0;

    bool has_paths() const { return paths.size() > 0; }
};

// Risk-neutral coefficients of R expressed through kappa = theta sigma^2 a.
inline double piv_q_drift(double kappa, double rate, double r_val) { return rate - kappa * (1.0 + r_val * r_val); }
inline double piv_q_diffusion(double kappa, double r_val) { return std::sqrt(2.0 * kappa * (1.0 + r_val * r_val)); }

/// Euler-Maruyama paths of R under P.
PathBatch simulate_r_paths_p(const PivParams& params, const SimConfig& config);

/// Euler-Maruyama paths of R under Q: dR = (r - kappa (1 + R^2)) dt + sqrt(2 kappa (1 + R^2)) dW.
PathBatch simulate_r_paths_q(const PivParams& params, double rate, const SimConfig& config);

/// S under Q, generated in log coordinates as S_0 exp(R - R_0) from the same
/// recursion as simulate_r_paths_q, so both representations agree bit for bit.
PathBatch simulate_s_paths_q(const PivParams& params, double s0, double rate, const SimConfig& config);

/// Geometric Brownian motion with the exact log-space update.
PathBatch simulate_gbm_paths(const BsParams& bs, double s0, double rate, const SimConfig& config);

/// Heston: full-truncation Euler for the variance, log-Euler for the price.
PathBatch simulate_heston_paths(const HestonParams& h, double s0, double rate, const SimConfig& config);

/// Debug dump with columns path_id,step,t,value. Requires kept paths.
void write_paths_csv(const PathBatch& batch, std::ostream& out);

}  // namespace piv
