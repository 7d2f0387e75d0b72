#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace piv {

struct NelderMeadOptions {
    std::size_t max_iter = 2000;
    double x_tol = 1e-8;   // max vertex distance (inf-norm) from the best vertex
    double f_tol = 1e-10;  // max objective gap from the best vertex
    /// Per-coordinate initial simplex offsets. Empty: 5% of |x0_i|, or 0.00025 when x0_i = 0.
    Eigen::VectorXd initial_step;
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double f = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    double spread = 0.0;              // objective gap across the final simplex
    std::vector<double> best_history;  // best value after each iteration
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Nelder-Mead simplex minimizer with reflection 1, expansion 2, contraction
/// 0.5 and shrink 0.5. Non-finite objective values rank as +infinity.
/// Deterministic given the objective, x0 and options.
NelderMeadResult nelder_mead(const Objective& objective, const Eigen::VectorXd& x0,
                             const NelderMeadOptions& opts = {});

}  // namespace piv
