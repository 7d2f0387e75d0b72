#include "piv/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace piv {

namespace {

constexpr double kReflect = 1.0;
constexpr double kExpand = 2.0;
constexpr double kContract = 0.5;
constexpr double kShrink = 0.5;

}  // namespace

NelderMeadResult nelder_mead(const Objective& objective, const Eigen::VectorXd& x0, const NelderMeadOptions& opts)
{
    const Eigen::Index n = x0.size();
    if (n == 0) {
        throw std::invalid_argument("Nelder-Mead needs at least one coordinate");
    }
    if (opts.initial_step.size() != 0 && opts.initial_step.size() != n) {
        throw std::invalid_argument("initial_step must match the dimension of x0");
    }

    NelderMeadResult out;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++out.evaluations;
        const double f = objective(x);
        return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
    };

    std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> fv(static_cast<std::size_t>(n + 1));
    fv[0] = eval(x0);
    if (!std::isfinite(fv[0])) {
        throw std::invalid_argument("objective must be finite at the starting point");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        double step = 0.0;
        if (opts.initial_step.size() == n) {
            step = opts.initial_step[i];
        } else {
            step = x0[i] != 0.0 ? 0.05 * std::abs(x0[i]) : 0.00025;
        }
        simplex[static_cast<std::size_t>(i + 1)][i] += step;
        fv[static_cast<std::size_t>(i + 1)] = eval(simplex[static_cast<std::size_t>(i + 1)]);
    }

    std::vector<std::size_t> order(static_cast<std::size_t>(n + 1));
    auto sort_simplex = [&] {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<Eigen::VectorXd> s2;
        std::vector<double> f2;
        s2.reserve(order.size());
        f2.reserve(order.size());
        for (std::size_t k : order) {
            s2.push_back(simplex[k]);
            f2.push_back(fv[k]);
        }
        simplex.swap(s2);
        fv.swap(f2);
    };

    const auto worst = static_cast<std::size_t>(n);
    sort_simplex();
    while (true) {
        double x_spread = 0.0;
        for (std::size_t k = 1; k <= worst; ++k) {
            x_spread = std::max(x_spread, (simplex[k] - simplex[0]).cwiseAbs().maxCoeff());
        }
        out.spread = fv[worst] - fv[0];
        if (out.spread <= opts.f_tol && x_spread <= opts.x_tol) {
            out.converged = true;
            break;
        }
        if (out.iterations >= opts.max_iter) {
            break;
        }
        ++out.iterations;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (std::size_t k = 0; k < worst; ++k) {
            centroid += simplex[k];
        }
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd xr = centroid + kReflect * (centroid - simplex[worst]);
        const double fr = eval(xr);
        bool shrink = false;
        if (fr < fv[0]) {
            const Eigen::VectorXd xe = centroid + kExpand * (xr - centroid);
            const double fe = eval(xe);
            if (fe < fr) {
                simplex[worst] = xe;
                fv[worst] = fe;
            } else {
                simplex[worst] = xr;
                fv[worst] = fr;
            }
        } else if (fr < fv[worst - 1]) {
            simplex[worst] = xr;
            fv[worst] = fr;
        } else if (fr < fv[worst]) {
            const Eigen::VectorXd xc = centroid + kContract * (xr - centroid);
            const double fc = eval(xc);
            if (fc <= fr) {
                simplex[worst] = xc;
                fv[worst] = fc;
            } else {
                shrink = true;
            }
        } else {
            const Eigen::VectorXd xcc = centroid + kContract * (simplex[worst] - centroid);
            const double fcc = eval(xcc);
            if (fcc < fv[worst]) {
                simplex[worst] = xcc;
                fv[worst] = fcc;
            } else {
                shrink = true;
            }
        }
        if (shrink) {
            for (std::size_t k = 1; k <= worst; ++k) {
                simplex[k] = simplex[0] + kShrink * (simplex[k] - simplex[0]);
                fv[k] = eval(simplex[k]);
            }
        }
        sort_simplex();
        out.best_history.push_back(fv[0]);
    }

    out.x = simplex[0];
    out.f = fv[0];
    return out;
}

}  // namespace piv
