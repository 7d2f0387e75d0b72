#include "piv/estimation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "piv/errors.hpp"

namespace piv {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void validate_values(const ReturnSeries& s, std::size_t min_len)
{
    if (!(s.dt > 0.0) || !std::isfinite(s.dt)) {
        throw std::invalid_argument("return series dt must be positive");
    }
    if (s.size() < min_len) {
        throw std::invalid_argument("return series too short: " + std::to_string(s.size()) + " values, need at least " +
                                    std::to_string(min_len));
    }
    if (!s.values.allFinite()) {
        throw std::invalid_argument("return series contains non-finite values");
    }
}

double gaussian_logpdf(double x, double mean, double var)
{
    const double d = x - mean;
    return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

// Picks the best of several optimizer runs: lowest objective, ties broken by
// the lexicographically smallest parameter vector.
bool better(const NelderMeadResult& a, const NelderMeadResult& b)
{
    if (a.f != b.f) {
        return a.f < b.f;
    }
    return std::lexicographical_compare(a.x.begin(), a.x.end(), b.x.begin(), b.x.end());
}

NelderMeadResult run_with_restart(const Objective& f, const Eigen::VectorXd& x0, NelderMeadOptions opts)
{
    NelderMeadResult first = nelder_mead(f, x0, opts);
    NelderMeadResult second = nelder_mead(f, first.x, opts);
    second.iterations += first.iterations;
    second.evaluations += first.evaluations;
    second.best_history.insert(second.best_history.begin(), first.best_history.begin(), first.best_history.end());
    return better(second, first) || second.f == first.f ? second : first;
}

}  // namespace

void ReturnSeries::validate() const
{
    validate_values(*this, 30);
    if (!(values.array() != values[0]).any()) {
        throw std::invalid_argument("return series has zero variance");
    }
}

double euler_pseudo_loglik(const PivParams& params, const ReturnSeries& series)
{
    params.validate();
    validate_values(series, 2);
    const double dt = series.dt;
    const double c = params.c();
    double ll = 0.0;
    for (Eigen::Index k = 0; k + 1 < series.values.size(); ++k) {
        const double r = series.values[k];
        const double mean = r - params.theta * (r - params.mu) * dt;
        const double var = 2.0 * params.theta * c * (1.0 + r * r) * dt;
        ll += gaussian_logpdf(series.values[k + 1], mean, var);
    }
    return std::isfinite(ll) ? ll : -std::numeric_limits<double>::infinity();
}

FitResult mle_piv(const ReturnSeries& series)
{
    series.validate();
    auto to_params = [](const Eigen::VectorXd& x) { return PivParams{std::exp(x[0]), std::exp(x[1]), x[2], 1.0}; };
    const Objective nll = [&](const Eigen::VectorXd& x) {
        if (!x.allFinite() || std::abs(x[0]) > 30.0 || std::abs(x[1]) > 30.0) {
            return std::numeric_limits<double>::infinity();
        }
        return -euler_pseudo_loglik(to_params(x), series);
    };

    NelderMeadOptions opts;
    opts.max_iter = 3000;
    opts.initial_step = Eigen::Vector3d(0.5, 0.5, 0.05);

    NelderMeadResult best;
    bool have_best = false;
    for (double theta0 : {0.5, 5.0}) {
        for (double c0 : {0.01, 1.0}) {
            for (double mu0 : {-0.1, 0.1}) {
                const Eigen::Vector3d x0(std::log(theta0), std::log(c0), mu0);
                NelderMeadResult r = run_with_restart(nll, x0, opts);
                if (!have_best || better(r, best)) {
                    best = std::move(r);
                    have_best = true;
                }
            }
        }
    }

    FitResult out;
    out.model = ModelKind::Piv;
    out.params = to_params(best.x);
    out.objective = best.f;
    out.converged = best.converged && std::isfinite(best.f);
    out.iterations = best.iterations;
    out.simplex_spread = best.spread;
    out.note = "sigma fixed at 1; kappa = theta * a";
    return out;
}

FitResult mle_bs(const ReturnSeries& series)
{
    series.validate();
    const double n = static_cast<double>(series.size());
    const double mean = series.values.mean();
    const double var = (series.values.array() - mean).square().sum() / n;
    BsParams p;
    p.sigma_bs = std::sqrt(var) / std::sqrt(series.dt);
    p.drift_bs = mean / series.dt + 0.5 * p.sigma_bs * p.sigma_bs;

    FitResult out;
    out.model = ModelKind::Bs;
    out.params = p;
    out.objective = 0.5 * n * (kLog2Pi + std::log(var) + 1.0);
    out.converged = true;
    out.note = "closed-form Gaussian MLE";
    return out;
}

namespace {

struct HestonProxy {
    Eigen::VectorXd rv;       // annualized realized variance per block
    Eigen::VectorXd returns;  // summed log return per block
    double block_dt = 0.0;
    double window = 0.0;
    double noise_var = 0.0;   // measurement variance of one block proxy
};

HestonProxy build_proxy(const ReturnSeries& s, std::size_t window)
{
    const auto w = static_cast<Eigen::Index>(window);
    const Eigen::Index blocks = s.values.size() / w;
    const double mean = s.values.mean();
    HestonProxy p;
    p.rv.resize(blocks);
    p.returns.resize(blocks);
    p.block_dt = static_cast<double>(window) * s.dt;
    p.window = static_cast<double>(window);
    for (Eigen::Index j = 0; j < blocks; ++j) {
        const auto seg = s.values.segment(j * w, w);
        p.rv[j] = (seg.array() - mean).square().sum() / (p.window * s.dt);
        p.returns[j] = seg.sum();
    }
    // E[rv^2] = E[v^2] (1 + 2/w) for Gaussian returns; noise variance 2 E[v^2] / w.
    p.noise_var = 2.0 * p.rv.squaredNorm() / static_cast<double>(blocks) / (p.window + 2.0);
    return p;
}

constexpr double kVarFloor = 1e-10;

struct HestonBounds {
    static constexpr double kappa_lo = 1e-3, kappa_hi = 100.0;
    static constexpr double theta_lo = 1e-6, theta_hi = 5.0;
    static constexpr double xi_lo = 1e-6, xi_hi = 10.0;
    static constexpr double rho_hi = 0.999;
};

HestonParams heston_from_x(const Eigen::VectorXd& x, bool* clipped)
{
    auto clip = [&](double v, double lo, double hi) {
        const double out = std::clamp(v, lo, hi);
        if (clipped != nullptr && out != v) {
            *clipped = true;
        }
        return out;
    };
    HestonParams h;
    h.kappa_v = clip(std::exp(x[0]), HestonBounds::kappa_lo, HestonBounds::kappa_hi);
    h.theta_v = clip(std::exp(x[1]), HestonBounds::theta_lo, HestonBounds::theta_hi);
    h.xi = clip(std::exp(x[2]), HestonBounds::xi_lo, HestonBounds::xi_hi);
    h.rho = clip(std::tanh(x[3]), -HestonBounds::rho_hi, HestonBounds::rho_hi);
    h.drift_h = x[4];
    return h;
}

struct FilterOutput {
    double loglik = 0.0;
    double v_last = 0.0;
};

// Kalman recursion on the block proxy. State: average variance of the block,
// propagated with the exact conditional mean and variance of the square-root
// diffusion. Observation noise is the sample average of 2 v^2 / window. Each
// block return is paired with the next state innovation through rho.
FilterOutput heston_filter(const HestonParams& h, const HestonProxy& p)
{
    const double delta = p.block_dt;
    const double e = std::exp(-h.kappa_v * delta);
    const double xi2 = h.xi * h.xi;
    auto state_var = [&](double v) {
        return std::max(v, kVarFloor) * xi2 / h.kappa_v * (e - e * e) +
               h.theta_v * xi2 / (2.0 * h.kappa_v) * (1.0 - e) * (1.0 - e);
    };

    FilterOutput out;
    double m = h.theta_v;
    double P = std::max(xi2 * h.theta_v / (2.0 * h.kappa_v), kVarFloor * kVarFloor);
    double m_prev = m;
    for (Eigen::Index j = 0; j < p.rv.size(); ++j) {
        double m_pred = m;
        double P_pred = P;
        double q = 0.0;
        if (j > 0) {
            q = state_var(m);
            m_pred = h.theta_v + (m - h.theta_v) * e;
            P_pred = e * e * P + q;
        }
        const double F = P_pred + p.noise_var;
        const double innov = p.rv[j] - m_pred;

        if (j == 0) {
            out.loglik += gaussian_logpdf(p.rv[j], m_pred, F);
        } else {
            // Bivariate Gaussian of (block return j-1, innovation j). The return
            // variance is the prediction made before block j-1 was observed.
            const double v = std::max(m_prev, kVarFloor);
            const double var_y = v * delta;
            const double dy = p.returns[j - 1] - (h.drift_h - 0.5 * v) * delta;
            const double cov = h.rho * std::sqrt(var_y * q);
            const double det = var_y * F - cov * cov;
            if (!(det > 0.0)) {
                out.loglik = -std::numeric_limits<double>::infinity();
                return out;
            }
            const double quad = (F * dy * dy - 2.0 * cov * dy * innov + var_y * innov * innov) / det;
            out.loglik += -kLog2Pi - 0.5 * std::log(det) - 0.5 * quad;
        }

        const double gain = P_pred / F;
        m = std::max(m_pred + gain * innov, kVarFloor);
        P = (1.0 - gain) * P_pred;
        m_prev = m_pred;
    }
    out.v_last = m;
    return out;
}

}  // namespace

FitResult estimate_heston(const ReturnSeries& series, std::size_t window_rv)
{
    series.validate();
    if (window_rv < 2) {
        throw std::invalid_argument("realized-variance window must be at least 2");
    }
    if (series.size() < 5 * window_rv) {
        throw std::invalid_argument("return series too short for Heston estimation: need at least 5 * window_rv = " +
                                    std::to_string(5 * window_rv) + " values");
    }
    const HestonProxy proxy = build_proxy(series, window_rv);

    const Objective nll = [&](const Eigen::VectorXd& x) {
        if (!x.allFinite() || x.head(3).cwiseAbs().maxCoeff() > 30.0 || std::abs(x[3]) > 10.0) {
            return std::numeric_limits<double>::infinity();
        }
        return -heston_filter(heston_from_x(x, nullptr), proxy).loglik;
    };

    const double theta0 = std::max(proxy.rv.mean(), 1e-4);
    const double drift0 = series.values.mean() / series.dt + 0.5 * theta0;
    NelderMeadOptions opts;
    opts.max_iter = 4000;
    opts.initial_step = (Eigen::VectorXd(5) << 0.5, 0.3, 0.5, 0.3, 0.05).finished();

    NelderMeadResult best;
    bool have_best = false;
    for (double kappa0 : {1.0, 5.0}) {
        for (double xi0 : {0.1, 0.6}) {
            const Eigen::VectorXd x0 =
                (Eigen::VectorXd(5) << std::log(kappa0), std::log(theta0), std::log(xi0), 0.0, drift0).finished();
            NelderMeadResult r = run_with_restart(nll, x0, opts);
            if (!have_best || better(r, best)) {
                best = std::move(r);
                have_best = true;
            }
        }
    }

    FitResult out;
    out.model = ModelKind::Heston;
    bool clipped = false;
    HestonParams h = heston_from_x(best.x, &clipped);
    h.v0 = std::max(proxy.rv[0], HestonBounds::theta_lo);
    out.v_last = std::max(heston_filter(h, proxy).v_last, HestonBounds::theta_lo);
    out.params = h;
    out.objective = best.f;
    out.converged = best.converged && std::isfinite(best.f);
    out.iterations = best.iterations;
    out.simplex_spread = best.spread;
    out.boundary_hit = clipped;
    out.note = "realized-variance proxy, window " + std::to_string(window_rv) + (clipped ? "; parameter clipped" : "");
    return out;
}

}  // namespace piv
