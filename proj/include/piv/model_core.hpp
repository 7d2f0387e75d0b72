#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace piv {

enum class ModelKind { Piv, Bs, Heston };

/// "PIV", "BS" or "HS".
std::string to_string(ModelKind m);
/// Accepts piv, bs, hs/heston in any case.
ModelKind parse_model_kind(const std::string& name);

/// Pearson diffusion of log returns:
///   dR = -theta (R - mu) dt + sigma sqrt(2 theta a (1 + R^2)) dB,  R_0 = 0.
/// sigma and a only ever appear as c = sigma^2 a, and every risk-neutral
/// quantity depends on kappa = theta c alone.
struct PivParams {
    double theta = 1.0;  // mean-reversion rate, 1/year
    double a = 0.5;      // shape coefficient
    double mu = 0.0;     // invariant mean of R
    double sigma = 1.0;  // volatility scale

    double c() const { return (sigma * sigma) * a; }
    double kappa() const { return theta * c(); }

    void validate() const;

    /// Canonical parameter vector for a pricing-only parameter kappa:
    /// (theta = kappa, a = 1, mu = 0, sigma = 1).
    static PivParams from_kappa(double kappa);
};

struct BsParams {
    double sigma_bs = 0.2;  // annualized log-return volatility
    double drift_bs = 0.0;  // annualized drift, estimation only

    void validate() const;
};

struct HestonParams {
    double kappa_v = 2.0;   // variance mean reversion, 1/year
    double theta_v = 0.04;  // long-run variance
    double xi = 0.3;        // vol of vol
    double rho = -0.7;
    double v0 = 0.04;
    double drift_h = 0.0;   // estimation only

    void validate() const;
    double feller_ratio() const { return 2.0 * kappa_v * theta_v / (xi * xi); }
};

/// Pearson type IV density [1 + ((x - lambda)/a4)^2]^-m exp(nu atan((x - lambda)/a4)).
struct Pearson4Shape {
    double m = 1.0;
    double a4 = 1.0;
    double nu = 0.0;
    double lambda = 0.0;

    void validate() const;
};

namespace detail {
inline void require_finite(double x, const char* what)
{
    if (!std::isfinite(x)) {
        throw std::domain_error(std::string(what) + " must be finite");
    }
}
}  // namespace detail

/// P-measure drift -theta (r - mu).
template <typename Scalar>
Scalar piv_drift(const PivParams& p, const Scalar& r_val)
{
    detail::require_finite(static_cast<double>(r_val), "log return");
    return -p.theta * (r_val - p.mu);
}

/// Diffusion coefficient sigma sqrt(2 theta a (1 + r^2)). Never zero.
template <typename Scalar>
Scalar piv_diffusion(const PivParams& p, const Scalar& r_val)
{
    using std::sqrt;
    detail::require_finite(static_cast<double>(r_val), "log return");
    return p.sigma * sqrt(2.0 * p.theta * p.a * (1.0 + r_val * r_val));
}

/// Market price of risk that makes e^{-rt} S_t driftless:
///   u = (-r - theta (R - mu) + sigma^2 theta a (1 + R^2)) / (sigma sqrt(2 theta a (1 + R^2))).
template <typename Scalar>
Scalar girsanov_kernel_u(const PivParams& p, double rate, const Scalar& r_val)
{
    using std::sqrt;
    detail::require_finite(rate, "rate");
    detail::require_finite(static_cast<double>(r_val), "log return");
    const Scalar q = 1.0 + r_val * r_val;
    const Scalar num = -rate - p.theta * (r_val - p.mu) + p.sigma * p.sigma * p.theta * p.a * q;
    return num / (p.sigma * sqrt(2.0 * p.theta * p.a * q));
}

struct NovikovCheck {
    double bound = 0.0;  // K with u(R)^2 <= K (1 + R^2)
    bool holds = true;
    double worst_ratio = 0.0;  // max over the grid of u^2 / (K (1 + R^2))
};

/// Evaluates K = 3 [ (mu theta - r)^2 / (2 sigma^2 theta a) + theta^2 / (2 sigma^2 theta a)
/// + sigma^2 a theta / 2 ] and checks u(R)^2 <= K (1 + R^2) on every grid point.
NovikovCheck novikov_bound_check(const PivParams& p, double rate, const Eigen::Ref<const Eigen::VectorXd>& r_grid);

/// Stationary P-density of R on a monotone grid, normalized so the trapezoid
/// integral over the grid is one. Throws std::domain_error when the grid
/// truncates more than 1e-6 of the mass.
Eigen::VectorXd stationary_density_p(const PivParams& p, const Eigen::Ref<const Eigen::VectorXd>& x_grid);

/// Pearson IV shape of the stationary law: m = 1 + 1/(2c), a4 = 1, nu = mu/c, lambda = 0.
Pearson4Shape stationary_shape(const PivParams& p);

/// Normalized Pearson IV density on a monotone grid (same normalization
/// contract as stationary_density_p).
Eigen::VectorXd pearson4_pdf(const Pearson4Shape& shape, const Eigen::Ref<const Eigen::VectorXd>& x_grid);

/// Uniform grid centred on the distribution that keeps the truncated tail mass
/// well under the 1e-6 precondition: at least lambda +- 40 a4, wider for heavy tails.
Eigen::VectorXd default_density_grid(const Pearson4Shape& shape, double step);

/// Cumulative trapezoid integral, same length as the inputs, starting at zero.
Eigen::VectorXd cumulative_trapezoid(const Eigen::Ref<const Eigen::VectorXd>& x,
                                     const Eigen::Ref<const Eigen::VectorXd>& y);

}  // namespace piv
