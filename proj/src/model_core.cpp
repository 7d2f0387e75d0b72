#include "piv/model_core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace piv {

namespace {

void require_positive(double x, const char* what)
{
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw std::invalid_argument(std::string(what) + " must be positive and finite");
    }
}

void require_monotone(const Eigen::Ref<const Eigen::VectorXd>& x)
{
    if (x.size() < 2) {
        throw std::invalid_argument("density grid needs at least two points");
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        detail::require_finite(x[i], "grid point");
        if (i > 0 && !(x[i] > x[i - 1])) {
            throw std::invalid_argument("density grid must be strictly increasing");
        }
    }
}

double trapezoid(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y)
{
    double sum = 0.0;
    for (Eigen::Index i = 1; i < x.size(); ++i) {
        sum += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    }
    return sum;
}

// Beyond |z| >> 1 the density behaves like |z|^{-2m}; the mass past an
// endpoint is then approximately f(X) |X - lambda| / (2m - 1).
double tail_mass(double density_at_end, double distance, double m)
{
    return density_at_end * std::abs(distance) / (2.0 * m - 1.0);
}

}  // namespace

std::string to_string(ModelKind m)
{
    switch (m) {
    case ModelKind::Piv:
        return "PIV";
    case ModelKind::Bs:
        return "BS";
    case ModelKind::Heston:
        return "HS";
    }
    return "unknown";
}

ModelKind parse_model_kind(const std::string& name)
{
    std::string lower;
    for (char ch : name) {
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    if (lower == "piv") {
        return ModelKind::Piv;
    }
    if (lower == "bs") {
        return ModelKind::Bs;
    }
    if (lower == "hs" || lower == "heston") {
        return ModelKind::Heston;
    }
    throw std::invalid_argument("unknown model '" + name + "' (expected piv, bs or heston)");
}

void PivParams::validate() const
{
    require_positive(theta, "theta");
    require_positive(a, "a");
    require_positive(sigma, "sigma");
    detail::require_finite(mu, "mu");
}

PivParams PivParams::from_kappa(double kappa)
{
    require_positive(kappa, "kappa");
    return PivParams{kappa, 1.0, 0.0, 1.0};
}

void BsParams::validate() const
{
    require_positive(sigma_bs, "sigma_bs");
    detail::require_finite(drift_bs, "drift_bs");
}

void HestonParams::validate() const
{
    require_positive(kappa_v, "kappa_v");
    require_positive(theta_v, "theta_v");
    require_positive(v0, "v0");
    if (!(xi >= 0.0) || !std::isfinite(xi)) {
        throw std::invalid_argument("xi must be non-negative");
    }
    if (!(rho >= -1.0 && rho <= 1.0)) {
        throw std::invalid_argument("rho must lie in [-1, 1]");
    }
    detail::require_finite(drift_h, "drift_h");
}

void Pearson4Shape::validate() const
{
    if (!(m > 0.5) || !std::isfinite(m)) {
        throw std::domain_error("Pearson IV density needs m > 1/2 to be normalizable");
    }
    require_positive(a4, "a4");
    detail::require_finite(nu, "nu");
    detail::require_finite(lambda, "lambda");
}

NovikovCheck novikov_bound_check(const PivParams& p, double rate, const Eigen::Ref<const Eigen::VectorXd>& r_grid)
{
    p.validate();
    detail::require_finite(rate, "rate");
    if (r_grid.size() == 0) {
        throw std::invalid_argument("Novikov grid must not be empty");
    }
    const double s2ta = p.sigma * p.sigma * p.theta * p.a;
    const double drift_gap = p.mu * p.theta - rate;
    NovikovCheck out;
    out.bound = 3.0 * (drift_gap * drift_gap / (2.0 * s2ta) + p.theta * p.theta / (2.0 * s2ta) + s2ta / 2.0);
    for (Eigen::Index i = 0; i < r_grid.size(); ++i) {
        const double r = r_grid[i];
        const double u = girsanov_kernel_u(p, rate, r);
        const double rhs = out.bound * (1.0 + r * r);
        const double ratio = u * u / rhs;
        out.worst_ratio = std::max(out.worst_ratio, ratio);
        // Relative slack of a few ulps for the rounding in u^2.
        if (u * u > rhs * (1.0 + 1e-12)) {
            out.holds = false;
        }
    }
    return out;
}

Pearson4Shape stationary_shape(const PivParams& p)
{
    p.validate();
    const double c = p.c();
    return Pearson4Shape{1.0 + 1.0 / (2.0 * c), 1.0, p.mu / c, 0.0};
}

Eigen::VectorXd stationary_density_p(const PivParams& p, const Eigen::Ref<const Eigen::VectorXd>& x_grid)
{
    // p(x) ∝ v(x)^-2 exp(∫ 2 u / v^2) = (1 + x^2)^-(1 + 1/(2c)) exp((mu/c) atan x)
    return pearson4_pdf(stationary_shape(p), x_grid);
}

Eigen::VectorXd pearson4_pdf(const Pearson4Shape& shape, const Eigen::Ref<const Eigen::VectorXd>& x_grid)
{
    shape.validate();
    require_monotone(x_grid);

    const Eigen::ArrayXd z = (x_grid.array() - shape.lambda) / shape.a4;
    const Eigen::ArrayXd log_f = -shape.m * z.square().log1p() + shape.nu * z.atan();
    const double peak = log_f.maxCoeff();
    Eigen::VectorXd f = (log_f - peak).exp().matrix();

    const double mass = trapezoid(x_grid, f);
    const Eigen::Index last = x_grid.size() - 1;
    const double left_tail = tail_mass(f[0], x_grid[0] - shape.lambda, shape.m);
    const double right_tail = tail_mass(f[last], x_grid[last] - shape.lambda, shape.m);
    if (x_grid[0] > shape.lambda || x_grid[last] < shape.lambda ||
        left_tail + right_tail > 1e-6 * (mass + left_tail + right_tail)) {
        throw std::domain_error("density grid too narrow: truncated tail mass exceeds 1e-6");
    }
    f /= mass;
    return f;
}

Eigen::VectorXd default_density_grid(const Pearson4Shape& shape, double step)
{
    shape.validate();
    require_positive(step, "grid step");
    // Power tail |z|^{-2m}: mass beyond Z is about Z^{1-2m}/(2m-1) relative to
    // a unit-order bulk. Choose Z so that it is below 1e-8.
    const double z_tail = std::pow(1e-8 * (2.0 * shape.m - 1.0), 1.0 / (1.0 - 2.0 * shape.m));
    const double half_width = shape.a4 * std::clamp(z_tail, 40.0, 1e5);
    const auto n = static_cast<Eigen::Index>(std::ceil(2.0 * half_width / step)) + 1;
    return Eigen::VectorXd::LinSpaced(n, shape.lambda - half_width, shape.lambda + half_width);
}

Eigen::VectorXd cumulative_trapezoid(const Eigen::Ref<const Eigen::VectorXd>& x,
                                     const Eigen::Ref<const Eigen::VectorXd>& y)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
    for (Eigen::Index i = 1; i < x.size(); ++i) {
        out[i] = out[i - 1] + 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    }
    return out;
}

}  // namespace piv
