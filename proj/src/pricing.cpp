#include "piv/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "piv/errors.hpp"

namespace piv {

void ContractSpec::validate() const
{
    if (!(s0 > 0.0) || !std::isfinite(s0)) {
        throw std::invalid_argument("s0 must be positive");
    }
    // A zero strike is accepted as a degenerate test input (payoff S_T).
    if (!(strike >= 0.0) || !std::isfinite(strike)) {
        throw std::invalid_argument("strike must be non-negative");
    }
    if (!(ttm > 0.0) || !std::isfinite(ttm)) {
        throw std::invalid_argument("ttm must be positive");
    }
    if (!std::isfinite(rate) || !std::isfinite(initial_log_return)) {
        throw std::invalid_argument("rate and initial log return must be finite");
    }
}

std::string to_string(PriceMethod m)
{
    switch (m) {
    case PriceMethod::MonteCarlo:
        return "MC";
    case PriceMethod::Pde:
        return "PDE";
    case PriceMethod::ClosedForm:
        return "closed-form";
    case PriceMethod::CharacteristicFunction:
        return "CF";
    }
    return "unknown";
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

PriceResult price_call_bs(double bs_sigma, const ContractSpec& c)
{
    c.validate();
    if (!(bs_sigma >= 0.0) || !std::isfinite(bs_sigma)) {
        throw std::invalid_argument("Black-Scholes volatility must be non-negative");
    }
    PriceResult out;
    out.method = PriceMethod::ClosedForm;
    const double discounted_strike = c.strike * std::exp(-c.rate * c.ttm);
    const double total_vol = bs_sigma * std::sqrt(c.ttm);
    if (c.strike == 0.0) {
        out.price = c.s0;
    } else if (total_vol < 1e-12) {
        out.price = std::max(c.s0 - discounted_strike, 0.0);
    } else {
        const double d1 = (std::log(c.s0 / discounted_strike) + 0.5 * total_vol * total_vol) / total_vol;
        const double d2 = d1 - total_vol;
        out.price = c.s0 * normal_cdf(d1) - discounted_strike * normal_cdf(d2);
        out.price = std::max(out.price, 0.0);
    }
    return out;
}

// --- Heston ----------------------------------------------------------------

const GaussLegendre& gauss_legendre(std::size_t n)
{
    static std::mutex mutex;
    static std::map<std::size_t, GaussLegendre> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) {
        return it->second;
    }
    if (n < 2) {
        throw std::invalid_argument("Gauss-Legendre rule needs at least two nodes");
    }
    // Golub-Welsch: eigen-decomposition of the symmetric Jacobi matrix.
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Eigen::VectorXd sub(static_cast<Eigen::Index>(n - 1));
    for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(n); ++k) {
        const double kk = static_cast<double>(k);
        sub[k - 1] = kk / std::sqrt(4.0 * kk * kk - 1.0);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    GaussLegendre rule;
    rule.nodes = solver.eigenvalues();
    rule.weights = 2.0 * solver.eigenvectors().row(0).transpose().array().square();
    return cache.emplace(n, std::move(rule)).first->second;
}

namespace {

using cplx = std::complex<double>;

// Characteristic function f_j(phi) of ln S_T under the j-th measure, without
// the e^{i phi ln S_0} factor.
cplx heston_cf(const HestonParams& h, double rate, double ttm, int j, double phi)
{
    const cplx i(0.0, 1.0);
    const double u = (j == 1) ? 0.5 : -0.5;
    const double b = (j == 1) ? h.kappa_v - h.rho * h.xi : h.kappa_v;
    if (h.xi < 1e-8) {
        // Deterministic variance: the Riccati solution collapses to the integrated variance.
        const double iv = h.theta_v * ttm + (h.v0 - h.theta_v) * (-std::expm1(-h.kappa_v * ttm)) / h.kappa_v;
        return std::exp(i * phi * rate * ttm + (u * i * phi - 0.5 * phi * phi) * iv);
    }
    const double xi2 = h.xi * h.xi;
    const cplx beta = b - h.rho * h.xi * i * phi;
    const cplx d = std::sqrt(beta * beta - xi2 * (2.0 * u * i * phi - phi * phi));
    const cplx g = (beta - d) / (beta + d);
    const cplx edt = std::exp(-d * ttm);
    const cplx C = rate * i * phi * ttm +
                   h.kappa_v * h.theta_v / xi2 * ((beta - d) * ttm - 2.0 * std::log((1.0 - g * edt) / (1.0 - g)));
    const cplx D = (beta - d) / xi2 * (1.0 - edt) / (1.0 - g * edt);
    return std::exp(C + D * h.v0);
}

struct HestonIntegrals {
    Eigen::VectorXd phi;
    Eigen::VectorXd weight;
    Eigen::VectorXcd f1;
    Eigen::VectorXcd f2;
};

double effective_u_max(const HestonParams& h, double ttm, double u_max)
{
    // The integrands decay like exp(-v T u^2 / 2); widen the range for short
    // maturities and small variances so the truncation stays negligible.
    const double v_min = std::max(std::min(h.v0, h.theta_v), 1e-6);
    return std::clamp(9.0 / std::sqrt(v_min * ttm), u_max, 20000.0);
}

HestonIntegrals heston_integrals(const HestonParams& h, double rate, double ttm, std::size_t n_nodes, double u_max)
{
    const GaussLegendre& rule = gauss_legendre(n_nodes);
    const double upper = effective_u_max(h, ttm, u_max);
    HestonIntegrals out;
    const auto n = static_cast<Eigen::Index>(n_nodes);
    out.phi = 0.5 * upper * (rule.nodes.array() + 1.0);
    out.weight = 0.5 * upper * rule.weights;
    out.f1.resize(n);
    out.f2.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.f1[k] = heston_cf(h, rate, ttm, 1, out.phi[k]);
        out.f2[k] = heston_cf(h, rate, ttm, 2, out.phi[k]);
    }
    return out;
}

double heston_call_from_integrals(const HestonIntegrals& in, double s0, double strike, double rate, double ttm)
{
    const cplx i(0.0, 1.0);
    const double log_moneyness = std::log(s0 / strike);
    double p1 = 0.0;
    double p2 = 0.0;
    for (Eigen::Index k = 0; k < in.phi.size(); ++k) {
        const double phi = in.phi[k];
        const cplx shift = std::exp(i * phi * log_moneyness) / (i * phi);
        p1 += in.weight[k] * (shift * in.f1[k]).real();
        p2 += in.weight[k] * (shift * in.f2[k]).real();
    }
    p1 = 0.5 + p1 / std::numbers::pi;
    p2 = 0.5 + p2 / std::numbers::pi;
    return s0 * p1 - strike * std::exp(-rate * ttm) * p2;
}

}  // namespace

std::vector<double> price_calls_heston(const HestonParams& h, double s0, double rate, double ttm,
                                       const std::vector<double>& strikes, const HestonQuadrature& quad)
{
    h.validate();
    const HestonIntegrals in = heston_integrals(h, rate, ttm, quad.n_nodes, quad.u_max);
    std::vector<double> out;
    out.reserve(strikes.size());
    for (double k : strikes) {
        if (!(k > 0.0)) {
            throw std::invalid_argument("Heston pricing needs a positive strike");
        }
        const double lower = std::max(s0 - k * std::exp(-rate * ttm), 0.0);
        out.push_back(std::clamp(heston_call_from_integrals(in, s0, k, rate, ttm), lower, s0));
    }
    return out;
}

PriceResult price_call_heston(const HestonParams& h, const ContractSpec& c, const HestonQuadrature& quad)
{
    c.validate();
    PriceResult out;
    out.method = PriceMethod::CharacteristicFunction;
    out.diagnostics.n_space = quad.n_nodes;
    out.price = price_calls_heston(h, c.s0, c.rate, c.ttm, {c.strike}, quad).front();
    if (quad.check_convergence) {
        HestonQuadrature doubled = quad;
        doubled.n_nodes *= 2;
        const double refined = price_calls_heston(h, c.s0, c.rate, c.ttm, {c.strike}, doubled).front();
        out.diagnostics.residual = std::abs(refined - out.price);
        if (out.diagnostics.residual > 1e-6 * c.s0) {
            throw NumericalError("Heston quadrature not converged: doubling the nodes moved the price by " +
                                 std::to_string(out.diagnostics.residual));
        }
    }
    return out;
}

// --- PIV Monte Carlo -------------------------------------------------------

namespace {

void check_same_batch(const std::vector<ContractSpec>& contracts)
{
    if (contracts.empty()) {
        throw std::invalid_argument("pricing batch is empty");
    }
    const ContractSpec& ref = contracts.front();
    for (const ContractSpec& c : contracts) {
        c.validate();
        if (c.s0 != ref.s0 || c.ttm != ref.ttm || c.rate != ref.rate ||
            c.initial_log_return != ref.initial_log_return) {
            throw std::invalid_argument("common-random-number batch needs identical s0, ttm, rate and R_0");
        }
    }
}

// Mean and standard error of per-path values; antithetic pairs are averaged first.
PriceResult sample_mean(const Eigen::Ref<const Eigen::VectorXd>& values, bool antithetic, double scale)
{
    const Eigen::Index n_paths = values.size();
    const Eigen::Index n = antithetic ? n_paths / 2 : n_paths;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = antithetic ? 0.5 * (values[2 * i] + values[2 * i + 1]) : values[i];
        sum += x;
        sum_sq += x * x;
    }
    const double nd = static_cast<double>(n);
    const double mean = sum / nd;
    const double var = n > 1 ? std::max(0.0, (sum_sq - nd * mean * mean) / (nd - 1.0)) : 0.0;
    PriceResult out;
    out.method = PriceMethod::MonteCarlo;
    out.price = scale * mean;
    out.std_error = scale * std::sqrt(var / nd);
    out.diagnostics.n_paths = static_cast<std::size_t>(n_paths);
    return out;
}

SimConfig pricing_config(const SimConfig& config, const ContractSpec& c)
{
    SimConfig cfg = config;
    cfg.horizon_t = c.ttm;
    cfg.initial_log_return = c.initial_log_return;
    cfg.keep_paths = false;
    if (cfg.antithetic && cfg.n_paths % 2 != 0) {
        throw std::invalid_argument("antithetic sampling needs an even path count");
    }
    return cfg;
}

}  // namespace

std::vector<PriceResult> price_calls_piv_mc(const PivParams& params, const std::vector<ContractSpec>& contracts,
                                            const SimConfig& config)
{
    check_same_batch(contracts);
    const ContractSpec& ref = contracts.front();
    const SimConfig cfg = pricing_config(config, ref);
    const PathBatch batch = simulate_s_paths_q(params, ref.s0, ref.rate, cfg);
    const double discount = std::exp(-ref.rate * ref.ttm);

    std::vector<PriceResult> out;
    out.reserve(contracts.size());
    Eigen::VectorXd payoff(batch.terminal.size());
    for (const ContractSpec& c : contracts) {
        payoff = (batch.terminal.array() - c.strike).max(0.0);
        PriceResult r = sample_mean(payoff, cfg.antithetic, discount);
        r.diagnostics.n_steps = batch.n_steps;
        out.push_back(r);
    }
    return out;
}

PriceResult price_call_piv_mc(const PivParams& params, const ContractSpec& c, const SimConfig& config)
{
    return price_calls_piv_mc(params, {c}, config).front();
}

PriceResult discounted_terminal_mean(const PivParams& params, const ContractSpec& c, const SimConfig& config)
{
    c.validate();
    const SimConfig cfg = pricing_config(config, c);
    const PathBatch batch = simulate_s_paths_q(params, c.s0, c.rate, cfg);
    PriceResult r = sample_mean(batch.terminal, cfg.antithetic, std::exp(-c.rate * c.ttm));
    r.diagnostics.n_steps = batch.n_steps;
    return r;
}

// --- PIV PDE ---------------------------------------------------------------

namespace {

// Thomas elimination for a constant tridiagonal matrix, factored once and
// reused for every time step.
class Tridiagonal {
public:
    Tridiagonal(const Eigen::VectorXd& lower, const Eigen::VectorXd& diag, const Eigen::VectorXd& upper)
        : upper_(upper), mult_(diag.size()), inv_pivot_(diag.size())
    {
        const Eigen::Index n = diag.size();
        double pivot = diag[0];
        inv_pivot_[0] = 1.0 / pivot;
        mult_[0] = 0.0;
        for (Eigen::Index i = 1; i < n; ++i) {
            mult_[i] = lower[i - 1] * inv_pivot_[i - 1];
            pivot = diag[i] - mult_[i] * upper[i - 1];
            inv_pivot_[i] = 1.0 / pivot;
        }
    }

    void solve(Eigen::VectorXd& rhs) const
    {
        const Eigen::Index n = rhs.size();
        for (Eigen::Index i = 1; i < n; ++i) {
            rhs[i] -= mult_[i] * rhs[i - 1];
        }
        rhs[n - 1] *= inv_pivot_[n - 1];
        for (Eigen::Index i = n - 2; i >= 0; --i) {
            rhs[i] = (rhs[i] - upper_[i] * rhs[i + 1]) * inv_pivot_[i];
        }
    }

private:
    Eigen::VectorXd upper_;
    Eigen::VectorXd mult_;
    Eigen::VectorXd inv_pivot_;
};

double auto_half_width(double kappa, const ContractSpec& c)
{
    const double y_strike = std::log(c.strike / c.s0);
    const double reach = std::abs(y_strike) + std::abs(c.initial_log_return);
    const double sd = std::sqrt(2.0 * kappa * c.ttm * (1.0 + reach * reach));
    return std::abs(y_strike) + 10.0 * sd;
}

// Four-point Lagrange interpolation of the grid values at y = 0.
double interpolate_at_zero(const Eigen::VectorXd& y, const Eigen::VectorXd& v)
{
    const Eigen::Index n = y.size();
    Eigen::Index j = 0;
    while (j + 1 < n && y[j + 1] <= 0.0) {
        ++j;
    }
    const Eigen::Index start = std::clamp<Eigen::Index>(j - 1, 0, n - 4);
    double out = 0.0;
    for (Eigen::Index a = start; a < start + 4; ++a) {
        double w = 1.0;
        for (Eigen::Index b = start; b < start + 4; ++b) {
            if (b != a) {
                w *= (0.0 - y[b]) / (y[a] - y[b]);
            }
        }
        out += w * v[a];
    }
    return out;
}

}  // namespace

PdeSolution solve_piv_pde(double kappa, const ContractSpec& c, const PdeGrid& grid)
{
    c.validate();
    if (!(c.strike > 0.0)) {
        throw std::invalid_argument("PDE pricing needs a positive strike");
    }
    if (grid.n_space < 64 || grid.n_time < 64) {
        throw std::invalid_argument("PDE grid needs at least 64 space and 64 time steps");
    }
    const double half_width = grid.half_width > 0.0 ? grid.half_width : auto_half_width(kappa, c);
    const double y_strike = std::log(c.strike / c.s0);
    const double h = 2.0 * half_width / static_cast<double>(grid.n_space);

    // Nodes aligned with the strike so the payoff kink sits on a node.
    const double lo = y_strike - std::ceil((y_strike + half_width) / h - 1e-9) * h;
    const auto n_nodes = static_cast<Eigen::Index>(std::ceil((half_width - lo) / h - 1e-9)) + 1;
    PdeSolution sol;
    sol.y = Eigen::VectorXd::LinSpaced(n_nodes, lo, lo + static_cast<double>(n_nodes - 1) * h);
    sol.terminal = (c.s0 * sol.y.array().exp() - c.strike).max(0.0).matrix();

    const Eigen::Index m = n_nodes - 2;  // interior unknowns
    const double r = c.rate;
    Eigen::VectorXd alpha(m), beta(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double yt = sol.y[i + 1] + c.initial_log_return;
        alpha[i] = kappa * (1.0 + yt * yt);
        beta[i] = r - alpha[i];
    }
    // Spatial operator L F_i = lo_i F_{i-1} + mid_i F_i + up_i F_{i+1}.
    const Eigen::ArrayXd op_lo = alpha.array() / (h * h) - beta.array() / (2.0 * h);
    const Eigen::ArrayXd op_mid = -2.0 * alpha.array() / (h * h) - r;
    const Eigen::ArrayXd op_up = alpha.array() / (h * h) + beta.array() / (2.0 * h);
    const double upper_spot = c.s0 * std::exp(sol.y[n_nodes - 1]);

    const double dtau = c.ttm / static_cast<double>(grid.n_time);
    auto system = [&](double dt, double implicit) {
        const Eigen::VectorXd sub = (-implicit * dt * op_lo.segment(1, m - 1)).matrix();
        const Eigen::VectorXd dia = (1.0 - implicit * dt * op_mid).matrix();
        const Eigen::VectorXd sup = (-implicit * dt * op_up.head(m - 1)).matrix();
        return Tridiagonal(sub, dia, sup);
    };
    const Tridiagonal half_implicit = system(0.5 * dtau, 1.0);
    const Tridiagonal crank_nicolson = system(dtau, 0.5);

    Eigen::VectorXd v = sol.terminal.segment(1, m);
    Eigen::VectorXd rhs(m);
    auto step = [&](const Tridiagonal& sys, double tau_new, double dt, double implicit) {
        const double explicit_w = 1.0 - implicit;
        const double bc_up_old = upper_spot - c.strike * std::exp(-r * (tau_new - dt));
        const double bc_up_new = upper_spot - c.strike * std::exp(-r * tau_new);
        rhs = v;
        if (explicit_w > 0.0) {
            const double w = explicit_w * dt;
            for (Eigen::Index i = 0; i < m; ++i) {
                const double left = i > 0 ? v[i - 1] : 0.0;
                const double right = i + 1 < m ? v[i + 1] : bc_up_old;
                rhs[i] += w * (op_lo[i] * left + op_mid[i] * v[i] + op_up[i] * right);
            }
        }
        rhs[m - 1] += implicit * dt * op_up[m - 1] * bc_up_new;
        sys.solve(rhs);
        v.swap(rhs);
    };

    double tau = 0.0;
    // Rannacher start-up: the first two steps as four implicit half steps.
    for (int k = 0; k < 4; ++k) {
        tau += 0.5 * dtau;
        step(half_implicit, tau, 0.5 * dtau, 1.0);
    }
    for (std::size_t k = 2; k < grid.n_time; ++k) {
        tau = dtau * static_cast<double>(k + 1);
        step(crank_nicolson, tau, dtau, 0.5);
    }
    if (!v.allFinite()) {
        throw NumericalError("PDE solve produced non-finite values");
    }

    sol.value.resize(n_nodes);
    sol.value[0] = 0.0;
    sol.value.segment(1, m) = v;
    sol.value[n_nodes - 1] = upper_spot - c.strike * std::exp(-r * c.ttm);
    return sol;
}

PriceResult price_call_piv_pde(const PivParams& params, const ContractSpec& c, const PdeGrid& grid)
{
    params.validate();
    const double kappa = params.kappa();
    const PdeSolution sol = solve_piv_pde(kappa, c, grid);

    PriceResult out;
    out.method = PriceMethod::Pde;
    out.price = std::max(interpolate_at_zero(sol.y, sol.value), 0.0);
    out.diagnostics.n_space = static_cast<std::size_t>(sol.y.size() - 1);
    out.diagnostics.n_time = grid.n_time;
    out.diagnostics.half_width = grid.half_width > 0.0 ? grid.half_width : auto_half_width(kappa, c);

    if (grid.check_domain) {
        // Boundary influence: doubling the domain at the same mesh width must
        // leave the price unchanged.
        PdeGrid wide = grid;
        wide.half_width = 2.0 * out.diagnostics.half_width;
        wide.n_space = 2 * grid.n_space;
        const PdeSolution wide_sol = solve_piv_pde(kappa, c, wide);
        const double wide_price = std::max(interpolate_at_zero(wide_sol.y, wide_sol.value), 0.0);
        out.diagnostics.residual = std::abs(wide_price - out.price);
        if (out.diagnostics.residual > 1e-6 * c.s0) {
            throw NumericalError("PDE domain too narrow: doubling it moved the price by " +
                                 std::to_string(out.diagnostics.residual));
        }
    }
    return out;
}

}  // namespace piv
