#include "piv/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

#include "piv/errors.hpp"
#include "piv/rng.hpp"

namespace piv {

std::string to_string(PivPricer p)
{
    return p == PivPricer::MonteCarlo ? "mc" : "pde";
}

PivPricer parse_piv_pricer(const std::string& name)
{
    if (name == "mc") {
        return PivPricer::MonteCarlo;
    }
    if (name == "pde") {
        return PivPricer::Pde;
    }
    throw std::invalid_argument("unknown PIV pricer '" + name + "' (expected mc or pde)");
}

namespace {

struct QuoteGroup {
    double s0 = 0.0;
    int ttm_days = 0;
    std::vector<std::size_t> members;
};

std::vector<QuoteGroup> group_quotes(const std::vector<OptionQuote>& quotes)
{
    std::vector<QuoteGroup> groups;
    std::map<std::pair<double, int>, std::size_t> index;
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        const auto key = std::make_pair(quotes[i].underlying_close, quotes[i].ttm_days);
        auto [it, inserted] = index.emplace(key, groups.size());
        if (inserted) {
            groups.push_back({key.first, key.second, {}});
        }
        groups[it->second].members.push_back(i);
    }
    return groups;
}

}  // namespace

std::vector<double> price_quotes(const ModelParams& params, const std::vector<OptionQuote>& quotes, double rate,
                                 const QuotePricing& pricing)
{
    std::vector<double> out(quotes.size(), 0.0);
    const auto groups = group_quotes(quotes);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const QuoteGroup& grp = groups[g];
        const double ttm = grp.ttm_days / 365.0;
        std::vector<double> strikes;
        for (std::size_t i : grp.members) {
            strikes.push_back(quotes[i].strike);
        }
        std::vector<double> prices;
        if (const auto* bs = std::get_if<BsParams>(&params)) {
            for (double k : strikes) {
                prices.push_back(price_call_bs(bs->sigma_bs, ContractSpec{grp.s0, k, ttm, rate, 0.0}).price);
            }
        } else if (const auto* hs = std::get_if<HestonParams>(&params)) {
            prices = price_calls_heston(*hs, grp.s0, rate, ttm, strikes, pricing.heston_quad);
        } else {
            const auto& pv = std::get<PivParams>(params);
            if (pricing.piv_pricer == PivPricer::Pde) {
                for (double k : strikes) {
                    prices.push_back(price_call_piv_pde(pv, ContractSpec{grp.s0, k, ttm, rate, 0.0}, pricing.pde_grid).price);
                }
            } else {
                std::vector<ContractSpec> contracts;
                for (double k : strikes) {
                    contracts.push_back(ContractSpec{grp.s0, k, ttm, rate, 0.0});
                }
                SimConfig cfg;
                cfg.n_paths = pricing.n_paths + pricing.n_paths % 2;
                cfg.horizon_t = ttm;
                cfg.seed = derive_seed(pricing.seed, static_cast<std::uint64_t>(grp.ttm_days));
                cfg.antithetic = true;
                for (const auto& r : price_calls_piv_mc(pv, contracts, cfg)) {
                    prices.push_back(r.price);
                }
            }
        }
        for (std::size_t j = 0; j < grp.members.size(); ++j) {
            out[grp.members[j]] = prices[j];
        }
    }
    return out;
}

void CalibrationProblem::validate() const
{
    if (quotes.empty()) {
        throw std::invalid_argument("calibration needs at least one quote");
    }
    if (!std::isfinite(rate)) {
        throw std::invalid_argument("calibration rate must be finite");
    }
    for (const auto& q : quotes) {
        q.validate();
        if (q.trade_date != quotes.front().trade_date) {
            throw std::invalid_argument("calibration quotes must share one trade date");
        }
    }
}

double calibration_sse(const CalibrationProblem& problem, const ModelParams& params)
{
    const auto prices = price_quotes(params, problem.quotes, problem.rate, problem.pricing);
    double sse = 0.0;
    for (std::size_t i = 0; i < prices.size(); ++i) {
        const double d = prices[i] - problem.quotes[i].option_close;
        sse += d * d;
    }
    return sse;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Runs Nelder-Mead from each start; keeps the lowest objective, ties to the
// lexicographically smallest point.
NelderMeadResult best_of(const Objective& f, const std::vector<Eigen::VectorXd>& starts, const NelderMeadOptions& opts)
{
    NelderMeadResult best;
    bool have = false;
    for (const auto& x0 : starts) {
        if (!std::isfinite(f(x0))) {
            continue;
        }
        NelderMeadResult r = nelder_mead(f, x0, opts);
        const bool wins = !have || r.f < best.f ||
                          (r.f == best.f && std::lexicographical_compare(r.x.begin(), r.x.end(), best.x.begin(),
                                                                         best.x.end()));
        if (wins) {
            best = std::move(r);
            have = true;
        }
    }
    if (!have) {
        throw NumericalError("calibration objective is not finite at any starting point");
    }
    return best;
}

// Guarded objective: pricing failures on extreme trial points count as +inf.
template <typename Map>
Objective sse_objective(const CalibrationProblem& problem, Map map)
{
    return [&problem, map](const Eigen::VectorXd& x) {
        if (!x.allFinite()) {
            return kInf;
        }
        try {
            bool ok = true;
            const ModelParams p = map(x, ok);
            if (!ok) {
                return kInf;
            }
            return calibration_sse(problem, p);
        } catch (const std::exception&) {
            return kInf;
        }
    };
}

double atm_variance(const CalibrationProblem& problem)
{
    const OptionQuote* best = &problem.quotes.front();
    for (const auto& q : problem.quotes) {
        if (std::abs(std::log(q.underlying_close / q.strike)) < std::abs(std::log(best->underlying_close / best->strike))) {
            best = &q;
        }
    }
    try {
        const double iv = implied_vol_bs(best->contract(problem.rate), best->option_close);
        return std::clamp(iv * iv, 1e-4, 1.0);
    } catch (const std::exception&) {
        return 0.04;
    }
}

FitResult finish(ModelKind model, ModelParams params, const NelderMeadResult& r, std::string note)
{
    FitResult out;
    out.model = model;
    out.params = std::move(params);
    out.objective = r.f;
    out.converged = r.converged;
    out.iterations = r.iterations;
    out.simplex_spread = r.spread;
    out.note = std::move(note);
    return out;
}

FitResult calibrate_bs(const CalibrationProblem& problem)
{
    const Objective f = sse_objective(problem, [](const Eigen::VectorXd& x, bool& ok) -> ModelParams {
        ok = std::abs(x[0]) < 20.0;
        return BsParams{std::exp(x[0]), 0.0};
    });
    NelderMeadOptions opts;
    opts.x_tol = 1e-11;
    opts.f_tol = 1e-16;
    opts.initial_step = Eigen::VectorXd::Constant(1, 0.3);
    const std::vector<Eigen::VectorXd> starts{Eigen::VectorXd::Constant(1, std::log(0.2)),
                                              Eigen::VectorXd::Constant(1, std::log(0.6))};
    const NelderMeadResult r = best_of(f, starts, opts);
    return finish(ModelKind::Bs, BsParams{std::exp(r.x[0]), 0.0}, r, "sigma_bs");
}

FitResult calibrate_piv_kappa(const CalibrationProblem& problem)
{
    const Objective f = sse_objective(problem, [](const Eigen::VectorXd& x, bool& ok) -> ModelParams {
        ok = std::abs(x[0]) < 20.0;
        return PivParams::from_kappa(std::exp(x[0]));
    });
    NelderMeadOptions opts;
    opts.x_tol = 1e-6;
    opts.f_tol = 1e-12;
    opts.initial_step = Eigen::VectorXd::Constant(1, 0.5);
    const std::vector<Eigen::VectorXd> starts{Eigen::VectorXd::Constant(1, std::log(0.005)),
                                              Eigen::VectorXd::Constant(1, std::log(0.05))};
    const NelderMeadResult r = best_of(f, starts, opts);
    return finish(ModelKind::Piv, PivParams::from_kappa(std::exp(r.x[0])), r,
                  "kappa only; reported as theta = kappa, a = 1, mu = 0, sigma = 1");
}

struct HestonBox {
    static constexpr double kappa_lo = 1e-3, kappa_hi = 100.0;
    static constexpr double var_lo = 1e-6, var_hi = 5.0;
    static constexpr double xi_lo = 1e-4, xi_hi = 10.0;
    static constexpr double rho_hi = 0.999;
};

HestonParams heston_point(const Eigen::VectorXd& x, bool& inside)
{
    HestonParams h;
    h.kappa_v = std::exp(x[0]);
    h.theta_v = std::exp(x[1]);
    h.xi = std::exp(x[2]);
    h.rho = std::tanh(x[3]);
    h.v0 = std::exp(x[4]);
    h.drift_h = 0.0;
    inside = h.kappa_v >= HestonBox::kappa_lo && h.kappa_v <= HestonBox::kappa_hi && h.theta_v >= HestonBox::var_lo &&
             h.theta_v <= HestonBox::var_hi && h.xi >= HestonBox::xi_lo && h.xi <= HestonBox::xi_hi &&
             std::abs(h.rho) <= HestonBox::rho_hi && h.v0 >= HestonBox::var_lo && h.v0 <= HestonBox::var_hi;
    return h;
}

FitResult calibrate_heston(const CalibrationProblem& problem)
{
    const Objective f = sse_objective(problem, [](const Eigen::VectorXd& x, bool& ok) -> ModelParams {
        return heston_point(x, ok);
    });
    const double v = atm_variance(problem);
    NelderMeadOptions opts;
    opts.max_iter = 1500;
    opts.x_tol = 1e-4;
    opts.f_tol = 1e-10;
    opts.initial_step = (Eigen::VectorXd(5) << 0.5, 0.3, 0.5, 0.3, 0.3).finished();
    auto start = [&](double kappa, double xi, double rho) {
        return (Eigen::VectorXd(5) << std::log(kappa), std::log(v), std::log(xi), std::atanh(rho), std::log(v))
            .finished();
    };
    NelderMeadResult r = best_of(f, {start(2.0, 0.5, -0.5), start(5.0, 1.0, 0.0)}, opts);
    // One restart from the best point refreshes a collapsed simplex.
    NelderMeadResult polish = nelder_mead(f, r.x, opts);
    polish.iterations += r.iterations;
    if (polish.f <= r.f) {
        r = std::move(polish);
    }
    bool inside = true;
    FitResult out = finish(ModelKind::Heston, heston_point(r.x, inside), r, "kappa_v, theta_v, xi, rho, v0");
    out.v_last = out.heston().v0;
    return out;
}

}  // namespace

FitResult calibrate_implied(const CalibrationProblem& problem)
{
    problem.validate();
    switch (problem.model) {
    case ModelKind::Bs:
        return calibrate_bs(problem);
    case ModelKind::Piv:
        return calibrate_piv_kappa(problem);
    case ModelKind::Heston:
        return calibrate_heston(problem);
    }
    throw std::invalid_argument("unknown model");
}

FitResult calibrate_piv_full(const CalibrationProblem& problem)
{
    problem.validate();
    auto map = [](const Eigen::VectorXd& x) { return PivParams{std::exp(x[0]), std::exp(x[1]), x[2], std::exp(x[3])}; };
    const Objective f = sse_objective(problem, [map](const Eigen::VectorXd& x, bool& ok) -> ModelParams {
        ok = x.head(2).cwiseAbs().maxCoeff() < 20.0 && std::abs(x[3]) < 10.0;
        return map(x);
    });
    NelderMeadOptions opts;
    opts.max_iter = 4000;
    opts.x_tol = 1e-7;
    opts.f_tol = 1e-12;
    opts.initial_step = (Eigen::VectorXd(4) << 0.5, 0.5, 0.05, 0.2).finished();
    const std::vector<Eigen::VectorXd> starts{(Eigen::VectorXd(4) << std::log(0.5), std::log(0.01), 0.0, 0.0).finished(),
                                              (Eigen::VectorXd(4) << std::log(5.0), std::log(0.01), 0.0, 0.0).finished()};
    const NelderMeadResult r = best_of(f, starts, opts);
    return finish(ModelKind::Piv, map(r.x), r, "theta, a, mu, sigma");
}

double implied_vol_bs(const ContractSpec& c, double market_price)
{
    c.validate();
    const double lower = std::max(c.s0 - c.strike * std::exp(-c.rate * c.ttm), 0.0);
    if (!std::isfinite(market_price) || market_price >= c.s0 || market_price < lower) {
        throw std::domain_error("price " + std::to_string(market_price) + " violates the arbitrage bounds [" +
                                std::to_string(lower) + ", " + std::to_string(c.s0) + ")");
    }
    double lo = 1e-6;
    double hi = 5.0;
    if (price_call_bs(hi, c).price < market_price) {
        throw std::domain_error("implied volatility above 5");
    }
    const double tol = 1e-10 * c.s0;
    while (hi - lo > 1e-14) {
        const double mid = 0.5 * (lo + hi);
        const double p = price_call_bs(mid, c).price;
        if (std::abs(p - market_price) < tol) {
            return mid;
        }
        (p < market_price ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace piv
