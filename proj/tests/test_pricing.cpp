#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "piv/errors.hpp"
#include "piv/pricing.hpp"

using namespace piv;

namespace {

ContractSpec contract(double s0, double k, double r, double t)
{
    ContractSpec c;
    c.s0 = s0;
    c.strike = k;
    c.rate = r;
    c.ttm = t;
    return c;
}

}  // namespace

TEST_CASE("normal cdf")
{
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021048517795).epsilon(1e-14));
    CHECK(normal_cdf(-3.0) == doctest::Approx(0.0013498980316301).epsilon(1e-12));
}

TEST_CASE("Black-Scholes reference prices")
{
    // scipy.stats.norm closed form
    CHECK(price_call_bs(0.2, contract(100, 100, 0.05, 1.0)).price == doctest::Approx(10.450583572185565).epsilon(1e-12));
    CHECK(price_call_bs(0.3, contract(100, 110, 0.03, 0.5)).price == doctest::Approx(5.239505678484882).epsilon(1e-12));
    CHECK(price_call_bs(0.15, contract(50, 40, 0.0, 0.25)).price == doctest::Approx(10.00139767584681).epsilon(1e-12));
}

TEST_CASE("Black-Scholes limits and input checks")
{
    const ContractSpec c = contract(100, 90, 0.05, 0.5);
    CHECK(price_call_bs(0.0, c).price == doctest::Approx(100.0 - 90.0 * std::exp(-0.025)));
    CHECK(price_call_bs(0.0, contract(100, 120, 0.05, 0.5)).price == 0.0);
    CHECK(price_call_bs(0.2, c).method == PriceMethod::ClosedForm);
    CHECK_THROWS_AS(price_call_bs(-0.1, c), std::invalid_argument);
    CHECK_THROWS_AS(price_call_bs(0.2, contract(-1, 90, 0.05, 0.5)), std::invalid_argument);
    CHECK_THROWS_AS(price_call_bs(0.2, contract(100, 90, 0.05, 0.0)), std::invalid_argument);
}

TEST_CASE("Gauss-Legendre rule")
{
    const GaussLegendre& g = gauss_legendre(4);
    CHECK(g.weights.sum() == doctest::Approx(2.0).epsilon(1e-14));
    const double m6 = (g.weights.array() * g.nodes.array().pow(6)).sum();
    CHECK(m6 == doctest::Approx(2.0 / 7.0).epsilon(1e-13));
    CHECK(&gauss_legendre(4) == &g);
    CHECK_THROWS_AS(gauss_legendre(1), std::invalid_argument);
}

TEST_CASE("Heston reference prices")
{
    // scipy quad of the Gil-Pelaez integrals
    HestonParams h{2.0, 0.04, 0.3, -0.7, 0.04, 0.0};
    CHECK(price_call_heston(h, contract(100, 100, 0.05, 0.5)).price == doctest::Approx(6.837200378639629).epsilon(1e-9));
    h = HestonParams{1.5, 0.05, 0.5, -0.5, 0.06, 0.0};
    CHECK(price_call_heston(h, contract(100, 90, 0.03, 1.0)).price == doctest::Approx(16.62016859961794).epsilon(1e-9));
    h = HestonParams{3.0, 0.09, 0.8, 0.3, 0.04, 0.0};
    CHECK(price_call_heston(h, contract(100, 110, 0.0, 0.25)).price == doctest::Approx(1.612110291830831).epsilon(1e-8));
}

TEST_CASE("Heston batch equals single-strike pricing")
{
    const HestonParams h{2.0, 0.04, 0.3, -0.7, 0.04, 0.0};
    const std::vector<double> strikes{80, 95, 100, 105, 130};
    HestonQuadrature quad;
    quad.check_convergence = false;
    const auto batch = price_calls_heston(h, 100, 0.02, 0.75, strikes, quad);
    REQUIRE(batch.size() == strikes.size());
    for (std::size_t i = 0; i < strikes.size(); ++i) {
        CHECK(batch[i] == doctest::Approx(price_call_heston(h, contract(100, strikes[i], 0.02, 0.75), quad).price)
                              .epsilon(1e-13));
    }
}

TEST_CASE("Heston with zero vol of vol is Black-Scholes")
{
    const HestonParams h{1.3, 0.09, 0.0, -0.4, 0.09, 0.0};
    for (double k : {70.0, 100.0, 140.0}) {
        const ContractSpec c = contract(100, k, 0.04, 0.8);
        CHECK(price_call_heston(h, c).price == doctest::Approx(price_call_bs(0.3, c).price).epsilon(1e-9));
    }
}

TEST_CASE("PIV PDE basic properties")
{
    const PivParams p = PivParams::from_kappa(0.04);
    const ContractSpec c = contract(100, 100, 0.05, 0.5);
    const PriceResult r = price_call_piv_pde(p, c);
    CHECK(r.method == PriceMethod::Pde);
    CHECK(r.price > 100.0 - 100.0 * std::exp(-0.025));
    CHECK(r.price < 100.0);
    CHECK(r.diagnostics.residual < 1e-6 * 100);

    PdeGrid fine;
    fine.n_space = 800;
    fine.n_time = 400;
    CHECK(price_call_piv_pde(p, c, fine).price == doctest::Approx(r.price).epsilon(2e-4));

    const PdeSolution sol = solve_piv_pde(0.04, c, PdeGrid{});
    for (Eigen::Index i = 0; i < sol.y.size(); ++i) {
        CHECK(sol.terminal[i] == doctest::Approx(std::max(100.0 * std::exp(sol.y[i]) - 100.0, 0.0)));
    }
    CHECK_THROWS_AS(price_call_piv_pde(p, c, PdeGrid{10, 10, 0.0, true}), std::invalid_argument);
    CHECK_THROWS_AS(price_call_piv_pde(p, contract(100, 0, 0.05, 0.5)), std::invalid_argument);
}

TEST_CASE("PIV PDE is monotone in strike and kappa")
{
    double prev = 1e9;
    for (double k : {80.0, 90.0, 100.0, 110.0, 120.0}) {
        const double v = price_call_piv_pde(PivParams::from_kappa(0.03), contract(100, k, 0.05, 0.25)).price;
        CHECK(v < prev);
        prev = v;
    }
    const ContractSpec c = contract(100, 105, 0.05, 0.25);
    CHECK(price_call_piv_pde(PivParams::from_kappa(0.01), c).price <
          price_call_piv_pde(PivParams::from_kappa(0.08), c).price);
}

TEST_CASE("PIV prices depend on parameters through kappa only")
{
    const ContractSpec c = contract(100, 95, 0.03, 0.3);
    const PivParams p{4.0, 0.005, 0.3, 1.0};
    const PivParams q{1.0, 0.08, -0.2, 0.5};
    REQUIRE(p.kappa() == doctest::Approx(q.kappa()).epsilon(1e-15));
    CHECK(price_call_piv_pde(p, c).price == doctest::Approx(price_call_piv_pde(q, c).price).epsilon(1e-12));
    SimConfig cfg;
    cfg.n_paths = 2000;
    cfg.seed = 4;
    CHECK(price_call_piv_mc(p, c, cfg).price == doctest::Approx(price_call_piv_mc(q, c, cfg).price).epsilon(1e-12));
}

TEST_CASE("PIV Monte Carlo agrees with the PDE")
{
    const PivParams p = PivParams::from_kappa(0.04);
    const ContractSpec c = contract(100, 105, 0.05, 0.5);
    SimConfig cfg;
    cfg.n_paths = 40000;
    cfg.antithetic = true;
    cfg.seed = 99;
    const PriceResult mc = price_call_piv_mc(p, c, cfg);
    const PriceResult pde = price_call_piv_pde(p, c);
    CHECK(mc.method == PriceMethod::MonteCarlo);
    CHECK(mc.std_error > 0.0);
    CHECK(std::abs(mc.price - pde.price) < 3.5 * mc.std_error);

    cfg.n_paths = 41;
    CHECK_THROWS_AS(price_call_piv_mc(p, c, cfg), std::invalid_argument);
}

TEST_CASE("Monte Carlo strike batch shares paths")
{
    const PivParams p = PivParams::from_kappa(0.02);
    SimConfig cfg;
    cfg.n_paths = 5000;
    cfg.seed = 6;
    std::vector<ContractSpec> cs{contract(100, 90, 0.05, 0.2), contract(100, 100, 0.05, 0.2),
                                 contract(100, 110, 0.05, 0.2)};
    const auto batch = price_calls_piv_mc(p, cs, cfg);
    REQUIRE(batch.size() == 3);
    cfg.horizon_t = 0.2;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        CHECK(batch[i].price == doctest::Approx(price_call_piv_mc(p, cs[i], cfg).price).epsilon(1e-13));
    }
    cs[1].ttm = 0.3;
    CHECK_THROWS_AS(price_calls_piv_mc(p, cs, cfg), std::invalid_argument);
    CHECK_THROWS_AS(price_calls_piv_mc(p, {}, cfg), std::invalid_argument);
}

TEST_CASE("discounted terminal mean is close to spot")
{
    SimConfig cfg;
    cfg.n_paths = 20000;
    cfg.seed = 10;
    const PriceResult m = discounted_terminal_mean(PivParams::from_kappa(0.08), contract(100, 100, 0.05, 0.5), cfg);
    CHECK(std::abs(m.price - 100.0) < 3.0 * m.std_error);
}

TEST_CASE("short-maturity GBM limit")
{
    const double kappa = 0.02;
    const ContractSpec c = contract(100, 100, 0.05, 0.1);
    const double bs = price_call_bs(std::sqrt(2.0 * kappa), c).price;
    CHECK(price_call_piv_pde(PivParams::from_kappa(kappa), c).price == doctest::Approx(bs).epsilon(0.01));
}

TEST_CASE("Black-Scholes deterministic limits")
{
    CHECK(price_call_bs(0.0, contract(100, 90, 0.05, 1.0)).price == doctest::Approx(14.389351794935735).epsilon(1e-12));
    CHECK(price_call_bs(0.2, contract(100, 90, 0.05, 1e-12)).price == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(price_call_bs(0.2, contract(100, 110, 0.05, 1e-12)).price < 1e-12);
}

TEST_CASE("Heston deep in the money")
{
    const HestonParams h{2.0, 0.04, 0.3, -0.7, 0.04, 0.0};
    const ContractSpec c = contract(100, 1e-4, 0.03, 0.5);
    const double bound = 100.0 - 1e-4 * std::exp(-0.015);
    CHECK(std::abs(price_call_heston(h, c).price - bound) < 1e-4);
}

TEST_CASE("Heston characteristic function agrees with simulation")
{
    const HestonParams h{2.0, 0.04, 0.3, -0.7, 0.04, 0.0};
    const ContractSpec c = contract(100, 100, 0.03, 0.5);
    SimConfig cfg;
    cfg.n_paths = 400000;
    cfg.horizon_t = 0.5;
    cfg.n_steps = 250;
    cfg.seed = 404;
    const auto b = simulate_heston_paths(h, 100.0, 0.03, cfg);
    const Eigen::ArrayXd pay = std::exp(-0.015) * (b.terminal.array() - 100.0).max(0.0);
    const double mean = pay.mean();
    const double se = std::sqrt((pay - mean).square().sum() / (pay.size() - 1.0) / pay.size());
    CHECK(std::abs(mean - price_call_heston(h, c).price) < 3.0 * se);
}

TEST_CASE("PIV PDE converges at second order")
{
    const PivParams p = PivParams::from_kappa(0.04);
    const ContractSpec c = contract(100, 100, 0.05, 0.5);
    double v[4];
    std::size_t n = 100;
    for (double& x : v) {
        x = price_call_piv_pde(p, c, PdeGrid{n, n, 0.0, false}).price;
        n *= 2;
    }
    for (int i = 0; i < 2; ++i) {
        const double ratio = (v[i] - v[i + 1]) / (v[i + 1] - v[i + 2]);
        CAPTURE(i);
        CHECK(ratio > 2.5);
        CHECK(ratio < 6.0);
    }
}

TEST_CASE("PIV PDE prices are convex in strike and within arbitrage bounds")
{
    const PivParams p = PivParams::from_kappa(0.05);
    const double h = 2.5;
    std::vector<double> v;
    for (int i = 0; i <= 24; ++i) {
        const double k = 70.0 + h * i;
        const ContractSpec c = contract(100, k, 0.04, 0.4);
        v.push_back(price_call_piv_pde(p, c).price);
        CHECK(v.back() >= std::max(100.0 - k * std::exp(-0.016), 0.0) - 1e-8);
        CHECK(v.back() <= 100.0);
    }
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        CHECK(v[i - 1] - 2.0 * v[i] + v[i + 1] >= -1e-8);
    }
}

TEST_CASE("PIV prices ignore mu")
{
    const ContractSpec c = contract(100, 102, 0.05, 0.25);
    const PivParams p{1.0, 0.02, 0.0, 1.0};
    const PivParams q{1.0, 0.02, 0.7, 1.0};
    CHECK(price_call_piv_pde(p, c).price == price_call_piv_pde(q, c).price);
    SimConfig cfg;
    cfg.n_paths = 4000;
    cfg.seed = 12;
    CHECK(price_call_piv_mc(p, c, cfg).price == price_call_piv_mc(q, c, cfg).price);
}

TEST_CASE("PIV Monte Carlo degenerate strikes")
{
    const PivParams p = PivParams::from_kappa(0.04);
    SimConfig cfg;
    cfg.n_paths = 200000;
    cfg.seed = 31;
    const PriceResult zero = price_call_piv_mc(p, contract(100, 0, 0.05, 0.25), cfg);
    CHECK(std::abs(zero.price - 100.0) < 3.0 * zero.std_error);
    const PriceResult far = price_call_piv_mc(p, contract(100, 10000, 0.05, 0.05), cfg);
    CHECK(far.price <= 3.0 * far.std_error);
}

TEST_CASE("PIV Monte Carlo prices fall with strike under common numbers")
{
    SimConfig cfg;
    cfg.n_paths = 20000;
    cfg.seed = 8;
    std::vector<ContractSpec> cs;
    for (int i = 0; i < 15; ++i) {
        cs.push_back(contract(100, 85.0 + 2.0 * i, 0.05, 0.3));
    }
    const auto v = price_calls_piv_mc(PivParams::from_kappa(0.03), cs, cfg);
    for (std::size_t i = 1; i < v.size(); ++i) {
        CHECK(v[i].price <= v[i - 1].price);
    }
}

TEST_CASE("PIV short-maturity limit against Black-Scholes")
{
    const ContractSpec c = contract(100, 100, 0.05, 0.1);
    SimConfig cfg;
    cfg.n_paths = 200000;
    cfg.seed = 3;
    const PivParams p{1.0, 0.02, 0.25, 1.0};
    CHECK(price_call_piv_mc(p, c, cfg).price == doctest::Approx(price_call_bs(0.2, c).price).epsilon(0.01));
    const double kappa = 0.005;
    CHECK(price_call_piv_pde(PivParams::from_kappa(kappa), c).price ==
          doctest::Approx(price_call_bs(std::sqrt(2.0 * kappa), c).price).epsilon(0.005));
}

TEST_CASE("PIV PDE against 200k Monte Carlo paths")
{
    const PivParams p{2.0, 0.5, 0.0, 0.1};
    const ContractSpec c = contract(100, 100, 0.05, 0.5);
    SimConfig cfg;
    cfg.n_paths = 200000;
    cfg.seed = 2718;
    const PriceResult mc = price_call_piv_mc(p, c, cfg);
    CHECK(std::abs(mc.price - price_call_piv_pde(p, c).price) < 3.0 * mc.std_error);
}
