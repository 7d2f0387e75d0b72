// piv: command-line front end for simulation, pricing, estimation,
// calibration, backtests and synthetic data.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "piv/backtest.hpp"
#include "piv/calibration.hpp"
#include "piv/errors.hpp"
#include "piv/estimation.hpp"
#include "piv/format.hpp"
#include "piv/market_data.hpp"
#include "piv/pricing.hpp"
#include "piv/sde_engine.hpp"

namespace {

using namespace piv;
namespace fs = std::filesystem;

// A validation failure tied to one flag; exit code 2.
struct FlagError : std::runtime_error {
    FlagError(const std::string& flag, const std::string& what) : std::runtime_error(flag + ": " + what) {}
};

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct ModelFlags {
    std::string model = "piv";
    double kappa = 0.0;  // PIV: overrides (theta, a, mu, sigma) when set
    double theta = 1.0;
    double a = 0.5;
    double mu = 0.0;
    double sigma = 1.0;
    double sigma_bs = 0.2;
    double drift = 0.0;
    double kappa_v = 2.0;
    double theta_v = 0.04;
    double xi = 0.3;
    double rho = -0.7;
    double v0 = 0.04;

    void add(CLI::App* app)
    {
        app->add_option("--model", model, "piv, bs or heston")->capture_default_str();
        app->add_option("--kappa", kappa, "PIV pricing parameter theta*sigma^2*a (sets theta=kappa, a=1, mu=0, sigma=1)");
        app->add_option("--theta", theta, "PIV mean reversion")->capture_default_str();
        app->add_option("--a", a, "PIV shape coefficient")->capture_default_str();
        app->add_option("--mu", mu, "PIV invariant mean")->capture_default_str();
        app->add_option("--sigma", sigma, "PIV volatility scale")->capture_default_str();
        app->add_option("--sigma-bs", sigma_bs, "Black-Scholes volatility")->capture_default_str();
        app->add_option("--drift", drift, "real-world drift (BS and Heston paths)")->capture_default_str();
        app->add_option("--kappa-v", kappa_v, "Heston variance mean reversion")->capture_default_str();
        app->add_option("--theta-v", theta_v, "Heston long-run variance")->capture_default_str();
        app->add_option("--xi", xi, "Heston vol of vol")->capture_default_str();
        app->add_option("--rho", rho, "Heston correlation")->capture_default_str();
        app->add_option("--v0", v0, "Heston initial variance")->capture_default_str();
    }

    ModelKind kind() const
    {
        try {
            return parse_model_kind(model);
        } catch (const std::invalid_argument& e) {
            throw FlagError("--model", e.what());
        }
    }

    ModelParams params() const
    {
        try {
            switch (kind()) {
            case ModelKind::Piv: {
                const PivParams p = kappa > 0.0 ? PivParams::from_kappa(kappa) : PivParams{theta, a, mu, sigma};
                p.validate();
                return p;
            }
            case ModelKind::Bs: {
                const BsParams p{sigma_bs, drift};
                p.validate();
                return p;
            }
            case ModelKind::Heston: {
                const HestonParams p{kappa_v, theta_v, xi, rho, v0, drift};
                p.validate();
                return p;
            }
            }
        } catch (const std::invalid_argument& e) {
            throw FlagError("model parameters", e.what());
        }
        throw FlagError("--model", "unsupported");
    }
};

nlohmann::json params_json(const ModelParams& params)
{
    nlohmann::json j;
    if (const auto* p = std::get_if<PivParams>(&params)) {
        j = {{"theta", p->theta}, {"a", p->a}, {"mu", p->mu}, {"sigma", p->sigma}, {"c", p->c()}, {"kappa", p->kappa()}};
    } else if (const auto* b = std::get_if<BsParams>(&params)) {
        j = {{"sigma_bs", b->sigma_bs}, {"drift_bs", b->drift_bs}};
    } else {
        const auto& h = std::get<HestonParams>(params);
        j = {{"kappa_v", h.kappa_v}, {"theta_v", h.theta_v}, {"xi", h.xi},
             {"rho", h.rho},         {"v0", h.v0},           {"drift_h", h.drift_h}};
    }
    return j;
}

nlohmann::json fit_json(const FitResult& f)
{
    nlohmann::json j;
    j["model"] = to_string(f.model);
    j["params"] = params_json(f.params);
    j["objective"] = f.objective;
    j["converged"] = f.converged;
    j["iterations"] = f.iterations;
    j["simplex_spread"] = f.simplex_spread;
    j["boundary_hit"] = f.boundary_hit;
    if (f.model == ModelKind::Heston) {
        j["v_last"] = f.v_last;
    }
    j["note"] = f.note;
    return j;
}

fs::path prepare_out(const std::string& out)
{
    if (out.empty()) {
        throw FlagError("--out", "an output directory is required");
    }
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        throw FlagError("--out", "cannot create '" + out + "': " + ec.message());
    }
    return fs::path(out);
}

void write_json(const fs::path& p, const nlohmann::json& j)
{
    std::ofstream f(p);
    if (!f) {
        throw DataError("cannot write '" + p.string() + "'");
    }
    f << j.dump(2) << '\n';
}

ReturnSeries read_returns(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw FlagError("--returns", "cannot open '" + path + "'");
    }
    std::string line;
    std::vector<double> values;
    std::size_t row = 0;
    std::size_t col = 0;
    bool header_done = false;
    while (std::getline(in, line)) {
        ++row;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        for (std::string f; std::getline(ss, f, ',');) {
            fields.push_back(f);
        }
        if (!header_done) {
            header_done = true;
            bool numeric = true;
            try {
                std::size_t used = 0;
                std::stod(fields.back(), &used);
            } catch (const std::exception&) {
                numeric = false;
            }
            if (!numeric) {
                col = fields.size() - 1;
                for (std::size_t i = 0; i < fields.size(); ++i) {
                    if (fields[i].find("log_return") != std::string::npos) {
                        col = i;
                    }
                }
                continue;
            }
            col = fields.size() - 1;
        }
        try {
            values.push_back(std::stod(fields.at(col)));
        } catch (const std::exception&) {
            throw DataError(path + ": row " + std::to_string(row) + ": cannot parse log return");
        }
    }
    ReturnSeries s;
    s.values = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    s.instrument = fs::path(path).stem().string();
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw FlagError("--returns", e.what());
    }
    return s;
}

std::vector<OptionQuote> read_chain(const std::string& path)
{
    if (!fs::exists(path)) {
        throw FlagError("--chain", "no such file '" + path + "'");
    }
    ChainLoad load = load_option_chain(path);
    std::cerr << "chain: " << load.quotes.size() << " quotes accepted, " << load.rejected << " rejected\n";
    for (const auto& d : load.diagnostics) {
        std::cerr << "  " << d << '\n';
    }
    return load.quotes;
}

RateSeries read_rates(const std::string& path)
{
    if (!fs::exists(path)) {
        throw FlagError("--rates", "no such file '" + path + "'");
    }
    RateSeries r = load_rate_series(path);
    for (const auto& w : r.warnings()) {
        std::cerr << "warning: " << w << '\n';
    }
    return r;
}

std::vector<double> parse_list(const std::string& flag, const std::string& text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string f; std::getline(ss, f, ',');) {
        try {
            out.push_back(std::stod(f));
        } catch (const std::exception&) {
            throw FlagError(flag, "cannot parse '" + f + "'");
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Pearson-diffusion option pricing, estimation and backtesting"};
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML/INI configuration file");

    std::uint64_t seed = 42;
    int threads = 0;
    std::string out_dir;
    bool verbose = false;
    app.add_option("--seed", seed, "random seed")->capture_default_str();
    app.add_option("--threads", threads, "maximum worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
    app.add_option("--out", out_dir, "output directory");
    app.add_flag("-v,--verbose", verbose, "extra diagnostics on stderr");

    // simulate
    auto* sim = app.add_subcommand("simulate", "simulate PIV, BS or Heston paths");
    ModelFlags sim_model;
    sim_model.add(sim);
    std::string measure = "Q";
    double sim_s0 = 100.0;
    double sim_rate = 0.05;
    double horizon = 1.0;
    std::size_t sim_paths = 10000;
    std::size_t sim_steps = 0;
    bool antithetic = false;
    bool dump_paths = false;
    sim->add_option("--measure", measure, "P or Q (PIV only; BS and Heston use Q with --rate)")->capture_default_str();
    sim->add_option("--s0", sim_s0, "initial price")->capture_default_str();
    sim->add_option("--rate", sim_rate, "risk-free rate")->capture_default_str();
    sim->add_option("--horizon", horizon, "horizon in years")->capture_default_str();
    sim->add_option("--paths", sim_paths, "number of paths")->capture_default_str();
    sim->add_option("--steps", sim_steps, "time steps (0 = max(16, 252 T))")->capture_default_str();
    sim->add_flag("--antithetic", antithetic, "antithetic pairs");
    sim->add_flag("--dump-paths", dump_paths, "write every path to paths.csv under --out");

    // price
    auto* price = app.add_subcommand("price", "price a European call");
    ModelFlags price_model;
    price_model.add(price);
    ContractSpec contract;
    std::size_t price_paths = 200000;
    std::size_t price_steps = 0;
    std::string method = "mc";
    price->add_option("--s0", contract.s0, "spot price")->capture_default_str();
    price->add_option("--strike", contract.strike, "strike")->capture_default_str();
    price->add_option("--ttm", contract.ttm, "time to maturity in years")->capture_default_str();
    price->add_option("--rate", contract.rate, "risk-free rate")->capture_default_str();
    price->add_option("--paths", price_paths, "Monte Carlo paths (PIV)")->capture_default_str();
    price->add_option("--steps", price_steps, "Monte Carlo steps (0 = max(16, 252 T))")->capture_default_str();
    price->add_option("--method", method, "PIV pricer: mc or pde")->capture_default_str();

    // estimate
    auto* est = app.add_subcommand("estimate", "maximum-likelihood fit to a daily log-return series");
    std::string est_model = "piv";
    std::string returns_path;
    std::size_t window_rv = 21;
    est->add_option("--model", est_model, "piv, bs or heston")->capture_default_str();
    est->add_option("--returns", returns_path, "CSV of daily log returns (column log_return or last column)")
        ->required();
    est->add_option("--window-rv", window_rv, "Heston realized-variance block length")->capture_default_str();

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "least-squares fit to one trade date of an option chain");
    std::string cal_model = "piv";
    std::string cal_chain;
    std::string cal_rates;
    std::string cal_date;
    std::string cal_pricer = "mc";
    std::size_t cal_paths = 200000;
    bool cal_no_filter = false;
    cal->add_option("--model", cal_model, "piv, bs or heston")->capture_default_str();
    cal->add_option("--chain", cal_chain, "option chain CSV")->required();
    cal->add_option("--rates", cal_rates, "rate CSV")->required();
    cal->add_option("--date", cal_date, "trade date YYYY-MM-DD (default: last date)");
    cal->add_option("--pricer", cal_pricer, "PIV pricer: mc or pde")->capture_default_str();
    cal->add_option("--paths", cal_paths, "Monte Carlo paths (PIV)")->capture_default_str();
    cal->add_flag("--no-filter", cal_no_filter, "skip the turnover filter");

    // backtest
    auto* bt = app.add_subcommand("backtest", "historical or implied out-of-sample backtest");
    std::string mode = "historical";
    std::string bt_chain;
    std::string bt_rates;
    std::size_t window = 90;
    std::string models = "piv,bs,heston";
    std::size_t bt_paths = 200000;
    std::string bt_pricer = "mc";
    bool bt_no_filter = false;
    std::size_t bt_window_rv = 5;
    bt->add_option("--mode", mode, "historical or implied")->capture_default_str();
    bt->add_option("--chain", bt_chain, "option chain CSV")->required();
    bt->add_option("--rates", bt_rates, "rate CSV")->required();
    bt->add_option("--window", window, "rolling window in trading days (historical)")->capture_default_str();
    bt->add_option("--models", models, "comma-separated models")->capture_default_str();
    bt->add_option("--paths", bt_paths, "Monte Carlo paths for PIV")->capture_default_str();
    bt->add_option("--pricer", bt_pricer, "PIV pricer: mc or pde")->capture_default_str();
    bt->add_flag("--no-filter", bt_no_filter, "skip the turnover filter");
    bt->add_option("--window-rv", bt_window_rv, "Heston realized-variance block length")->capture_default_str();

    // synth-data
    auto* syn = app.add_subcommand("synth-data", "generate a synthetic option chain and rate file");
    ModelFlags syn_model;
    syn_model.add(syn);
    SyntheticChainSpec spec;
    std::string start = "2024-01-01";
    std::string strikes = "0.9,0.94,0.97,1,1.03,1.06,1.1";
    std::string ttms = "7,14,30,60,90";
    syn->add_option("--dates", spec.n_dates, "number of trading dates")->capture_default_str();
    syn->add_option("--start", start, "first calendar date")->capture_default_str();
    syn->add_option("--s0", spec.s0, "initial underlying price")->capture_default_str();
    syn->add_option("--rate", spec.rate, "constant risk-free rate")->capture_default_str();
    syn->add_option("--noise", spec.noise, "multiplicative price noise (sd of log)")->capture_default_str();
    syn->add_option("--strikes", strikes, "strike multipliers of the spot")->capture_default_str();
    syn->add_option("--ttms", ttms, "maturities in calendar days")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string digest_src = app.config_to_str(true, false);
    char digest[17];
    std::snprintf(digest, sizeof digest, "%016llx", static_cast<unsigned long long>(fnv1a(digest_src)));
    std::cerr << "seed " << seed << " config " << digest << '\n';
#ifdef _OPENMP
    if (threads > 0) {
        omp_set_num_threads(threads);
    }
#endif

    try {
        if (*sim) {
            const ModelKind kind = sim_model.kind();
            const ModelParams params = sim_model.params();
            SimConfig cfg;
            cfg.n_paths = sim_paths;
            cfg.n_steps = sim_steps;
            cfg.horizon_t = horizon;
            cfg.seed = seed;
            cfg.antithetic = antithetic;
            cfg.keep_paths = dump_paths;
            try {
                cfg.validate();
            } catch (const std::invalid_argument& e) {
                throw FlagError("--paths/--steps/--horizon", e.what());
            }
            if (measure != "P" && measure != "Q") {
                throw FlagError("--measure", "expected P or Q");
            }
            PathBatch batch;
            switch (kind) {
            case ModelKind::Piv:
                batch = measure == "P" ? simulate_r_paths_p(std::get<PivParams>(params), cfg)
                                       : simulate_s_paths_q(std::get<PivParams>(params), sim_s0, sim_rate, cfg);
                break;
            case ModelKind::Bs:
                batch = simulate_gbm_paths(std::get<BsParams>(params), sim_s0, sim_rate, cfg);
                break;
            case ModelKind::Heston:
                batch = simulate_heston_paths(std::get<HestonParams>(params), sim_s0, sim_rate, cfg);
                break;
            }
            const double mean = batch.terminal.mean();
            const double sd = std::sqrt((batch.terminal.array() - mean).square().sum() /
                                        static_cast<double>(std::max<Eigen::Index>(1, batch.terminal.size() - 1)));
            std::cout << "terminal_mean " << fmt_double(mean) << "\nterminal_sd " << fmt_double(sd) << "\nsteps "
                      << batch.n_steps << '\n';
            if (dump_paths) {
                const fs::path dir = prepare_out(out_dir);
                std::ofstream f(dir / "paths.csv");
                write_paths_csv(batch, f);
            }
            if (!out_dir.empty()) {
                const fs::path dir = prepare_out(out_dir);
                std::ofstream f(dir / "terminal.csv");
                f << "path_id,value\n";
                for (Eigen::Index i = 0; i < batch.terminal.size(); ++i) {
                    f << i << ',' << fmt_double(batch.terminal[i]) << '\n';
                }
            }
        } else if (*price) {
            const ModelKind kind = price_model.kind();
            const ModelParams params = price_model.params();
            try {
                contract.validate();
            } catch (const std::invalid_argument& e) {
                throw FlagError("--s0/--strike/--ttm/--rate", e.what());
            }
            PriceResult r;
            switch (kind) {
            case ModelKind::Piv:
                if (method == "pde") {
                    r = price_call_piv_pde(std::get<PivParams>(params), contract);
                } else if (method == "mc") {
                    SimConfig cfg;
                    cfg.n_paths = price_paths;
                    cfg.n_steps = price_steps;
                    cfg.seed = seed;
                    cfg.horizon_t = contract.ttm;
                    r = price_call_piv_mc(std::get<PivParams>(params), contract, cfg);
                } else {
                    throw FlagError("--method", "expected mc or pde");
                }
                break;
            case ModelKind::Bs:
                r = price_call_bs(std::get<BsParams>(params).sigma_bs, contract);
                break;
            case ModelKind::Heston:
                r = price_call_heston(std::get<HestonParams>(params), contract);
                break;
            }
            std::cout << "price " << fmt_double(r.price) << "\nstd_error " << fmt_double(r.std_error) << "\nmethod "
                      << to_string(r.method) << '\n';
        } else if (*est) {
            ModelKind kind;
            try {
                kind = parse_model_kind(est_model);
            } catch (const std::invalid_argument& e) {
                throw FlagError("--model", e.what());
            }
            const ReturnSeries series = read_returns(returns_path);
            FitResult fit;
            switch (kind) {
            case ModelKind::Piv:
                fit = mle_piv(series);
                break;
            case ModelKind::Bs:
                fit = mle_bs(series);
                break;
            case ModelKind::Heston:
                try {
                    fit = estimate_heston(series, window_rv);
                } catch (const std::invalid_argument& e) {
                    throw FlagError("--window-rv", e.what());
                }
                break;
            }
            const nlohmann::json j = fit_json(fit);
            std::cout << j.dump(2) << '\n';
            if (!out_dir.empty()) {
                write_json(prepare_out(out_dir) / "fit.json", j);
            }
        } else if (*cal) {
            CalibrationProblem problem;
            try {
                problem.model = parse_model_kind(cal_model);
            } catch (const std::invalid_argument& e) {
                throw FlagError("--model", e.what());
            }
            try {
                problem.pricing.piv_pricer = parse_piv_pricer(cal_pricer);
            } catch (const std::invalid_argument& e) {
                throw FlagError("--pricer", e.what());
            }
            problem.pricing.n_paths = cal_paths;
            problem.pricing.seed = seed;
            const auto chain = read_chain(cal_chain);
            const RateSeries rates = read_rates(cal_rates);
            if (chain.empty()) {
                throw DataError("option chain has no valid quotes");
            }
            Date date = chain.front().trade_date;
            for (const auto& q : chain) {
                date = std::max(date, q.trade_date);
            }
            if (!cal_date.empty()) {
                try {
                    date = parse_date(cal_date);
                } catch (const DataError& e) {
                    throw FlagError("--date", e.what());
                }
            }
            for (const auto& q : chain) {
                if (q.trade_date == date) {
                    problem.quotes.push_back(q);
                }
            }
            if (problem.quotes.empty()) {
                throw FlagError("--date", "no quotes on " + format_date(date));
            }
            if (!cal_no_filter) {
                problem.quotes = apply_liquidity_filter(problem.quotes);
            }
            problem.rate = rates.lookup(date);
            const FitResult fit = calibrate_implied(problem);
            nlohmann::json j = fit_json(fit);
            j["trade_date"] = format_date(date);
            j["quotes"] = problem.quotes.size();
            std::cout << j.dump(2) << '\n';
            if (!out_dir.empty()) {
                write_json(prepare_out(out_dir) / "calibration.json", j);
            }
        } else if (*bt) {
            BacktestOptions opt;
            opt.seed = seed;
            opt.window_days = window;
            opt.n_paths = bt_paths;
            opt.liquidity_filter = !bt_no_filter;
            opt.heston_window_rv = bt_window_rv;
            try {
                opt.piv_pricer = parse_piv_pricer(bt_pricer);
            } catch (const std::invalid_argument& e) {
                throw FlagError("--pricer", e.what());
            }
            opt.models.clear();
            std::stringstream ss(models);
            for (std::string m; std::getline(ss, m, ',');) {
                try {
                    opt.models.push_back(parse_model_kind(m));
                } catch (const std::invalid_argument& e) {
                    throw FlagError("--models", e.what());
                }
            }
            if (mode != "historical" && mode != "implied") {
                throw FlagError("--mode", "expected historical or implied");
            }
            const fs::path dir = prepare_out(out_dir);
            const auto chain = read_chain(bt_chain);
            const RateSeries rates = read_rates(bt_rates);
            BacktestReport report;
            try {
                report = mode == "historical" ? run_historical_backtest(chain, rates, opt)
                                              : run_implied_backtest(chain, rates, opt);
            } catch (const std::invalid_argument& e) {
                throw FlagError(mode == "historical" ? "--window" : "--mode", e.what());
            }
            if (verbose) {
                for (const auto& d : report.diagnostics) {
                    std::cerr << d << '\n';
                }
            }
            emit_report(report, dir);
            std::cout << "evaluation_dates " << report.evaluation_dates << "\npricing_errors " << report.errors.size()
                      << '\n';
            for (const auto& m : report.metrics) {
                const auto& all = m.moneyness.back();
                std::cout << to_string(m.model) << " ALL mae " << fmt_double(all.mae) << " mse " << fmt_double(all.mse)
                          << '\n';
            }
        } else if (*syn) {
            spec.model = syn_model.kind();
            spec.params = syn_model.params();
            try {
                spec.start_date = parse_date(start);
            } catch (const DataError& e) {
                throw FlagError("--start", e.what());
            }
            spec.strike_multipliers = parse_list("--strikes", strikes);
            spec.ttm_days.clear();
            for (double t : parse_list("--ttms", ttms)) {
                spec.ttm_days.push_back(static_cast<int>(t));
            }
            try {
                spec.validate();
            } catch (const std::invalid_argument& e) {
                throw FlagError("synth-data", e.what());
            }
            const fs::path dir = prepare_out(out_dir);
            const auto chain = generate_synthetic_chain(spec, seed);
            write_option_chain(chain, dir / "chain.csv");
            std::ofstream rf(dir / "rates.csv");
            write_rate_series(RateSeries({RatePoint{spec.start_date, spec.rate}}), rf);
            std::cout << "quotes " << chain.size() << '\n';
        }
    } catch (const FlagError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
