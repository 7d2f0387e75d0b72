#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "piv/backtest.hpp"
#include "piv/errors.hpp"

using namespace piv;

namespace {

const double kLossA[] = {0.024247, 0.590474, 0.292296, 1.091440, 0.097608, 0.755052, 0.478514, 0.723975,
                         0.635008, 0.174533, 0.082114, 0.744056, 0.751350, 0.440907, 0.396629, 0.151883,
                         0.359816, 0.691466, 0.635702, 0.982693, 0.037782, 0.592596, 0.617867, 0.377460,
                         0.571954, 0.800633, 0.759614, 0.599940, 0.366253, 0.577327};
const double kLossB[] = {0.579232, 0.091502, 0.386907, 0.775597, 0.695633, 0.901712, 0.515562, 0.790334,
                         0.745953, 0.440207, 0.807419, 0.653933, 1.196363, 0.673134, 0.746449, 0.381444,
                         1.125194, 0.466369, 0.471381, 0.669608, 0.843686, 0.270471, 0.718924, 1.570921,
                         0.465643, 0.751034, 0.029549, 0.623879, 0.787257, 0.830445};

Eigen::VectorXd vec(const double* p, int n) { return Eigen::Map<const Eigen::VectorXd>(p, n); }

OptionQuote quote(const Date& d, double s, double k, int ttm, double price)
{
    OptionQuote q;
    q.trade_date = d;
    q.ttm_days = ttm;
    q.expiry_date = add_days(d, ttm);
    q.underlying_close = s;
    q.strike = k;
    q.option_close = price;
    q.contracts_traded = 10;
    q.lot_size = 1;
    return q;
}

std::vector<std::string> lines(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::vector<std::string> out;
    std::string l;
    while (std::getline(in, l)) {
        out.push_back(l);
    }
    return out;
}

}  // namespace

TEST_CASE("Diebold-Mariano against the hand formula")
{
    // numpy: mean(d) / sqrt(var(d, ddof=0) / n), scipy norm.cdf
    const DmResult r = diebold_mariano(vec(kLossA, 30), vec(kLossB, 30), Alternative::Less);
    CHECK(std::abs(r.statistic - (-2.033763990906914)) < 1e-10);
    CHECK(std::abs(r.p_value - 0.020987698385732664) < 1e-10);
    const DmResult t = diebold_mariano(vec(kLossA, 30), vec(kLossB, 30), Alternative::TwoSided);
    CHECK(std::abs(t.p_value - 0.04197539677146533) < 1e-10);
}

TEST_CASE("Diebold-Mariano antisymmetry and degenerate input")
{
    const auto a = vec(kLossA, 30);
    const auto b = vec(kLossB, 30);
    const DmResult ab = diebold_mariano(a, b, Alternative::TwoSided);
    const DmResult ba = diebold_mariano(b, a, Alternative::TwoSided);
    CHECK(ab.statistic == -ba.statistic);
    CHECK(ab.p_value == ba.p_value);
    const DmResult lab = diebold_mariano(a, b);
    const DmResult lba = diebold_mariano(b, a);
    CHECK(lab.p_value + lba.p_value == doctest::Approx(1.0).epsilon(1e-15));

    const Eigen::VectorXd shifted = (a.array() + 0.25).matrix();
    Eigen::VectorXd same = a;
    CHECK_THROWS_AS(diebold_mariano(a, same), NumericalError);
    CHECK_THROWS_AS(diebold_mariano(shifted, (shifted.array() - 0.5).matrix()), NumericalError);
    CHECK_THROWS_AS(diebold_mariano((a.array() + 0.1).matrix(), a), NumericalError);
    CHECK_THROWS_AS(diebold_mariano(a.head(9), b.head(9)), std::invalid_argument);
    CHECK_THROWS_AS(diebold_mariano(a.head(12), b.head(11)), std::invalid_argument);
}

TEST_CASE("pricing errors and metrics")
{
    const Date d = parse_date("2024-06-03");
    const PricingError e = PricingError::make(quote(d, 100, 104, 7, 2.0), d, 3, ModelKind::Bs, 2.5);
    CHECK(e.moneyness == Moneyness::OTM);
    CHECK(e.maturity == MaturityBucket::A);
    CHECK(e.abs_error == doctest::Approx(0.5));
    CHECK(e.sq_error == doctest::Approx(0.25));
    CHECK(e.quote_index == 3);

    const PricingError f = PricingError::make(quote(d, 100, 100, 90, 4.0), d, 4, ModelKind::Bs, 3.0);
    const ErrorMetrics m = compute_error_metrics({e, f});
    CHECK(m.mae == doctest::Approx(0.75));
    CHECK(m.mse == doctest::Approx(0.625));
    CHECK_THROWS(compute_error_metrics({}));
}

TEST_CASE("summaries and report files")
{
    BacktestReport rep;
    rep.mode = "implied";
    rep.options.models = {ModelKind::Piv, ModelKind::Bs};
    const double strikes[] = {90, 95, 100, 100, 105, 110};
    const int ttms[] = {7, 14, 30, 45, 60, 90};
    for (int day = 0; day < 2; ++day) {
        const Date d = add_days(parse_date("2024-06-03"), day);
        for (int i = 0; i < 6; ++i) {
            const OptionQuote q = quote(d, 100, strikes[i], ttms[i], 5.0);
            rep.errors.push_back(PricingError::make(q, d, static_cast<std::size_t>(i), ModelKind::Piv, 5.0 + 0.1 * (i + 1)));
            rep.errors.push_back(PricingError::make(q, d, static_cast<std::size_t>(i), ModelKind::Bs, 5.0 - 0.5 * (i + 1)));
        }
    }
    summarize(rep);
    const ModelMetrics& piv = rep.metrics_for(ModelKind::Piv);
    REQUIRE(piv.moneyness.size() == 4);
    REQUIRE(piv.maturity.size() == 5);
    CHECK(piv.moneyness[0].bucket == "ITM");
    CHECK(piv.moneyness[0].count == 4);
    CHECK(piv.moneyness[1].count == 4);
    CHECK(piv.moneyness[2].count == 4);
    CHECK(piv.moneyness[3].bucket == "ALL");
    CHECK(piv.moneyness[3].count == 12);
    CHECK(piv.moneyness[3].proportion_pct == doctest::Approx(100.0));
    CHECK(piv.moneyness[2].proportion_pct == doctest::Approx(100.0 / 3.0));
    CHECK(piv.moneyness[3].mae == doctest::Approx(0.35));
    CHECK(piv.maturity[3].count == 4);
    CHECK(piv.maturity[1].mae == doctest::Approx(0.2));
    CHECK_THROWS_AS(rep.metrics_for(ModelKind::Heston), std::out_of_range);

    REQUIRE(rep.dm.size() == 8);
    for (const auto& row : rep.dm) {
        CHECK(row.model_a == ModelKind::Piv);
        if (row.bucket == "ALL") {
            CHECK(row.n == 12);
            CHECK(row.status == "ok");
            CHECK(row.statistic < 0.0);
        } else {
            CHECK(row.status == "insufficient");
            CHECK(std::isnan(row.statistic));
        }
    }

    const auto dir = std::filesystem::temp_directory_path() / "piv_bt_report";
    std::filesystem::remove_all(dir);
    emit_report(rep, dir);
    const auto money = lines(dir / "moneyness_metrics.csv");
    REQUIRE(money.size() == 9);
    CHECK(money[0] == "model,bucket,count,proportion_pct,mae,mse");
    CHECK(money[4].rfind("PIV,ALL,12,100,", 0) == 0);
    CHECK(lines(dir / "maturity_metrics.csv").size() == 11);
    const auto dm = lines(dir / "dm_tests.csv");
    REQUIRE(dm.size() == 9);
    CHECK(dm[0] == "model_a,model_b,bucket,loss,n,statistic,p_value,status");
    CHECK(dm[1] == "PIV,BS,ITM,AE,4,nan,nan,insufficient");
    std::ifstream js(dir / "run_meta.json");
    const auto meta = nlohmann::json::parse(js);
    CHECK(meta["mode"] == "implied");
    CHECK(meta["window_days"].is_null());
    CHECK(meta["models"] == nlohmann::json({"PIV", "BS"}));
    CHECK(meta["pricing_errors"] == 24);
    std::filesystem::remove_all(dir);
}

TEST_CASE("degenerate differential is flagged")
{
    BacktestReport rep;
    rep.options.models = {ModelKind::Piv, ModelKind::Bs};
    const Date d = parse_date("2024-06-03");
    for (std::size_t i = 0; i < 12; ++i) {
        const OptionQuote q = quote(d, 100, 80 + 3.0 * static_cast<double>(i), 30, 5.0);
        rep.errors.push_back(PricingError::make(q, d, i, ModelKind::Piv, 5.1));
        rep.errors.push_back(PricingError::make(q, d, i, ModelKind::Bs, 5.1));
    }
    summarize(rep);
    for (const auto& row : rep.dm) {
        if (row.bucket == "ALL") {
            CHECK(row.status == "degenerate");
        }
    }
}

TEST_CASE("small end-to-end backtests on a Black-Scholes chain")
{
    SyntheticChainSpec spec;
    spec.model = ModelKind::Bs;
    spec.params = BsParams{0.25, 0.05};
    spec.n_dates = 40;
    spec.ttm_days = {14, 30};
    const auto chain = generate_synthetic_chain(spec, 12);
    const RateSeries rates({RatePoint{spec.start_date, spec.rate}});

    BacktestOptions opts;
    opts.models = {ModelKind::Bs};
    opts.liquidity_filter = false;
    const BacktestReport imp = run_implied_backtest(chain, rates, opts);
    CHECK(imp.mode == "implied");
    CHECK(imp.evaluation_dates == 39);
    CHECK(imp.metrics_for(ModelKind::Bs).moneyness[3].mae < 1e-8);

    opts.window_days = 31;
    const BacktestReport hist = run_historical_backtest(chain, rates, opts);
    CHECK(hist.mode == "historical");
    CHECK(hist.evaluation_dates == 9);
    CHECK(hist.errors.size() == hist.quotes_evaluated);
    CHECK(hist.metrics_for(ModelKind::Bs).moneyness[3].mae < 1.0);

    opts.window_days = 60;
    const BacktestReport none = run_historical_backtest(chain, rates, opts);
    CHECK(none.errors.empty());
    CHECK_FALSE(none.diagnostics.empty());

    opts.window_days = 20;
    CHECK_THROWS_AS(run_historical_backtest(chain, rates, opts), std::invalid_argument);
}

namespace {

// mean -0.5, sd 1 (population), recorded to six decimals
const double kDiff100[] = {
    0.313190, 0.513106, -0.150456, -1.888337, -0.471690, -1.401767, 0.025734, -1.514873,
    0.605305, 0.175395, 1.847853, 0.330489, 0.494325, -0.644547, -0.969839, 1.224935,
    -0.174644, 0.243148, -0.007959, 0.495323, -2.138590, -2.168508, 0.251320, 2.050572,
    -2.355995, -1.079303, -0.109344, -0.885446, -0.655771, -0.762084, 0.641343, -0.316950,
    -0.163815, -1.618762, 0.318079, 1.426401, 0.272556, -0.728198, -1.690153, 0.099383,
    0.069318, -0.649078, -2.809819, -1.218756, -1.571423, -1.349273, -0.168155, -1.516355,
    -0.680254, 0.930300, -1.246629, -0.512243, 0.220669, -1.098741, -2.020899, -0.179262,
    0.461143, -2.270692, -0.790748, -0.967983, 0.894635, -2.129303, -0.723769, -2.002002,
    -1.503663, -0.450686, -0.837557, -0.629791, -1.235611, -2.112583, 0.495002, 1.074294,
    -0.489008, -0.836481, 0.913536, 0.065402, -0.187814, 0.485143, -1.392706, -1.343837,
    -0.362298, -1.636293, -0.431218, -0.216156, 0.136884, 0.073715, -1.913496, -0.602338,
    -0.102151, 0.600433, 0.571347, -0.742138, -0.667349, -1.691125, -0.958019, -1.303302,
    -1.830151, -0.782472, 0.587846, 1.152527};

std::vector<std::string> split(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ',')) {
        out.push_back(f);
    }
    return out;
}

PricingError error_of(double abs_error)
{
    PricingError e;
    e.abs_error = abs_error;
    e.sq_error = abs_error * abs_error;
    return e;
}

BacktestReport synthetic_report()
{
    BacktestReport rep;
    rep.mode = "historical";
    rep.options.models = {ModelKind::Piv, ModelKind::Bs};
    std::uint64_t state = 7;
    auto next = [&] {
        state = state * 6364136223846793005ULL + 1442695040888963407ULL;
        return static_cast<double>(state >> 11) * 0x1.0p-53;
    };
    for (int day = 0; day < 5; ++day) {
        const Date d = add_days(parse_date("2024-06-03"), day);
        for (std::size_t i = 0; i < 20; ++i) {
            const int ttm = 1 + static_cast<int>(89.0 * next());
            const OptionQuote q = quote(d, 100, 85.0 + 30.0 * next(), ttm, 1.0 + 10.0 * next());
            rep.errors.push_back(PricingError::make(q, d, i, ModelKind::Piv, q.option_close + next() - 0.5));
            rep.errors.push_back(PricingError::make(q, d, i, ModelKind::Bs, q.option_close + 2.0 * next() - 1.0));
        }
    }
    summarize(rep);
    return rep;
}

}  // namespace

TEST_CASE("error metric examples")
{
    const ErrorMetrics one = compute_error_metrics({error_of(2.0)});
    CHECK(one.mae == 2.0);
    CHECK(one.mse == 4.0);
    const ErrorMetrics two = compute_error_metrics({error_of(1.0), error_of(3.0)});
    CHECK(two.mae == 2.0);
    CHECK(two.mse == 5.0);
    const BacktestReport rep = synthetic_report();
    for (const auto& m : rep.metrics) {
        for (const auto& b : m.moneyness) {
            CHECK(b.mae * b.mae <= b.mse);
        }
        for (const auto& b : m.maturity) {
            if (b.count > 0) {
                CHECK(b.mae * b.mae <= b.mse);
            }
        }
    }
}

TEST_CASE("Diebold-Mariano on a recorded differential of mean -0.5")
{
    // python: mean(d) / sqrt(var(d, ddof=0) / n) on the recorded values
    const Eigen::VectorXd d = vec(kDiff100, 100);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(100);
    const DmResult r = diebold_mariano(d, zero, Alternative::Less);
    CHECK(std::abs(r.statistic + 5.000000853177466) < 1e-10);
    CHECK(std::abs(r.p_value - 2.8665030344631254e-07) < 1e-10);
    const DmResult s = diebold_mariano(zero, d, Alternative::Less);
    CHECK(s.statistic == -r.statistic);
    CHECK_THROWS_AS(diebold_mariano(d, d), NumericalError);
}

TEST_CASE("empty report writes headers only")
{
    BacktestReport rep;
    rep.mode = "historical";
    summarize(rep);
    const auto dir = std::filesystem::temp_directory_path() / "piv_bt_empty";
    std::filesystem::remove_all(dir);
    emit_report(rep, dir);
    CHECK(lines(dir / "moneyness_metrics.csv") == std::vector<std::string>{"model,bucket,count,proportion_pct,mae,mse"});
    CHECK(lines(dir / "maturity_metrics.csv") == std::vector<std::string>{"model,bucket,count,proportion_pct,mae,mse"});
    CHECK(lines(dir / "dm_tests.csv") ==
          std::vector<std::string>{"model_a,model_b,bucket,loss,n,statistic,p_value,status"});
    std::ifstream js(dir / "run_meta.json");
    const auto meta = nlohmann::json::parse(js);
    CHECK(meta["mode"] == "historical");
    CHECK(meta["pricing_errors"] == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("report numbers survive a write and parse")
{
    const BacktestReport rep = synthetic_report();
    const auto dir = std::filesystem::temp_directory_path() / "piv_bt_roundtrip";
    std::filesystem::remove_all(dir);
    emit_report(rep, dir);
    const auto money = lines(dir / "moneyness_metrics.csv");
    REQUIRE(money.size() == 1 + 4 * rep.metrics.size());
    std::size_t row = 1;
    for (const auto& m : rep.metrics) {
        double pct = 0.0;
        for (const auto& b : m.moneyness) {
            const auto f = split(money[row++]);
            REQUIRE(f.size() == 6);
            CHECK(f[0] == to_string(m.model));
            CHECK(f[1] == b.bucket);
            CHECK(std::stoul(f[2]) == b.count);
            CHECK(std::strtod(f[3].c_str(), nullptr) == b.proportion_pct);
            CHECK(std::strtod(f[4].c_str(), nullptr) == b.mae);
            CHECK(std::strtod(f[5].c_str(), nullptr) == b.mse);
            if (b.bucket != "ALL") {
                pct += b.proportion_pct;
            }
        }
        CHECK(std::abs(pct - 100.0) <= 0.01);
        const auto& all = m.moneyness[3];
        double weighted = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < 3; ++i) {
            weighted += m.moneyness[i].mae * static_cast<double>(m.moneyness[i].count);
            n += m.moneyness[i].count;
        }
        CHECK(n == all.count);
        CHECK(weighted / static_cast<double>(n) == doctest::Approx(all.mae).epsilon(1e-14));
    }
    const auto dm = lines(dir / "dm_tests.csv");
    REQUIRE(dm.size() == 1 + rep.dm.size());
    for (std::size_t i = 0; i < rep.dm.size(); ++i) {
        const auto f = split(dm[i + 1]);
        if (rep.dm[i].status == "ok") {
            CHECK(std::strtod(f[5].c_str(), nullptr) == rep.dm[i].statistic);
            CHECK(std::strtod(f[6].c_str(), nullptr) == rep.dm[i].p_value);
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("two trade dates give one implied evaluation date")
{
    SyntheticChainSpec spec;
    spec.model = ModelKind::Bs;
    spec.params = BsParams{0.2, 0.0};
    spec.n_dates = 2;
    spec.ttm_days = {30};
    const auto chain = generate_synthetic_chain(spec, 1);
    BacktestOptions opts;
    opts.models = {ModelKind::Bs};
    const BacktestReport rep = run_implied_backtest(chain, RateSeries({RatePoint{spec.start_date, spec.rate}}), opts);
    CHECK(rep.evaluation_dates == 1);
}

TEST_CASE("backtests are reproducible")
{
    SyntheticChainSpec spec;
    spec.params = PivParams{50.0, 0.0006, 0.0, 1.0};
    spec.n_dates = 36;
    spec.ttm_days = {14, 30};
    // window 31 leaves five historical evaluation dates
    const auto chain = generate_synthetic_chain(spec, 5);
    const RateSeries rates({RatePoint{spec.start_date, spec.rate}});
    BacktestOptions opts;
    opts.models = {ModelKind::Piv, ModelKind::Bs};
    opts.n_paths = 4000;
    opts.seed = 9;
    opts.window_days = 31;
    for (int mode = 0; mode < 2; ++mode) {
        const BacktestReport a = mode == 0 ? run_historical_backtest(chain, rates, opts) : run_implied_backtest(chain, rates, opts);
        const BacktestReport b = mode == 0 ? run_historical_backtest(chain, rates, opts) : run_implied_backtest(chain, rates, opts);
        REQUIRE(a.errors.size() == b.errors.size());
        REQUIRE(!a.errors.empty());
        for (std::size_t i = 0; i < a.errors.size(); ++i) {
            CHECK(a.errors[i].model_price == b.errors[i].model_price);
        }
    }
}

TEST_CASE("the generating model wins its implied backtest")
{
    for (ModelKind m : {ModelKind::Piv, ModelKind::Heston}) {
        CAPTURE(to_string(m));
        SyntheticChainSpec spec;
        spec.model = m;
        if (m == ModelKind::Piv) {
            spec.params = PivParams{50.0, 0.0006, 0.0, 1.0};
        } else {
            spec.params = HestonParams{2.0, 0.04, 0.3, -0.7, 0.04, 0.05};
        }
        spec.n_dates = 5;
        spec.ttm_days = {14, 30, 60};
        const auto chain = generate_synthetic_chain(spec, 21);
        BacktestOptions opts;
        opts.piv_pricer = PivPricer::Pde;
        opts.liquidity_filter = false;
        const BacktestReport rep = run_implied_backtest(chain, RateSeries({RatePoint{spec.start_date, spec.rate}}), opts);
        const double own = rep.metrics_for(m).moneyness[3].mae;
        for (ModelKind other : {ModelKind::Piv, ModelKind::Bs, ModelKind::Heston}) {
            if (other != m) {
                CHECK(own < rep.metrics_for(other).moneyness[3].mae);
            }
        }
    }
}
