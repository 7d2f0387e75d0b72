#include "piv/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

#include "piv/errors.hpp"
#include "piv/format.hpp"

namespace piv {

PricingError PricingError::make(const OptionQuote& q, Date date, std::size_t index, ModelKind model, double model_price)
{
    PricingError e;
    e.trade_date = date;
    e.quote_index = index;
    e.model = model;
    e.moneyness = classify_moneyness(q.underlying_close, q.strike);
    e.maturity = classify_maturity(q.ttm_days);
    e.model_price = model_price;
    e.market_price = q.option_close;
    const double d = model_price - q.option_close;
    e.abs_error = std::abs(d);
    e.sq_error = d * d;
    return e;
}

ErrorMetrics compute_error_metrics(const std::vector<PricingError>& errors)
{
    if (errors.empty()) {
        throw std::invalid_argument("error metrics need at least one pricing error");
    }
    ErrorMetrics m;
    for (const auto& e : errors) {
        m.mae += e.abs_error;
        m.mse += e.sq_error;
    }
    const auto n = static_cast<double>(errors.size());
    m.mae /= n;
    m.mse /= n;
    return m;
}

DmResult diebold_mariano(const Eigen::Ref<const Eigen::VectorXd>& loss_a, const Eigen::Ref<const Eigen::VectorXd>& loss_b,
                         Alternative alternative)
{
    if (loss_a.size() != loss_b.size()) {
        throw std::invalid_argument("loss series must have equal lengths");
    }
    if (loss_a.size() < 10) {
        throw std::invalid_argument("Diebold-Mariano test needs at least 10 observations");
    }
    if (!loss_a.allFinite() || !loss_b.allFinite()) {
        throw std::invalid_argument("loss series must be finite");
    }
    const Eigen::VectorXd d = loss_a - loss_b;
    const auto n = static_cast<double>(d.size());
    const double mean = d.mean();
    const double var = (d.array() - mean).square().sum() / n;
    // constant up to rounding
    if (!(std::sqrt(var) > 1e-12 * d.cwiseAbs().maxCoeff())) {
        throw NumericalError("loss differential has zero variance");
    }
    DmResult r;
    r.statistic = mean / std::sqrt(var / n);
    r.p_value = alternative == Alternative::Less ? normal_cdf(r.statistic)
                                                 : 2.0 * normal_cdf(-std::abs(r.statistic));
    return r;
}

const ModelMetrics& BacktestReport::metrics_for(ModelKind m) const
{
    for (const auto& mm : metrics) {
        if (mm.model == m) {
            return mm;
        }
    }
    throw std::out_of_range("no metrics for model " + to_string(m));
}

namespace {

struct DayQuotes {
    Date date;
    double close = 0.0;
    std::vector<OptionQuote> quotes;  // after the liquidity filter
};

std::vector<DayQuotes> split_by_date(const std::vector<OptionQuote>& chain, const BacktestOptions& opt)
{
    std::map<Date, std::vector<OptionQuote>> by_date;
    for (const auto& q : chain) {
        by_date[q.trade_date].push_back(q);
    }
    std::vector<DayQuotes> days;
    for (auto& [d, qs] : by_date) {
        DayQuotes day;
        day.date = d;
        day.close = qs.front().underlying_close;
        day.quotes = opt.liquidity_filter ? apply_liquidity_filter(qs, opt.decile) : std::move(qs);
        days.push_back(std::move(day));
    }
    return days;
}

struct DayResult {
    std::vector<PricingError> errors;
    std::vector<std::string> diagnostics;
    std::size_t failed_fits = 0;
    bool evaluated = false;
};

QuotePricing pricing_for(const BacktestOptions& opt, std::uint64_t seed)
{
    QuotePricing p;
    p.n_paths = opt.n_paths;
    p.seed = seed;
    p.piv_pricer = opt.piv_pricer;
    return p;
}

void record(DayResult& out, const DayQuotes& day, ModelKind model, const std::vector<double>& prices)
{
    for (std::size_t i = 0; i < day.quotes.size(); ++i) {
        out.errors.push_back(PricingError::make(day.quotes[i], day.date, i, model, prices[i]));
    }
}

void validate_options(const BacktestOptions& opt)
{
    if (opt.models.empty()) {
        throw std::invalid_argument("backtest needs at least one model");
    }
    if (opt.n_paths < 2) {
        throw std::invalid_argument("backtest path count must be at least 2");
    }
    if (!(opt.decile >= 0.0 && opt.decile <= 1.0)) {
        throw std::invalid_argument("liquidity decile must lie in [0, 1]");
    }
}

// Runs `fn` for every date index in [first, n) in parallel, then merges in date order.
template <typename Fn>
void run_dates(BacktestReport& report, std::size_t first, std::size_t n, Fn&& fn)
{
    std::vector<DayResult> results(n > first ? n - first : 0);
    const auto count = static_cast<long>(results.size());
#pragma omp parallel for schedule(dynamic)
    for (long k = 0; k < count; ++k) {
        DayResult& r = results[static_cast<std::size_t>(k)];
        try {
            fn(first + static_cast<std::size_t>(k), r);
        } catch (const std::exception& e) {
            r.errors.clear();
            r.evaluated = false;
            r.diagnostics.push_back(e.what());
        }
    }
    for (auto& r : results) {
        if (r.evaluated) {
            ++report.evaluation_dates;
        } else {
            ++report.skipped_dates;
        }
        report.failed_fits += r.failed_fits;
        for (auto& d : r.diagnostics) {
            report.diagnostics.push_back(std::move(d));
        }
        report.errors.insert(report.errors.end(), r.errors.begin(), r.errors.end());
    }
}

std::size_t count_quotes(const std::vector<DayQuotes>& days, std::size_t first)
{
    std::size_t n = 0;
    for (std::size_t t = first; t < days.size(); ++t) {
        n += days[t].quotes.size();
    }
    return n;
}

}  // namespace

BacktestReport run_historical_backtest(const std::vector<OptionQuote>& chain, const RateSeries& rates,
                                       const BacktestOptions& options)
{
    validate_options(options);
    if (options.window_days < 31) {
        throw std::invalid_argument("window_days must be at least 31 (30 returns)");
    }
    BacktestReport report;
    report.mode = "historical";
    report.options = options;
    report.quotes_in = chain.size();
    const auto days = split_by_date(chain, options);
    if (days.size() < options.window_days + 1) {
        report.diagnostics.push_back("chain has " + std::to_string(days.size()) + " trading dates; window " +
                                     std::to_string(options.window_days) + " needs at least " +
                                     std::to_string(options.window_days + 1));
        report.skipped_dates = days.size();
        summarize(report);
        return report;
    }
    report.skipped_dates = options.window_days;
    report.quotes_evaluated = count_quotes(days, options.window_days);

    run_dates(report, options.window_days, days.size(), [&](std::size_t t, DayResult& out) {
        const DayQuotes& day = days[t];
        const std::string tag = format_date(day.date) + ": ";
        if (day.quotes.empty()) {
            out.diagnostics.push_back(tag + "no quotes after filtering");
            return;
        }
        std::vector<double> closes;
        for (std::size_t k = t - options.window_days; k < t; ++k) {
            closes.push_back(days[k].close);
        }
        const ReturnSeries series = log_returns(closes);
        const double rate = rates.lookup(day.date);
        const QuotePricing pricing = pricing_for(options, options.seed);
        for (ModelKind m : options.models) {
            try {
                ModelParams params;
                switch (m) {
                case ModelKind::Piv:
                    params = mle_piv(series).params;
                    break;
                case ModelKind::Bs:
                    params = mle_bs(series).params;
                    break;
                case ModelKind::Heston: {
                    const FitResult fit = estimate_heston(series, options.heston_window_rv);
                    HestonParams h = fit.heston();
                    h.v0 = fit.v_last;
                    params = h;
                    break;
                }
                }
                record(out, day, m, price_quotes(params, day.quotes, rate, pricing));
            } catch (const std::exception& e) {
                ++out.failed_fits;
                out.diagnostics.push_back(tag + to_string(m) + " failed: " + e.what());
            }
        }
        out.evaluated = true;
    });
    summarize(report);
    return report;
}

BacktestReport run_implied_backtest(const std::vector<OptionQuote>& chain, const RateSeries& rates,
                                    const BacktestOptions& options)
{
    validate_options(options);
    BacktestReport report;
    report.mode = "implied";
    report.options = options;
    report.quotes_in = chain.size();
    const auto days = split_by_date(chain, options);
    if (days.size() < 2) {
        report.diagnostics.push_back("implied backtest needs at least two trading dates");
        report.skipped_dates = days.size();
        summarize(report);
        return report;
    }
    report.skipped_dates = 1;
    report.quotes_evaluated = count_quotes(days, 1);

    run_dates(report, 1, days.size(), [&](std::size_t t, DayResult& out) {
        const DayQuotes& prev = days[t - 1];
        const DayQuotes& day = days[t];
        const std::string tag = format_date(day.date) + ": ";
        if (day.quotes.empty() || prev.quotes.empty()) {
            out.diagnostics.push_back(tag + "no quotes after filtering");
            return;
        }
        const double rate = rates.lookup(day.date);
        CalibrationProblem problem;
        problem.quotes = prev.quotes;
        problem.rate = rates.lookup(prev.date);
        problem.pricing = pricing_for(options, options.seed);
        const QuotePricing& pricing = problem.pricing;
        for (ModelKind m : options.models) {
            try {
                problem.model = m;
                const FitResult fit = calibrate_implied(problem);
                record(out, day, m, price_quotes(fit.params, day.quotes, rate, pricing));
            } catch (const std::exception& e) {
                ++out.failed_fits;
                out.diagnostics.push_back(tag + to_string(m) + " calibration failed: " + e.what());
            }
        }
        out.evaluated = true;
    });
    summarize(report);
    return report;
}

namespace {

BucketMetrics bucket_metrics(const std::string& name, const std::vector<const PricingError*>& errs, std::size_t total)
{
    BucketMetrics b;
    b.bucket = name;
    b.count = errs.size();
    b.proportion_pct = total > 0 ? 100.0 * static_cast<double>(b.count) / static_cast<double>(total) : 0.0;
    if (errs.empty()) {
        b.mae = b.mse = std::nan("");
        return b;
    }
    for (const auto* e : errs) {
        b.mae += e->abs_error;
        b.mse += e->sq_error;
    }
    b.mae /= static_cast<double>(b.count);
    b.mse /= static_cast<double>(b.count);
    return b;
}

const std::vector<std::string> kMoneynessBuckets{"ITM", "OTM", "ATM", "ALL"};

bool in_bucket(const PricingError& e, const std::string& bucket)
{
    return bucket == "ALL" || to_string(e.moneyness) == bucket;
}

}  // namespace

void summarize(BacktestReport& report)
{
    report.metrics.clear();
    report.dm.clear();
    if (report.errors.empty()) {
        return;
    }
    using Key = std::pair<Date, std::size_t>;
    std::map<ModelKind, std::map<Key, const PricingError*>> by_model;
    for (ModelKind m : report.options.models) {
        std::vector<const PricingError*> all;
        for (const auto& e : report.errors) {
            if (e.model == m) {
                all.push_back(&e);
                by_model[m][{e.trade_date, e.quote_index}] = &e;
            }
        }
        ModelMetrics mm;
        mm.model = m;
        for (const auto& name : kMoneynessBuckets) {
            std::vector<const PricingError*> sel;
            for (const auto* e : all) {
                if (in_bucket(*e, name)) {
                    sel.push_back(e);
                }
            }
            mm.moneyness.push_back(bucket_metrics(name, sel, all.size()));
        }
        for (int b = 0; b < 5; ++b) {
            std::vector<const PricingError*> sel;
            for (const auto* e : all) {
                if (static_cast<int>(e->maturity) == b) {
                    sel.push_back(e);
                }
            }
            mm.maturity.push_back(bucket_metrics(to_string(static_cast<MaturityBucket>(b)), sel, all.size()));
        }
        report.metrics.push_back(std::move(mm));
    }

    const auto& models = report.options.models;
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            const auto& ea = by_model[models[i]];
            const auto& eb = by_model[models[j]];
            for (const auto& bucket : kMoneynessBuckets) {
                std::vector<std::pair<const PricingError*, const PricingError*>> pairs;
                for (const auto& [key, a] : ea) {
                    auto it = eb.find(key);
                    if (it != eb.end() && in_bucket(*a, bucket)) {
                        pairs.emplace_back(a, it->second);
                    }
                }
                for (LossKind loss : {LossKind::AE, LossKind::SE}) {
                    DmRow row;
                    row.model_a = models[i];
                    row.model_b = models[j];
                    row.bucket = bucket;
                    row.loss = loss;
                    row.n = pairs.size();
                    row.statistic = row.p_value = std::nan("");
                    Eigen::VectorXd la(static_cast<Eigen::Index>(pairs.size()));
                    Eigen::VectorXd lb(la.size());
                    for (std::size_t k = 0; k < pairs.size(); ++k) {
                        const auto idx = static_cast<Eigen::Index>(k);
                        la[idx] = loss == LossKind::AE ? pairs[k].first->abs_error : pairs[k].first->sq_error;
                        lb[idx] = loss == LossKind::AE ? pairs[k].second->abs_error : pairs[k].second->sq_error;
                    }
                    if (pairs.size() < 10) {
                        row.status = "insufficient";
                    } else {
                        try {
                            const DmResult r = diebold_mariano(la, lb, Alternative::Less);
                            row.statistic = r.statistic;
                            row.p_value = r.p_value;
                            row.status = "ok";
                        } catch (const NumericalError&) {
                            row.status = "degenerate";
                        }
                    }
                    report.dm.push_back(std::move(row));
                }
            }
        }
    }
}

namespace {

std::ofstream open_out(const std::filesystem::path& p)
{
    std::ofstream out(p);
    if (!out) {
        throw DataError("cannot write '" + p.string() + "'");
    }
    return out;
}

void write_bucket_rows(std::ostream& out, ModelKind m, const std::vector<BucketMetrics>& rows)
{
    for (const auto& b : rows) {
        out << to_string(m) << ',' << b.bucket << ',' << b.count << ',' << fmt_double(b.proportion_pct) << ','
            << fmt_double(b.mae) << ',' << fmt_double(b.mse) << '\n';
    }
}

}  // namespace

void emit_report(const BacktestReport& report, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw DataError("cannot create '" + dir.string() + "': " + ec.message());
    }
    const char* header = "model,bucket,count,proportion_pct,mae,mse\n";
    {
        auto out = open_out(dir / "moneyness_metrics.csv");
        out << header;
        for (const auto& mm : report.metrics) {
            write_bucket_rows(out, mm.model, mm.moneyness);
        }
    }
    {
        auto out = open_out(dir / "maturity_metrics.csv");
        out << header;
        for (const auto& mm : report.metrics) {
            write_bucket_rows(out, mm.model, mm.maturity);
        }
    }
    {
        auto out = open_out(dir / "dm_tests.csv");
        out << "model_a,model_b,bucket,loss,n,statistic,p_value,status\n";
        for (const auto& r : report.dm) {
            out << to_string(r.model_a) << ',' << to_string(r.model_b) << ',' << r.bucket << ','
                << (r.loss == LossKind::AE ? "AE" : "SE") << ',' << r.n << ',' << fmt_double(r.statistic) << ','
                << fmt_double(r.p_value) << ',' << r.status << '\n';
        }
    }
    nlohmann::json meta;
    meta["mode"] = report.mode;
    meta["window_days"] = report.mode == "historical" ? nlohmann::json(report.options.window_days) : nlohmann::json();
    meta["seed"] = report.options.seed;
    std::vector<std::string> models;
    for (ModelKind m : report.options.models) {
        models.push_back(to_string(m));
    }
    meta["models"] = models;
    meta["n_paths"] = report.options.n_paths;
    meta["piv_pricer"] = to_string(report.options.piv_pricer);
    meta["heston_window_rv"] = report.options.heston_window_rv;
    meta["filters"] = {{"liquidity_filter", report.options.liquidity_filter},
                       {"turnover_quantile", report.options.decile},
                       {"max_ttm_days", 90}};
    meta["quotes_in"] = report.quotes_in;
    meta["quotes_evaluated"] = report.quotes_evaluated;
    meta["evaluation_dates"] = report.evaluation_dates;
    meta["skipped_dates"] = report.skipped_dates;
    meta["failed_fits"] = report.failed_fits;
    meta["pricing_errors"] = report.errors.size();
    meta["diagnostics"] = report.diagnostics;
    auto out = open_out(dir / "run_meta.json");
    out << meta.dump(2) << '\n';
}

}  // namespace piv
