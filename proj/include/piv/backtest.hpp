#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "piv/calibration.hpp"
#include "piv/market_data.hpp"

namespace piv {

struct PricingError {
    Date trade_date;
    std::size_t quote_index = 0;  // position within that date's evaluated quotes
    ModelKind model = ModelKind::Piv;
    Moneyness moneyness = Moneyness::ATM;
    MaturityBucket maturity = MaturityBucket::A;
    double model_price = 0.0;
    double market_price = 0.0;
    double abs_error = 0.0;
    double sq_error = 0.0;

    static PricingError make(const OptionQuote& q, Date date, std::size_t index, ModelKind model, double model_price);
};

struct ErrorMetrics {
    double mae = 0.0;
    double mse = 0.0;
};

/// Arithmetic means of abs_error and sq_error. Throws on an empty list.
ErrorMetrics compute_error_metrics(const std::vector<PricingError>& errors);

struct BucketMetrics {
    std::string bucket;
    std::size_t count = 0;
    double proportion_pct = 0.0;
    double mae = 0.0;  // NaN for an empty bucket
    double mse = 0.0;
};

struct ModelMetrics {
    ModelKind model = ModelKind::Piv;
    std::vector<BucketMetrics> moneyness;  // ITM, OTM, ATM, ALL
    std::vector<BucketMetrics> maturity;   // A..E
};

enum class Alternative { Less, TwoSided };
enum class LossKind { AE, SE };

struct DmResult {
    double statistic = 0.0;
    double p_value = 0.0;
};

/// d = loss_a - loss_b, statistic mean(d) / sqrt(var(d) / n) with the
/// divisor-n variance, p-value from the standard normal (lower tail for
/// Less). Needs n >= 10 finite pairs; a differential that is constant (sd at
/// most 1e-12 of max |d|) throws NumericalError.
DmResult diebold_mariano(const Eigen::Ref<const Eigen::VectorXd>& loss_a, const Eigen::Ref<const Eigen::VectorXd>& loss_b,
                         Alternative alternative = Alternative::Less);

struct DmRow {
    ModelKind model_a = ModelKind::Piv;
    ModelKind model_b = ModelKind::Bs;
    std::string bucket;
    LossKind loss = LossKind::AE;
    std::size_t n = 0;
    double statistic = 0.0;  // NaN unless status == "ok"
    double p_value = 0.0;
    std::string status;  // ok, degenerate, insufficient
};

struct BacktestOptions {
    std::vector<ModelKind> models{ModelKind::Piv, ModelKind::Bs, ModelKind::Heston};
    std::uint64_t seed = 0;
    std::size_t window_days = 90;
    std::size_t n_paths = 200000;
    PivPricer piv_pricer = PivPricer::MonteCarlo;
    bool liquidity_filter = true;  // per trade date
    double decile = 0.7;
    std::size_t heston_window_rv = 5;
};

struct BacktestReport {
    std::string mode;  // historical or implied
    BacktestOptions options;
    std::size_t evaluation_dates = 0;
    std::size_t skipped_dates = 0;
    std::size_t failed_fits = 0;
    std::size_t quotes_in = 0;
    std::size_t quotes_evaluated = 0;
    std::vector<std::string> diagnostics;
    std::vector<PricingError> errors;  // ordered by date, quote index, model
    std::vector<ModelMetrics> metrics;
    std::vector<DmRow> dm;

    const ModelMetrics& metrics_for(ModelKind m) const;
};

/// Rolling-window estimation: each date with window_days earlier closes is
/// priced with parameters fitted to the log returns of those closes.
BacktestReport run_historical_backtest(const std::vector<OptionQuote>& chain, const RateSeries& rates,
                                       const BacktestOptions& options);

/// Each date after the first is priced with parameters calibrated to the
/// previous trading date's quotes.
BacktestReport run_implied_backtest(const std::vector<OptionQuote>& chain, const RateSeries& rates,
                                    const BacktestOptions& options);

/// Fills metrics and dm from errors; both stay empty when there are no errors.
void summarize(BacktestReport& report);

/// Writes moneyness_metrics.csv, maturity_metrics.csv, dm_tests.csv and
/// run_meta.json into dir (created if missing).
void emit_report(const BacktestReport& report, const std::filesystem::path& dir);

}  // namespace piv
