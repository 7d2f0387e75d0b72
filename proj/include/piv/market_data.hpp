#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "piv/estimation.hpp"
#include "piv/model_core.hpp"
#include "piv/pricing.hpp"

namespace piv {

using Date = std::chrono::year_month_day;

/// Parses YYYY-MM-DD. Throws DataError on anything else.
Date parse_date(const std::string& text);
std::string format_date(Date d);
/// Calendar days from a to b.
int days_between(Date a, Date b);
Date add_days(Date d, int days);

enum class Moneyness { ITM, OTM, ATM };
enum class MaturityBucket { A, B, C, D, E };

std::string to_string(Moneyness m);
std::string to_string(MaturityBucket b);

/// S/K <= 0.97 is OTM, S/K >= 1.03 is ITM, otherwise ATM.
Moneyness classify_moneyness(double underlying, double strike);
/// A: (0, 7], B: (7, 15], C: (15, 30], D: (30, 60], E: (60, 90] days.
MaturityBucket classify_maturity(int ttm_days);

struct OptionQuote {
    Date trade_date;
    Date expiry_date;
    int ttm_days = 0;
    double underlying_close = 0.0;
    double strike = 0.0;
    double option_close = 0.0;
    std::int64_t contracts_traded = 0;
    std::int64_t lot_size = 0;

    /// contracts_traded * lot_size * underlying_close
    double turnover() const;
    /// Years to expiry on an actual/365 basis.
    double ttm_years() const { return ttm_days / 365.0; }
    ContractSpec contract(double rate) const;
    /// Throws std::invalid_argument naming the violated invariant.
    void validate() const;
};

struct ChainLoad {
    std::vector<OptionQuote> quotes;
    std::size_t rejected = 0;
    std::vector<std::string> diagnostics;  // "row N: reason"
};

/// Reads the chain CSV (header trade_date,expiry_date,underlying_close,strike,
/// option_close,contracts_traded,lot_size; column order free). Rows that parse
/// but break a quote invariant are rejected with a diagnostic; missing columns,
/// unparseable fields and empty files throw DataError.
ChainLoad load_option_chain(const std::filesystem::path& path);
ChainLoad read_option_chain(std::istream& in);
void write_option_chain(const std::vector<OptionQuote>& quotes, std::ostream& out);
void write_option_chain(const std::vector<OptionQuote>& quotes, const std::filesystem::path& path);

/// Keeps quotes whose turnover is at or above the `decile` quantile of the
/// turnovers (inclusive linear interpolation between order statistics).
std::vector<OptionQuote> apply_liquidity_filter(const std::vector<OptionQuote>& quotes, double decile = 0.7);

/// Inclusive linear-interpolation quantile of unsorted values.
double quantile_linear(std::vector<double> values, double p);

struct RatePoint {
    Date date;
    double yield_91d = 0.0;
};

class RateSeries {
public:
    RateSeries() = default;
    explicit RateSeries(std::vector<RatePoint> points);

    /// Last rate on or before `d`. Throws DataError before the first date.
    double lookup(Date d) const;
    const std::vector<RatePoint>& points() const { return points_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    std::vector<RatePoint> points_;
    std::vector<std::string> warnings_;
};

/// CSV with header date,yield_91d.
RateSeries load_rate_series(const std::filesystem::path& path);
RateSeries read_rate_series(std::istream& in);
void write_rate_series(const RateSeries& rates, std::ostream& out);

/// Synthetic chain: a daily underlying path under the model's P dynamics,
/// with every (date, strike multiplier, maturity) priced by the model at
/// constant parameters.
struct SyntheticChainSpec {
    ModelKind model = ModelKind::Piv;
    ModelParams params = PivParams{};
    Date start_date{std::chrono::year{2024}, std::chrono::month{1}, std::chrono::day{1}};
    std::size_t n_dates = 120;  // trading days, weekdays only
    double s0 = 100.0;
    double rate = 0.05;
    std::vector<double> strike_multipliers{0.9, 0.94, 0.97, 1.0, 1.03, 1.06, 1.1};
    std::vector<int> ttm_days{7, 14, 30, 60, 90};
    double noise = 0.0;        // sd of multiplicative lognormal price noise
    double min_price = 0.01;   // quotes priced below are dropped
    double mean_contracts = 200.0;
    std::int64_t lot_size = 50;
    PdeGrid pde_grid{};
    HestonQuadrature heston_quad{};

    void validate() const;
};

std::vector<OptionQuote> generate_synthetic_chain(const SyntheticChainSpec& spec, std::uint64_t seed);

/// Sorted distinct trade dates and one underlying close per date.
struct TradingDays {
    std::vector<Date> dates;
    std::vector<double> closes;
};
TradingDays trading_days(const std::vector<OptionQuote>& quotes);

/// Daily log returns of consecutive closes, dt = 1/252.
ReturnSeries log_returns(const std::vector<double>& closes);

}  // namespace piv
