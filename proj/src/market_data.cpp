#include "piv/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "piv/errors.hpp"
#include "piv/format.hpp"
#include "piv/rng.hpp"
#include "piv/sde_engine.hpp"

namespace piv {

namespace {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

double parse_double(const std::string& s, const char* what, std::size_t row)
{
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end || s.empty()) {
        throw DataError("row " + std::to_string(row) + ": cannot parse " + what + " '" + s + "'");
    }
    return v;
}

std::int64_t parse_int(const std::string& s, const char* what, std::size_t row)
{
    std::int64_t v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end || s.empty()) {
        throw DataError("row " + std::to_string(row) + ": cannot parse " + what + " '" + s + "'");
    }
    return v;
}

Date parse_date_row(const std::string& s, std::size_t row)
{
    try {
        return parse_date(s);
    } catch (const DataError& e) {
        throw DataError("row " + std::to_string(row) + ": " + e.what());
    }
}

std::map<std::string, std::size_t> header_index(const std::string& line, const std::vector<std::string>& required)
{
    const auto cols = split_csv_line(line);
    std::map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        idx[cols[i]] = i;
    }
    for (const auto& r : required) {
        if (idx.count(r) == 0) {
            throw DataError("missing column '" + r + "'");
        }
    }
    return idx;
}

bool is_blank(const std::string& line)
{
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

const std::vector<std::string> kChainColumns{"trade_date",    "expiry_date",      "underlying_close", "strike",
                                             "option_close",  "contracts_traded", "lot_size"};

}  // namespace

Date parse_date(const std::string& text)
{
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    const bool shape = text.size() == 10 && text[4] == '-' && text[7] == '-';
    if (shape) {
        const char* s = text.data();
        const bool ok = std::from_chars(s, s + 4, y).ptr == s + 4 && std::from_chars(s + 5, s + 7, m).ptr == s + 7 &&
                        std::from_chars(s + 8, s + 10, d).ptr == s + 10;
        const Date out{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
        if (ok && out.ok()) {
            return out;
        }
    }
    throw DataError("invalid date '" + text + "' (expected YYYY-MM-DD)");
}

std::string format_date(Date d)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

int days_between(Date a, Date b)
{
    return static_cast<int>((std::chrono::sys_days{b} - std::chrono::sys_days{a}).count());
}

Date add_days(Date d, int days)
{
    return Date{std::chrono::sys_days{d} + std::chrono::days{days}};
}

std::string to_string(Moneyness m)
{
    switch (m) {
    case Moneyness::ITM:
        return "ITM";
    case Moneyness::OTM:
        return "OTM";
    case Moneyness::ATM:
        return "ATM";
    }
    return "?";
}

std::string to_string(MaturityBucket b)
{
    return std::string(1, static_cast<char>('A' + static_cast<int>(b)));
}

Moneyness classify_moneyness(double underlying, double strike)
{
    const double ratio = underlying / strike;
    if (ratio <= 0.97) {
        return Moneyness::OTM;
    }
    if (ratio >= 1.03) {
        return Moneyness::ITM;
    }
    return Moneyness::ATM;
}

MaturityBucket classify_maturity(int ttm_days)
{
    if (ttm_days < 1 || ttm_days > 90) {
        throw std::invalid_argument("time to maturity " + std::to_string(ttm_days) + " days outside [1, 90]");
    }
    if (ttm_days <= 7) {
        return MaturityBucket::A;
    }
    if (ttm_days <= 15) {
        return MaturityBucket::B;
    }
    if (ttm_days <= 30) {
        return MaturityBucket::C;
    }
    if (ttm_days <= 60) {
        return MaturityBucket::D;
    }
    return MaturityBucket::E;
}

double OptionQuote::turnover() const
{
    return static_cast<double>(contracts_traded) * static_cast<double>(lot_size) * underlying_close;
}

ContractSpec OptionQuote::contract(double rate) const
{
    return ContractSpec{underlying_close, strike, ttm_years(), rate, 0.0};
}

void OptionQuote::validate() const
{
    if (!(expiry_date > trade_date)) {
        throw std::invalid_argument("expiry_date must be after trade_date");
    }
    if (ttm_days != days_between(trade_date, expiry_date)) {
        throw std::invalid_argument("ttm_days inconsistent with the dates");
    }
    if (ttm_days > 90) {
        throw std::invalid_argument("time to maturity " + std::to_string(ttm_days) + " days exceeds 90");
    }
    auto positive = [](double x, const char* what) {
        if (!(x > 0.0) || !std::isfinite(x)) {
            throw std::invalid_argument(std::string(what) + " must be positive");
        }
    };
    positive(underlying_close, "underlying_close");
    positive(strike, "strike");
    positive(option_close, "option_close");
    if (contracts_traded < 0) {
        throw std::invalid_argument("contracts_traded must be non-negative");
    }
    if (lot_size <= 0) {
        throw std::invalid_argument("lot_size must be positive");
    }
}

ChainLoad read_option_chain(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || is_blank(line)) {
        throw DataError("option chain is empty");
    }
    const auto idx = header_index(line, kChainColumns);
    ChainLoad out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (is_blank(line)) {
            continue;
        }
        const auto f = split_csv_line(line);
        auto col = [&](const std::string& name) -> const std::string& {
            const std::size_t i = idx.at(name);
            if (i >= f.size()) {
                throw DataError("row " + std::to_string(row) + ": missing field '" + name + "'");
            }
            return f[i];
        };
        OptionQuote q;
        q.trade_date = parse_date_row(col("trade_date"), row);
        q.expiry_date = parse_date_row(col("expiry_date"), row);
        q.ttm_days = days_between(q.trade_date, q.expiry_date);
        q.underlying_close = parse_double(col("underlying_close"), "underlying_close", row);
        q.strike = parse_double(col("strike"), "strike", row);
        q.option_close = parse_double(col("option_close"), "option_close", row);
        q.contracts_traded = parse_int(col("contracts_traded"), "contracts_traded", row);
        q.lot_size = parse_int(col("lot_size"), "lot_size", row);
        try {
            q.validate();
            out.quotes.push_back(q);
        } catch (const std::invalid_argument& e) {
            ++out.rejected;
            out.diagnostics.push_back("row " + std::to_string(row) + ": " + e.what());
        }
    }
    if (out.quotes.empty() && out.rejected == 0) {
        throw DataError("option chain has no data rows");
    }
    return out;
}

ChainLoad load_option_chain(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open option chain '" + path.string() + "'");
    }
    try {
        return read_option_chain(in);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_option_chain(const std::vector<OptionQuote>& quotes, std::ostream& out)
{
    out << "trade_date,expiry_date,underlying_close,strike,option_close,contracts_traded,lot_size\n";
    for (const auto& q : quotes) {
        out << format_date(q.trade_date) << ',' << format_date(q.expiry_date) << ',' << fmt_double(q.underlying_close)
            << ',' << fmt_double(q.strike) << ',' << fmt_double(q.option_close) << ',' << q.contracts_traded << ','
            << q.lot_size << '\n';
    }
}

void write_option_chain(const std::vector<OptionQuote>& quotes, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write '" + path.string() + "'");
    }
    write_option_chain(quotes, out);
}

double quantile_linear(std::vector<double> values, double p)
{
    if (values.empty()) {
        throw std::invalid_argument("quantile of an empty set");
    }
    if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument("quantile level must lie in [0, 1]");
    }
    std::sort(values.begin(), values.end());
    const double h = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<OptionQuote> apply_liquidity_filter(const std::vector<OptionQuote>& quotes, double decile)
{
    if (quotes.empty()) {
        throw std::invalid_argument("liquidity filter needs at least one quote");
    }
    std::vector<double> t;
    t.reserve(quotes.size());
    for (const auto& q : quotes) {
        t.push_back(q.turnover());
    }
    const double threshold = quantile_linear(t, decile);
    std::vector<OptionQuote> out;
    for (const auto& q : quotes) {
        if (q.turnover() >= threshold) {
            out.push_back(q);
        }
    }
    return out;
}

RateSeries::RateSeries(std::vector<RatePoint> points) : points_(std::move(points))
{
    std::stable_sort(points_.begin(), points_.end(),
                     [](const RatePoint& a, const RatePoint& b) { return a.date < b.date; });
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!std::isfinite(points_[i].yield_91d)) {
            throw DataError("rate on " + format_date(points_[i].date) + " is not finite");
        }
        if (i > 0 && points_[i].date == points_[i - 1].date) {
            throw DataError("duplicate rate date " + format_date(points_[i].date));
        }
        if (points_[i].yield_91d < 0.0 || points_[i].yield_91d > 0.2) {
            warnings_.push_back("rate " + fmt_double(points_[i].yield_91d) + " on " + format_date(points_[i].date) +
                                " outside [0, 0.2]");
        }
    }
}

double RateSeries::lookup(Date d) const
{
    auto it = std::upper_bound(points_.begin(), points_.end(), d,
                               [](Date x, const RatePoint& p) { return x < p.date; });
    if (it == points_.begin()) {
        throw DataError("no risk-free rate on or before " + format_date(d));
    }
    return std::prev(it)->yield_91d;
}

RateSeries read_rate_series(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line) || is_blank(line)) {
        throw DataError("rate file is empty");
    }
    const auto idx = header_index(line, {"date", "yield_91d"});
    std::vector<RatePoint> pts;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (is_blank(line)) {
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() <= std::max(idx.at("date"), idx.at("yield_91d"))) {
            throw DataError("row " + std::to_string(row) + ": too few fields");
        }
        pts.push_back({parse_date_row(f[idx.at("date")], row), parse_double(f[idx.at("yield_91d")], "yield_91d", row)});
    }
    if (pts.empty()) {
        throw DataError("rate file has no data rows");
    }
    return RateSeries(std::move(pts));
}

RateSeries load_rate_series(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open rate file '" + path.string() + "'");
    }
    try {
        return read_rate_series(in);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_rate_series(const RateSeries& rates, std::ostream& out)
{
    out << "date,yield_91d\n";
    for (const auto& p : rates.points()) {
        out << format_date(p.date) << ',' << fmt_double(p.yield_91d) << '\n';
    }
}

void SyntheticChainSpec::validate() const
{
    if (n_dates < 2) {
        throw std::invalid_argument("synthetic chain needs at least two dates");
    }
    if (!(s0 > 0.0) || !std::isfinite(rate) || !(noise >= 0.0) || !(min_price > 0.0) || !(mean_contracts > 0.0) ||
        lot_size <= 0) {
        throw std::invalid_argument("invalid synthetic chain settings");
    }
    for (double m : strike_multipliers) {
        if (!(m > 0.0) || !std::isfinite(m)) {
            throw std::invalid_argument("strike multipliers must be positive");
        }
    }
    for (int t : ttm_days) {
        if (t < 1 || t > 90) {
            throw std::invalid_argument("synthetic maturities must lie in [1, 90] days");
        }
    }
    switch (model) {
    case ModelKind::Piv:
        std::get<PivParams>(params).validate();
        break;
    case ModelKind::Bs:
        std::get<BsParams>(params).validate();
        break;
    case ModelKind::Heston:
        std::get<HestonParams>(params).validate();
        break;
    }
}

namespace {

std::vector<double> underlying_path(const SyntheticChainSpec& spec, std::uint64_t seed)
{
    const std::size_t steps = spec.n_dates - 1;
    SimConfig cfg;
    cfg.n_paths = 1;
    cfg.n_steps = steps;
    cfg.horizon_t = static_cast<double>(steps) / 252.0;
    cfg.seed = seed;
    cfg.keep_paths = true;
    std::vector<double> closes(spec.n_dates);
    switch (spec.model) {
    case ModelKind::Piv: {
        // Each daily log return is one observation of R.
        const PathBatch b = simulate_r_paths_p(std::get<PivParams>(spec.params), cfg);
        closes[0] = spec.s0;
        for (std::size_t k = 1; k <= steps; ++k) {
            closes[k] = closes[k - 1] * std::exp(b.paths(0, static_cast<Eigen::Index>(k)));
        }
        break;
    }
    case ModelKind::Bs: {
        const auto& p = std::get<BsParams>(spec.params);
        const PathBatch b = simulate_gbm_paths(p, spec.s0, p.drift_bs, cfg);
        for (std::size_t k = 0; k <= steps; ++k) {
            closes[k] = b.paths(0, static_cast<Eigen::Index>(k));
        }
        break;
    }
    case ModelKind::Heston: {
        const auto& p = std::get<HestonParams>(spec.params);
        const PathBatch b = simulate_heston_paths(p, spec.s0, p.drift_h, cfg);
        for (std::size_t k = 0; k <= steps; ++k) {
            closes[k] = b.paths(0, static_cast<Eigen::Index>(k));
        }
        break;
    }
    }
    return closes;
}

std::vector<double> model_prices(const SyntheticChainSpec& spec, double s0, int ttm_days,
                                 const std::vector<double>& strikes)
{
    const double ttm = ttm_days / 365.0;
    std::vector<double> out;
    switch (spec.model) {
    case ModelKind::Piv: {
        const auto& p = std::get<PivParams>(spec.params);
        for (double k : strikes) {
            out.push_back(price_call_piv_pde(p, ContractSpec{s0, k, ttm, spec.rate, 0.0}, spec.pde_grid).price);
        }
        break;
    }
    case ModelKind::Bs: {
        const auto& p = std::get<BsParams>(spec.params);
        for (double k : strikes) {
            out.push_back(price_call_bs(p.sigma_bs, ContractSpec{s0, k, ttm, spec.rate, 0.0}).price);
        }
        break;
    }
    case ModelKind::Heston:
        out = price_calls_heston(std::get<HestonParams>(spec.params), s0, spec.rate, ttm, strikes, spec.heston_quad);
        break;
    }
    return out;
}

}  // namespace

std::vector<OptionQuote> generate_synthetic_chain(const SyntheticChainSpec& spec, std::uint64_t seed)
{
    spec.validate();
    std::vector<Date> dates;
    for (Date d = spec.start_date; dates.size() < spec.n_dates; d = add_days(d, 1)) {
        const std::chrono::weekday wd{std::chrono::sys_days{d}};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) {
            dates.push_back(d);
        }
    }
    const std::vector<double> closes = underlying_path(spec, derive_seed(seed, 0));
    RngStream noise(seed, 1);

    std::vector<OptionQuote> out;
    for (std::size_t i = 0; i < dates.size(); ++i) {
        for (int ttm : spec.ttm_days) {
            std::vector<double> strikes;
            for (double m : spec.strike_multipliers) {
                strikes.push_back(closes[i] * m);
            }
            const std::vector<double> prices = model_prices(spec, closes[i], ttm, strikes);
            for (std::size_t k = 0; k < strikes.size(); ++k) {
                const double z_price = noise.normal();
                const double z_volume = noise.normal();
                const double price = prices[k] * std::exp(spec.noise * z_price);
                if (!(price >= spec.min_price)) {
                    continue;
                }
                OptionQuote q;
                q.trade_date = dates[i];
                q.expiry_date = add_days(dates[i], ttm);
                q.ttm_days = ttm;
                q.underlying_close = closes[i];
                q.strike = strikes[k];
                q.option_close = price;
                q.contracts_traded =
                    std::max<std::int64_t>(1, std::llround(spec.mean_contracts * std::exp(z_volume - 0.5)));
                q.lot_size = spec.lot_size;
                out.push_back(q);
            }
        }
    }
    return out;
}

TradingDays trading_days(const std::vector<OptionQuote>& quotes)
{
    std::map<Date, double> by_date;
    for (const auto& q : quotes) {
        by_date.emplace(q.trade_date, q.underlying_close);
    }
    TradingDays out;
    for (const auto& [d, s] : by_date) {
        out.dates.push_back(d);
        out.closes.push_back(s);
    }
    return out;
}

ReturnSeries log_returns(const std::vector<double>& closes)
{
    ReturnSeries s;
    s.values.resize(closes.size() < 2 ? 0 : static_cast<Eigen::Index>(closes.size() - 1));
    for (Eigen::Index k = 0; k < s.values.size(); ++k) {
        s.values[k] = std::log(closes[k + 1] / closes[k]);
    }
    return s;
}

}  // namespace piv
