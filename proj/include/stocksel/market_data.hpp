#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stocksel/date.hpp"

namespace stocksel {

/// Adjusted-close prices, rows = stocks (sorted by ticker), columns = trading days.
struct PricePanel {
    std::vector<std::string> tickers;
    std::map<std::string, std::string> sectors;
    std::vector<Date> dates;
    Eigen::MatrixXd prices;

    std::size_t n_stocks() const { return tickers.size(); }
    std::size_t n_days() const { return dates.size(); }
};

struct LoadResult {
    PricePanel panel;
    std::vector<std::string> dropped;   ///< tickers removed for gaps or bad prices
    std::vector<std::string> warnings;
};

/// Simple daily returns; dates[t] is the day the return was realised.
struct ReturnsPanel {
    std::vector<std::string> tickers;
    std::map<std::string, std::string> sectors;
    std::vector<Date> dates;
    Eigen::MatrixXd returns;

    std::size_t n_stocks() const { return tickers.size(); }
    std::size_t n_days() const { return dates.size(); }

    /// Row index of a ticker; throws ParameterError when absent.
    std::size_t index_of(const std::string& ticker) const;
    /// Panel restricted to the given tickers, in the given order.
    ReturnsPanel subset(const std::vector<std::string>& keep) const;
};

struct YearWindow {
    int year;
    std::size_t begin;  ///< first index into dates
    std::size_t end;    ///< one past the last index
};

struct TradingCalendar {
    std::vector<Date> dates;
    std::vector<YearWindow> year_windows;
    std::vector<std::size_t> quarter_starts;
    std::vector<std::size_t> month_starts;

    bool is_month_start(std::size_t idx) const;
    bool is_quarter_start(std::size_t idx) const;
};

TradingCalendar build_calendar(const std::vector<Date>& dates);

/// Optional date restriction applied before the completeness check: rows in [from, to).
struct DateRange {
    std::optional<Date> from;
    std::optional<Date> to;
};

/// Parses the price CSV (`date,T1,T2,...`; empty cell = missing).
LoadResult parse_prices(std::istream& in, bool drop_incomplete = true, const DateRange& range = {});
LoadResult load_prices(const std::string& path, bool drop_incomplete = true, const DateRange& range = {});

/// Reads a `ticker,sector` CSV.
std::map<std::string, std::string> load_sectors(const std::string& path);

void write_prices_csv(std::ostream& out, const PricePanel& panel);

ReturnsPanel compute_returns(const PricePanel& panel);

/// Returns restricted to dates in [start, end).
ReturnsPanel slice_window(const ReturnsPanel& rp, const Date& start, const Date& end);

/// Same as slice_window but by column index range [begin, end).
ReturnsPanel slice_columns(const ReturnsPanel& rp, std::size_t begin, std::size_t end);

struct SynthConfig {
    std::size_t n_stocks = 50;
    std::size_t n_days = 252;
    std::size_t n_factors = 3;
    std::uint64_t seed = 7;
    /// Multiplies every idiosyncratic term (noise and per-stock drift); 0 gives an exact factor model.
    double noise_scale = 1.0;
    double factor_vol = 0.01;
    double factor_drift = 0.0003;
    Date start{std::chrono::year{2012}, std::chrono::January, std::chrono::day{2}};
    /// Fraction of stocks that decouple from their factor at a random day and trend down afterwards.
    double distress_fraction = 0.0;
    double distress_drift = -0.004;
};

/// Factor-model returns: loadings * factors + idiosyncratic noise with per-stock scale.
/// Stock i belongs to factor group i % n_factors; its sector label is "F<group>".
ReturnsPanel synth_returns(const SynthConfig& cfg);
ReturnsPanel synth_returns(std::size_t n_stocks, std::size_t n_days, std::size_t n_factors,
                           std::uint64_t seed);

/// Prices compounded from 100 for every stock; first date is one weekday before the returns.
PricePanel synth_prices(const SynthConfig& cfg);

/// Group index of each stock in a synthetic panel (parsed from the sector label).
std::vector<int> factor_groups(const ReturnsPanel& rp);

}  // namespace stocksel
