#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stocksel/allocation.hpp"
#include "stocksel/clustering.hpp"
#include "stocksel/market_data.hpp"
#include "stocksel/selection.hpp"

namespace stocksel {

enum class RebalanceFrequency { Monthly, None };
enum class ReclusterMode { Quarterly, Static, None };
enum class WeightScheme { Equal, MaxSharpe };

struct BacktestConfig {
    double initial_capital = 10000.0;
    RebalanceFrequency rebalance = RebalanceFrequency::Monthly;
    ReclusterMode recluster = ReclusterMode::None;
    WeightScheme weight_scheme = WeightScheme::Equal;
    Date start{};  ///< first simulated trading day is the first date >= start
    Date end{};    ///< exclusive
    std::map<int, double> risk_free;  ///< year -> annual rate (fraction)
    MaxSharpeOptions max_sharpe;
};

/// Positions immediately after a trade.
struct TradeRecord {
    Date date{};
    std::size_t day_index = 0;  ///< index into the returns panel
    double value_before = 0.0;
    double value_after = 0.0;
    std::map<std::string, double> holdings;  ///< ticker -> dollars; empty means all cash
    std::string reason;
};

struct EquityCurve {
    std::string strategy;
    std::vector<Date> dates;
    std::vector<double> values;
    std::vector<TradeRecord> trades;
    std::vector<std::string> warnings;
};

/// Target allocation issued by a strategy on a trade date. No tickers means hold cash.
struct Target {
    std::vector<std::string> tickers;
    Eigen::VectorXd weights;
    std::string reason;
};

/// Called for every simulated day; `first` is true on the opening day, where a target is mandatory.
using TargetFn = std::function<std::optional<Target>(std::size_t day_index, bool first)>;

/// Generic self-financing simulator: returns are applied at each close, then any trade
/// executes at that close. The opening day only establishes positions.
EquityCurve simulate(const ReturnsPanel& rp, std::size_t begin, std::size_t end, double initial_capital,
                     const TargetFn& target);

/// Index range [begin, end) of the simulation dates inside the panel.
std::pair<std::size_t, std::size_t> simulation_range(const ReturnsPanel& rp, const BacktestConfig& cfg);

/// Hold the given weights, resetting dollar amounts on each month's first trading day.
EquityCurve run_rebalance(const ReturnsPanel& rp, const TradingCalendar& cal, const PortfolioSpec& spec,
                          const WeightVector& weights, const BacktestConfig& cfg);

/// Buy and hold a single index series.
EquityCurve run_benchmark(const ReturnsPanel& index, const BacktestConfig& cfg);

struct StrategyResult {
    EquityCurve curve;
    std::vector<PortfolioSpec> portfolios;
    std::vector<WeightVector> weights;      ///< one per non-empty portfolio
    std::vector<QuarterModel> quarter_models;  ///< cluster strategies only
};

/// Rebuilds clusters each quarter from the previous quarter, liquidates and buys the new
/// portfolio at equal dollar weights; equal-weight monthly rebalancing in between.
/// cfg.recluster == Static reuses the opening quarter's clusters.
StrategyResult run_dynamic_clusters(const ReturnsPanel& rp, const TradingCalendar& cal, QuarterlyParams params,
                                    const BacktestConfig& cfg, std::size_t per_cluster = kDefaultPortfolioSize);

/// Picks a portfolio from the previous calendar year's returns.
using AnnualSelector = std::function<PortfolioSpec(const ReturnsPanel& training_year, int simulated_year)>;

/// Reselects at each year start (liquidate and rebuy), weights per cfg.weight_scheme from the
/// training year's moments, monthly rebalancing within the year.
StrategyResult run_annual_selection(const ReturnsPanel& rp, const TradingCalendar& cal, const AnnualSelector& select,
                                    const BacktestConfig& cfg);

struct YearMetrics {
    int year = 0;
    double return_pct = 0.0;
    double daily_std_pct = 0.0;
    double sharpe = 0.0;  ///< NaN when undefined (zero volatility with non-zero excess)
    std::size_t days = 0;
};

struct PerformanceReport {
    std::string strategy;
    std::vector<YearMetrics> years;
    double avg_yearly_return_pct = 0.0;
    double daily_std_pct = 0.0;
    double aggregate_sharpe = 0.0;
    double total_return_pct = 0.0;
    std::vector<std::string> warnings;
};

/// Annualised Sharpe of daily returns against a per-day risk-free series.
double annualised_sharpe(const std::vector<double>& daily, const std::vector<double>& daily_rf);

PerformanceReport compute_metrics(const EquityCurve& curve, const std::map<int, double>& risk_free);

}  // namespace stocksel
