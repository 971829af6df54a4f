#include "stocksel/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stocksel/errors.hpp"

namespace stocksel {

namespace {

constexpr double kZeroStd = 1e-12;

double rate_for(const std::map<int, double>& rf, int year, bool* missing = nullptr) {
    const auto it = rf.find(year);
    if (it == rf.end()) {
        if (missing) *missing = true;
        return 0.0;
    }
    return it->second;
}

}  // namespace

EquityCurve simulate(const ReturnsPanel& rp, std::size_t begin, std::size_t end, double initial_capital,
                     const TargetFn& target) {
    if (begin >= end || end > rp.n_days()) throw EmptyWindowError("empty simulation range");
    if (!(initial_capital > 0.0) || !std::isfinite(initial_capital)) {
        throw ParameterError("initial capital must be positive and finite");
    }
    EquityCurve curve;
    std::vector<Eigen::Index> rows;
    std::vector<double> holdings;
    double cash = 0.0;

    auto trade = [&](const Target& tg, std::size_t t, double value) {
        if (static_cast<std::size_t>(tg.weights.size()) != tg.tickers.size()) {
            throw ParameterError("target weights are not aligned with its tickers");
        }
        rows.clear();
        holdings.clear();
        cash = 0.0;
        TradeRecord rec;
        rec.date = rp.dates[t];
        rec.day_index = t;
        rec.value_before = value;
        rec.reason = tg.reason;
        if (tg.tickers.empty()) {
            cash = value;
        } else {
            for (std::size_t i = 0; i < tg.tickers.size(); ++i) {
                Eigen::Index row = 0;
                try {
                    row = static_cast<Eigen::Index>(rp.index_of(tg.tickers[i]));
                } catch (const ParameterError&) {
                    throw DataError("no returns for ticker '" + tg.tickers[i] + "' in the simulation panel");
                }
                rows.push_back(row);
                holdings.push_back(value * tg.weights(static_cast<Eigen::Index>(i)));
                rec.holdings[tg.tickers[i]] += holdings.back();
            }
        }
        double after = cash;
        for (double h : holdings) after += h;
        rec.value_after = after;
        curve.trades.push_back(std::move(rec));
    };

    for (std::size_t t = begin; t < end; ++t) {
        double value = cash;
        if (t == begin) {
            value = initial_capital;
            auto tg = target(t, true);
            if (!tg) throw ParameterError("strategy produced no opening target");
            trade(*tg, t, value);
        } else {
            for (std::size_t h = 0; h < rows.size(); ++h) {
                const double r = rp.returns(rows[h], static_cast<Eigen::Index>(t));
                if (!std::isfinite(r)) throw DataError("non-finite return for " + rp.tickers[static_cast<std::size_t>(rows[h])]);
                holdings[h] *= 1.0 + r;
                value += holdings[h];
            }
            if (auto tg = target(t, false)) trade(*tg, t, value);
        }
        curve.dates.push_back(rp.dates[t]);
        curve.values.push_back(value);
    }
    return curve;
}

std::pair<std::size_t, std::size_t> simulation_range(const ReturnsPanel& rp, const BacktestConfig& cfg) {
    const auto lo = std::lower_bound(rp.dates.begin(), rp.dates.end(), cfg.start);
    const auto hi = std::lower_bound(rp.dates.begin(), rp.dates.end(), cfg.end);
    if (lo >= hi) {
        throw EmptyWindowError("simulation range [" + format_date(cfg.start) + ", " + format_date(cfg.end) +
                               ") has no trading days");
    }
    return {static_cast<std::size_t>(lo - rp.dates.begin()), static_cast<std::size_t>(hi - rp.dates.begin())};
}

EquityCurve run_rebalance(const ReturnsPanel& rp, const TradingCalendar& cal, const PortfolioSpec& spec,
                          const WeightVector& weights, const BacktestConfig& cfg) {
    if (weights.tickers != spec.tickers) throw ParameterError("weights are not aligned with the portfolio");
    const auto [begin, end] = simulation_range(rp, cfg);
    Target tg{spec.tickers, weights.weights, "open"};
    auto curve = simulate(rp, begin, end, cfg.initial_capital, [&](std::size_t t, bool first) -> std::optional<Target> {
        if (first) return tg;
        if (cfg.rebalance == RebalanceFrequency::Monthly && cal.is_month_start(t)) {
            return Target{tg.tickers, tg.weights, "monthly rebalance"};
        }
        return std::nullopt;
    });
    curve.strategy = spec.strategy_tag;
    return curve;
}

EquityCurve run_benchmark(const ReturnsPanel& index, const BacktestConfig& cfg) {
    if (index.n_stocks() != 1) throw ParameterError("benchmark panel must hold exactly one series");
    const auto [begin, end] = simulation_range(index, cfg);
    Target tg{index.tickers, Eigen::VectorXd::Ones(1), "buy and hold"};
    auto curve = simulate(index, begin, end, cfg.initial_capital,
                          [&](std::size_t, bool first) -> std::optional<Target> {
                              if (first) return tg;
                              return std::nullopt;
                          });
    curve.strategy = "benchmark";
    return curve;
}

StrategyResult run_dynamic_clusters(const ReturnsPanel& rp, const TradingCalendar& cal, QuarterlyParams params,
                                    const BacktestConfig& cfg, std::size_t per_cluster) {
    params.static_clusters = false;
    const auto models = quarterly_clusters(rp, cal, params);
    const auto [begin, end] = simulation_range(rp, cfg);
    if (models.front().start_index > begin) {
        throw InsufficientHistoryError("simulation starts " + format_date(rp.dates[begin]) +
                                       " before the first clustered quarter " + format_date(models.front().quarter_start));
    }
    auto model_at = [&](std::size_t t) -> const QuarterModel& {
        const QuarterModel* found = &models.front();
        for (const auto& qm : models)
            if (qm.start_index <= t) found = &qm;
        return *found;
    };
    const bool is_static = cfg.recluster == ReclusterMode::Static;
    const QuarterModel& opening = model_at(begin);
    const std::string tag = to_string(params.method) + (is_static ? "_static" : "");

    StrategyResult result;
    std::vector<std::string> current;
    auto equal = [](const std::vector<std::string>& tickers, std::string reason) {
        Target tg;
        tg.tickers = tickers;
        tg.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(tickers.size()),
                                               tickers.empty() ? 0.0 : 1.0 / static_cast<double>(tickers.size()));
        tg.reason = std::move(reason);
        return tg;
    };

    result.curve = simulate(rp, begin, end, cfg.initial_capital, [&](std::size_t t, bool first) -> std::optional<Target> {
        const bool quarter = cal.is_quarter_start(t);
        if (first || quarter) {
            const QuarterModel& qm = is_static ? opening : model_at(t);
            PortfolioSpec spec = params.method == ClusterMethod::KMeans ? select_kmeans_benchmark(qm.model)
                                                                        : select_cluster_nearest(qm.model, per_cluster);
            spec.as_of = rp.dates[t];
            spec.strategy_tag = tag;
            current = spec.tickers;
            result.portfolios.push_back(spec);
            if (!current.empty()) result.weights.push_back(equal_weights(current));
            return equal(current, first ? "open" : "quarterly recluster");
        }
        if (cfg.rebalance == RebalanceFrequency::Monthly && cal.is_month_start(t) && !current.empty()) {
            return equal(current, "monthly rebalance");
        }
        return std::nullopt;
    });
    for (const auto& p : result.portfolios)
        for (const auto& w : p.warnings) result.curve.warnings.push_back(format_date(p.as_of) + ": " + w + "; holding cash");
    result.curve.strategy = tag;
    for (const auto& qm : models) {
        if (qm.start_index >= begin && qm.start_index < end) result.quarter_models.push_back(qm);
    }
    if (result.quarter_models.empty() || result.quarter_models.front().start_index != begin) {
        result.quarter_models.insert(result.quarter_models.begin(), opening);
    }
    if (is_static) result.quarter_models.resize(1);
    return result;
}

StrategyResult run_annual_selection(const ReturnsPanel& rp, const TradingCalendar& cal, const AnnualSelector& select,
                                    const BacktestConfig& cfg) {
    const auto [begin, end] = simulation_range(rp, cfg);
    StrategyResult result;
    std::vector<std::string> warnings;
    Target current;
    auto year_window = [&](int year) -> const YearWindow* {
        for (const auto& w : cal.year_windows)
            if (w.year == year) return &w;
        return nullptr;
    };
    auto choose = [&](std::size_t t) {
        const int year = year_of(rp.dates[t]);
        const YearWindow* prior = year_window(year - 1);
        if (!prior) throw InsufficientHistoryError("no returns for training year " + std::to_string(year - 1));
        const ReturnsPanel training = slice_columns(rp, prior->begin, prior->end);
        PortfolioSpec spec = select(training, year);
        spec.as_of = rp.dates[t];
        WeightVector w;
        if (spec.tickers.empty()) {
            warnings.push_back(format_date(spec.as_of) + ": empty portfolio; holding cash");
        } else if (cfg.weight_scheme == WeightScheme::MaxSharpe) {
            bool missing = false;
            const double rf = rate_for(cfg.risk_free, year - 1, &missing);
            try {
                w = max_sharpe(estimate_moments(training, spec.tickers), rf, cfg.max_sharpe);
            } catch (const InfeasibleTangencyError& e) {
                warnings.push_back(format_date(spec.as_of) + ": " + e.what() + "; using equal weights");
                w = equal_weights(spec.tickers);
            } catch (const NumericalError& e) {
                warnings.push_back(format_date(spec.as_of) + ": " + e.what() + "; using equal weights");
                w = equal_weights(spec.tickers);
            }
        } else {
            w = equal_weights(spec.tickers);
        }
        if (w.tickers.empty()) w.weights.resize(0);
        result.portfolios.push_back(spec);
        if (!w.tickers.empty()) result.weights.push_back(w);
        current = Target{w.tickers, w.weights, "annual reselection"};
        return current;
    };

    result.curve = simulate(rp, begin, end, cfg.initial_capital, [&](std::size_t t, bool first) -> std::optional<Target> {
        const bool new_year = year_of(rp.dates[t]) != year_of(rp.dates[t - (first ? 0 : 1)]);
        if (first || new_year) {
            Target tg = choose(t);
            if (first) tg.reason = "open";
            return tg;
        }
        if (cfg.rebalance == RebalanceFrequency::Monthly && cal.is_month_start(t) && !current.tickers.empty()) {
            return Target{current.tickers, current.weights, "monthly rebalance"};
        }
        return std::nullopt;
    });
    result.curve.warnings = warnings;
    if (!result.portfolios.empty()) result.curve.strategy = result.portfolios.front().strategy_tag;
    return result;
}

double annualised_sharpe(const std::vector<double>& daily, const std::vector<double>& daily_rf) {
    if (daily.size() != daily_rf.size()) throw ParameterError("return and risk-free series differ in length");
    if (daily.size() < 2) return 0.0;
    const double n = static_cast<double>(daily.size());
    double mean = 0.0, mean_excess = 0.0;
    for (std::size_t i = 0; i < daily.size(); ++i) {
        mean += daily[i];
        mean_excess += daily[i] - daily_rf[i];
    }
    mean /= n;
    mean_excess /= n;
    double ss = 0.0;
    for (double r : daily) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd <= kZeroStd) {
        return std::abs(mean_excess) <= kZeroStd ? 0.0 : std::numeric_limits<double>::quiet_NaN();
    }
    return mean_excess * kTradingDaysPerYear / (sd * std::sqrt(kTradingDaysPerYear));
}

PerformanceReport compute_metrics(const EquityCurve& curve, const std::map<int, double>& risk_free) {
    if (curve.values.empty() || curve.values.size() != curve.dates.size()) {
        throw ParameterError("equity curve is empty or malformed");
    }
    PerformanceReport rep;
    rep.strategy = curve.strategy;
    std::vector<double> all_daily, all_rf;
    std::map<int, std::pair<std::vector<double>, std::vector<double>>> by_year;
    std::map<int, std::pair<double, double>> year_bounds;  // start value, end value

    year_bounds[year_of(curve.dates.front())] = {curve.values.front(), curve.values.front()};
    for (std::size_t t = 1; t < curve.values.size(); ++t) {
        const int year = year_of(curve.dates[t]);
        const double rf_day = rate_for(risk_free, year) / kTradingDaysPerYear;
        const double r = curve.values[t] / curve.values[t - 1] - 1.0;
        all_daily.push_back(r);
        all_rf.push_back(rf_day);
        by_year[year].first.push_back(r);
        by_year[year].second.push_back(rf_day);
        auto it = year_bounds.find(year);
        if (it == year_bounds.end()) year_bounds[year] = {curve.values[t - 1], curve.values[t]};
        else it->second.second = curve.values[t];
    }
    for (const auto& [year, bounds] : year_bounds) {
        if (!risk_free.count(year)) rep.warnings.push_back("no risk-free rate for " + std::to_string(year) + "; using 0");
    }

    auto std_pct = [](const std::vector<double>& xs) {
        if (xs.size() < 2) return 0.0;
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        return 100.0 * std::sqrt(ss / static_cast<double>(xs.size() - 1));
    };

    double sum_returns = 0.0;
    for (const auto& [year, bounds] : year_bounds) {
        YearMetrics ym;
        ym.year = year;
        ym.return_pct = 100.0 * (bounds.second / bounds.first - 1.0);
        const auto it = by_year.find(year);
        if (it != by_year.end()) {
            ym.days = it->second.first.size();
            ym.daily_std_pct = std_pct(it->second.first);
            ym.sharpe = annualised_sharpe(it->second.first, it->second.second);
        }
        sum_returns += ym.return_pct;
        rep.years.push_back(ym);
    }
    rep.avg_yearly_return_pct = sum_returns / static_cast<double>(rep.years.size());
    rep.daily_std_pct = std_pct(all_daily);
    rep.aggregate_sharpe = annualised_sharpe(all_daily, all_rf);
    rep.total_return_pct = 100.0 * (curve.values.back() / curve.values.front() - 1.0);
    return rep;
}

}  // namespace stocksel
