#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stocksel/allocation.hpp"
#include "stocksel/backtest.hpp"
#include "stocksel/selection.hpp"
#include "stocksel/errors.hpp"
#include "stocksel/market_data.hpp"
#include "stocksel/report.hpp"

using namespace stocksel;

namespace {

Date d(int y, unsigned m, unsigned dd) { return Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{dd}}; }

ReturnsPanel make_panel(const std::vector<std::string>& tickers, const std::vector<Date>& dates,
                        const std::vector<std::vector<double>>& by_day) {
    ReturnsPanel rp;
    rp.tickers = tickers;
    rp.dates = dates;
    rp.returns.resize(static_cast<Eigen::Index>(tickers.size()), static_cast<Eigen::Index>(dates.size()));
    for (std::size_t t = 0; t < dates.size(); ++t)
        for (std::size_t i = 0; i < tickers.size(); ++i)
            rp.returns(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = by_day[t][i];
    return rp;
}

BacktestConfig config_for(const ReturnsPanel& rp, double capital = 1000.0) {
    BacktestConfig cfg;
    cfg.initial_capital = capital;
    cfg.start = rp.dates.front();
    cfg.end = d(2100, 1, 1);
    return cfg;
}

PortfolioSpec spec_of(std::vector<std::string> tickers) {
    PortfolioSpec s;
    s.tickers = std::move(tickers);
    s.strategy_tag = "test";
    return s;
}

EquityCurve curve_of(const std::vector<Date>& dates, const std::vector<double>& values) {
    EquityCurve c;
    c.strategy = "fixture";
    c.dates = dates;
    c.values = values;
    return c;
}

void check_self_financing(const EquityCurve& curve) {
    for (const auto& tr : curve.trades) {
        CHECK(std::abs(tr.value_after - tr.value_before) <= 1e-9 * tr.value_before);
        double held = 0.0;
        for (const auto& [t, v] : tr.holdings) held += v;
        if (!tr.holdings.empty()) CHECK(std::abs(held - tr.value_after) <= 1e-9 * tr.value_after);
    }
}

}  // namespace

TEST_SUITE("backtest") {

TEST_CASE("single stock curve is cumulative compounding and rebalancing is a no-op") {
    const auto rp = synth_returns(1, 300, 1, 4);
    const auto cal = build_calendar(rp.dates);
    auto cfg = config_for(rp);
    const auto monthly = run_rebalance(rp, cal, spec_of(rp.tickers), equal_weights(rp.tickers), cfg);
    cfg.rebalance = RebalanceFrequency::None;
    const auto hold = run_rebalance(rp, cal, spec_of(rp.tickers), equal_weights(rp.tickers), cfg);
    CHECK(monthly.values == hold.values);
    double v = 1000.0;
    CHECK(monthly.values[0] == v);
    for (std::size_t t = 1; t < rp.n_days(); ++t) {
        v *= 1.0 + rp.returns(0, static_cast<Eigen::Index>(t));
        CHECK(monthly.values[t] == doctest::Approx(v).epsilon(1e-13));
    }
}

TEST_CASE("offsetting returns cancel in an equal-weight portfolio") {
    const auto rp = make_panel({"A", "B"}, {d(2021, 3, 1), d(2021, 3, 2)}, {{0.0, 0.0}, {0.1, -0.1}});
    const auto curve = run_rebalance(rp, build_calendar(rp.dates), spec_of({"A", "B"}), equal_weights({"A", "B"}),
                                     config_for(rp));
    CHECK(curve.values[1] == 1000.0);
}

TEST_CASE("three-month two-stock ledger") {
    // Positions are established at the close of the first day, so its return is not earned.
    // Each later day applies returns, then trades back to 50/50 on the first trading day of a month.
    //   2021-12-31  open          A 500        B 500        = 1000
    //   2022-01-03  (+10%, 0%)    A 550        B 500        = 1050      -> 525 / 525
    //   2022-02-01  (0%, +10%)    A 525        B 577.5      = 1102.5    -> 551.25 / 551.25
    //   2022-02-02  (-10%, +20%)  A 496.125    B 661.5      = 1157.625
    //   2022-03-01  (+5%, +5%)    A 520.93125  B 694.575    = 1215.50625 -> 607.753125 each
    //   2022-03-02  (0%, -50%)    A 607.753125 B 303.8765625 = 911.6296875
    const auto rp = make_panel({"A", "B"},
                               {d(2021, 12, 31), d(2022, 1, 3), d(2022, 2, 1), d(2022, 2, 2), d(2022, 3, 1), d(2022, 3, 2)},
                               {{0.3, -0.2}, {0.1, 0.0}, {0.0, 0.1}, {-0.1, 0.2}, {0.05, 0.05}, {0.0, -0.5}});
    const auto curve = run_rebalance(rp, build_calendar(rp.dates), spec_of({"A", "B"}), equal_weights({"A", "B"}),
                                     config_for(rp));
    const std::vector<double> ledger = {1000, 1050, 1102.5, 1157.625, 1215.50625, 911.6296875};
    REQUIRE(curve.values.size() == ledger.size());
    for (std::size_t t = 0; t < ledger.size(); ++t) CHECK(std::abs(curve.values[t] / ledger[t] - 1.0) < 1e-9);
    REQUIRE(curve.trades.size() == 4);  // open + three month starts
    CHECK(curve.trades[1].holdings.at("A") == doctest::Approx(525.0));
    check_self_financing(curve);

    // Starting on 2022-01-03 instead: the first day's +10% is not earned.
    auto cfg = config_for(rp);
    cfg.start = d(2022, 1, 3);
    const auto later = run_rebalance(rp, build_calendar(rp.dates), spec_of({"A", "B"}), equal_weights({"A", "B"}), cfg);
    CHECK(std::abs(later.values.back() / 868.21875 - 1.0) < 1e-9);
}

TEST_CASE("day after a rebalance returns the constituent mean") {
    const auto rp = synth_returns(6, 200, 2, 3);
    const auto cal = build_calendar(rp.dates);
    const auto curve = run_rebalance(rp, cal, spec_of(rp.tickers), equal_weights(rp.tickers), config_for(rp));
    for (std::size_t t = 1; t + 1 < rp.n_days(); ++t) {
        if (!cal.is_month_start(t)) continue;
        const double port = curve.values[t + 1] / curve.values[t] - 1.0;
        CHECK(std::abs(port - rp.returns.col(static_cast<Eigen::Index>(t + 1)).mean()) < 1e-14);
    }
}

TEST_CASE("benchmark is buy and hold of the index") {
    const auto idx = make_panel({"IDX"}, {d(2021, 1, 4), d(2021, 1, 5), d(2021, 2, 1)}, {{0.5}, {0.1}, {-0.2}});
    const auto curve = run_benchmark(idx, config_for(idx, 100.0));
    REQUIRE(curve.values.size() == 3);
    CHECK(curve.values[0] == 100.0);
    CHECK(curve.values[1] == doctest::Approx(110.0).epsilon(1e-14));
    CHECK(curve.values[2] == doctest::Approx(88.0).epsilon(1e-14));
    CHECK(curve.trades.size() == 1);

    const auto flat = make_panel({"IDX"}, {d(2021, 1, 4), d(2021, 1, 5)}, {{0.0}, {0.0}});
    CHECK(run_benchmark(flat, config_for(flat)).values == std::vector<double>{1000.0, 1000.0});
    CHECK_THROWS_AS(run_benchmark(synth_returns(2, 5, 1, 1), config_for(flat)), ParameterError);
}

TEST_CASE("simulation error paths") {
    const auto rp = synth_returns(3, 30, 1, 2);
    const auto cal = build_calendar(rp.dates);
    auto cfg = config_for(rp);
    CHECK_THROWS_AS(run_rebalance(rp, cal, spec_of({"ZZZ"}), equal_weights({"ZZZ"}), cfg), DataError);
    CHECK_THROWS_AS(run_rebalance(rp, cal, spec_of({rp.tickers[0]}), equal_weights({rp.tickers[1]}), cfg),
                    ParameterError);
    cfg.start = d(2100, 1, 1);
    cfg.end = d(2101, 1, 1);
    CHECK_THROWS_AS(simulation_range(rp, cfg), EmptyWindowError);
    CHECK_THROWS_AS(simulate(rp, 0, 5, -1.0, [](std::size_t, bool) { return std::optional<Target>{}; }),
                    ParameterError);
    CHECK_THROWS_AS(simulate(rp, 0, 5, 1.0, [](std::size_t, bool) { return std::optional<Target>{}; }),
                    ParameterError);
}

TEST_CASE("empty target holds cash") {
    const auto rp = synth_returns(3, 30, 1, 2);
    const auto curve = simulate(rp, 0, 30, 500.0, [](std::size_t, bool first) -> std::optional<Target> {
        if (first) return Target{};
        return std::nullopt;
    });
    for (double v : curve.values) CHECK(v == 500.0);
}

TEST_CASE("annual selection trains on the prior year and stays self-financing") {
    SynthConfig sc;
    sc.n_stocks = 30;
    sc.n_days = 6 * 261;
    const auto rp = synth_returns(sc);
    const auto cal = build_calendar(rp.dates);
    auto cfg = config_for(rp, 10000.0);
    cfg.start = d(2013, 1, 1);
    cfg.end = d(2018, 1, 1);
    cfg.risk_free = {{2012, 0.01}, {2013, 0.01}, {2014, 0.01}, {2015, 0.01}, {2016, 0.01}, {2017, 0.01}};
    std::vector<std::pair<int, int>> seen;
    auto selector = [&](const ReturnsPanel& training, int year) {
        seen.emplace_back(year_of(training.dates.front()), year);
        CHECK(year_of(training.dates.back()) == year - 1);
        return select_vol(training, Direction::Min, 5);
    };
    for (auto scheme : {WeightScheme::Equal, WeightScheme::MaxSharpe}) {
        seen.clear();
        cfg.weight_scheme = scheme;
        const auto result = run_annual_selection(rp, cal, selector, cfg);
        REQUIRE(seen.size() == 5);
        for (const auto& [train, sim] : seen) CHECK(train == sim - 1);
        CHECK(result.portfolios.size() == 5);
        CHECK(result.weights.size() == 5);
        check_self_financing(result.curve);
        for (const auto& tr : result.curve.trades) {
            const auto pos = static_cast<std::size_t>(
                std::find(result.curve.dates.begin(), result.curve.dates.end(), tr.date) - result.curve.dates.begin());
            CHECK(std::abs(result.curve.values[pos] - tr.value_before) <= 1e-9 * tr.value_before);
        }
        for (double v : result.curve.values) CHECK((v > 0.0 && std::isfinite(v)));
    }
}

TEST_CASE("max-Sharpe falls back to equal weights when no stock beats the risk-free rate") {
    const auto rp = synth_returns(10, 2 * 261, 2, 9);
    const auto cal = build_calendar(rp.dates);
    auto cfg = config_for(rp);
    cfg.start = d(2013, 1, 1);
    cfg.end = d(2014, 1, 1);
    cfg.weight_scheme = WeightScheme::MaxSharpe;
    cfg.risk_free = {{2012, 50.0}, {2013, 0.0}};
    const auto result = run_annual_selection(
        rp, cal, [](const ReturnsPanel& t, int) { return select_vol(t, Direction::Max, 4); }, cfg);
    REQUIRE(result.weights.size() == 1);
    CHECK(result.weights[0].weights(0) == 0.25);
    CHECK_FALSE(result.curve.warnings.empty());
}

TEST_CASE("cluster strategy with no qualifying cluster holds cash") {
    const auto rp = synth_returns(12, 300, 3, 5);
    const auto cal = build_calendar(rp.dates);
    auto cfg = config_for(rp);
    cfg.start = d(2012, 4, 1);
    cfg.recluster = ReclusterMode::Quarterly;
    QuarterlyParams params;
    params.method = ClusterMethod::Ward;
    params.ward_clusters = 12;
    const auto result = run_dynamic_clusters(rp, cal, params, cfg, 10);
    for (double v : result.curve.values) CHECK(v == 1000.0);
    CHECK_FALSE(result.curve.warnings.empty());
    CHECK(result.weights.empty());
}

TEST_CASE("static clusters keep the opening portfolio") {
    const auto rp = synth_returns(30, 520, 3, 5);
    const auto cal = build_calendar(rp.dates);
    auto cfg = config_for(rp);
    cfg.start = d(2012, 4, 1);
    cfg.recluster = ReclusterMode::Static;
    QuarterlyParams params;
    params.method = ClusterMethod::KMeans;
    params.space = EmbeddingSpace::Pca;
    params.kmeans_k = 5;
    const auto result = run_dynamic_clusters(rp, cal, params, cfg);
    REQUIRE(result.portfolios.size() > 3);
    for (const auto& p : result.portfolios) CHECK(p.tickers == result.portfolios.front().tickers);
    CHECK(result.quarter_models.size() == 1);
    CHECK(result.curve.strategy == "kmeans_static");
    check_self_financing(result.curve);

    cfg.recluster = ReclusterMode::Quarterly;
    const auto dynamic = run_dynamic_clusters(rp, cal, params, cfg);
    CHECK(dynamic.quarter_models.size() == dynamic.portfolios.size());
    check_self_financing(dynamic.curve);

    cfg.start = rp.dates.front();
    CHECK_THROWS_AS(run_dynamic_clusters(rp, cal, params, cfg), InsufficientHistoryError);
}

TEST_CASE("max-volatility portfolios are more volatile than min-volatility ones") {
    SynthConfig sc;
    sc.n_stocks = 50;
    sc.n_days = 5 * 261;
    const auto rp = synth_returns(sc);
    const auto cal = build_calendar(rp.dates);
    auto cfg = config_for(rp, 10000.0);
    cfg.start = d(2013, 1, 1);
    auto run = [&](Direction dir) {
        const auto r = run_annual_selection(
            rp, cal, [&](const ReturnsPanel& t, int) { return select_vol(t, dir, 10); }, cfg);
        return compute_metrics(r.curve, {}).daily_std_pct;
    };
    CHECK(run(Direction::Max) > run(Direction::Min));
}

TEST_CASE("metrics from an equity curve") {
    SUBCASE("doubling in one year is a 100% return") {
        const auto rep = compute_metrics(curve_of({d(2020, 1, 2), d(2020, 6, 1), d(2020, 12, 31)}, {100, 150, 200}), {{2020, 0.0}});
        REQUIRE(rep.years.size() == 1);
        CHECK(rep.years[0].return_pct == doctest::Approx(100.0));
        CHECK(rep.total_return_pct == doctest::Approx(100.0));
        CHECK(rep.warnings.empty());
    }
    SUBCASE("constant return equal to the risk-free rate has zero Sharpe") {
        const double r = 0.0002;
        std::vector<Date> dates;
        std::vector<double> values;
        Date day = d(2020, 1, 2);
        double v = 1000.0;
        for (int t = 0; t < 200; ++t) {
            dates.push_back(day);
            values.push_back(v);
            v *= 1.0 + r;
            day = next_weekday(day);
        }
        const auto rep = compute_metrics(curve_of(dates, values), {{2020, 252 * r}});
        CHECK(std::abs(rep.aggregate_sharpe) < 1e-9);
        CHECK(std::abs(rep.years[0].sharpe) < 1e-9);
    }
    SUBCASE("zero volatility with non-zero excess is undefined") {
        const auto rep = compute_metrics(curve_of({d(2020, 1, 2), d(2020, 1, 3), d(2020, 1, 6)}, {1, 1, 1}), {{2020, 0.05}});
        CHECK(std::isnan(rep.aggregate_sharpe));
        std::ostringstream out;
        out << report_to_json(rep).dump();
        CHECK(out.str().find("\"aggregate_sharpe\":null") != std::string::npos);
    }
    SUBCASE("missing risk-free years are flagged") {
        const auto rep = compute_metrics(curve_of({d(2020, 1, 2), d(2021, 1, 4)}, {1, 2}), {{2020, 0.01}});
        REQUIRE(rep.warnings.size() == 1);
        CHECK(rep.warnings[0].find("2021") != std::string::npos);
    }
    CHECK_THROWS_AS(compute_metrics(EquityCurve{}, {}), ParameterError);
}

TEST_CASE("metrics match a single-pass recomputation from the curve") {
    const auto rp = synth_returns(8, 3 * 261, 2, 12);
    const auto cal = build_calendar(rp.dates);
    auto cfg = config_for(rp);
    const auto curve = run_rebalance(rp, cal, spec_of(rp.tickers), equal_weights(rp.tickers), cfg);
    const std::map<int, double> rf = {{2012, 0.02}, {2013, 0.01}, {2014, 0.03}, {2015, 0.0}};
    const auto rep = compute_metrics(curve, rf);

    // Welford accumulators per year and overall, in one pass.
    struct Acc {
        double n = 0, mean = 0, m2 = 0, excess = 0, start = 0, end = 0;
        void add(double x, double rfd) {
            n += 1;
            const double delta = x - mean;
            mean += delta / n;
            m2 += delta * (x - mean);
            excess += x - rfd;
        }
        // Fewer than two daily returns carry no dispersion information: reported as 0.
        double sd() const { return n < 2 ? 0.0 : std::sqrt(m2 / (n - 1)); }
        double sharpe() const { return n < 2 ? 0.0 : (excess / n) * 252 / (sd() * std::sqrt(252.0)); }
    };
    std::map<int, Acc> years;
    Acc all;
    years[year_of(curve.dates[0])].start = curve.values[0];
    for (std::size_t t = 1; t < curve.values.size(); ++t) {
        const int y = year_of(curve.dates[t]);
        const double r = curve.values[t] / curve.values[t - 1] - 1;
        if (!years.count(y)) years[y].start = curve.values[t - 1];
        years[y].add(r, rf.at(y) / 252);
        years[y].end = curve.values[t];
        all.add(r, rf.at(y) / 252);
    }
    REQUIRE(rep.years.size() == years.size());
    double avg = 0;
    for (const auto& ym : rep.years) {
        const Acc& a = years.at(ym.year);
        CHECK(ym.return_pct == doctest::Approx(100 * (a.end / a.start - 1)).epsilon(1e-12));
        CHECK(ym.daily_std_pct == doctest::Approx(100 * a.sd()).epsilon(1e-10));
        CHECK(ym.sharpe == doctest::Approx(a.sharpe()).epsilon(1e-10));
        avg += 100 * (a.end / a.start - 1);
    }
    CHECK(rep.avg_yearly_return_pct == doctest::Approx(avg / static_cast<double>(years.size())).epsilon(1e-12));
    CHECK(rep.daily_std_pct == doctest::Approx(100 * all.sd()).epsilon(1e-10));
    CHECK(rep.aggregate_sharpe == doctest::Approx(all.sharpe()).epsilon(1e-10));
    // recomputing from the same curve is exact
    const auto again = compute_metrics(curve, rf);
    CHECK(again.aggregate_sharpe == rep.aggregate_sharpe);
    CHECK(again.daily_std_pct == rep.daily_std_pct);
}

TEST_CASE("report writers") {
    const auto c = curve_of({d(2020, 1, 2), d(2020, 1, 3)}, {100, 101.5});
    std::ostringstream csv;
    write_equity_csv(csv, c);
    CHECK(csv.str() == "date,value\n2020-01-02,100\n2020-01-03,101.5\n");
    std::ostringstream svg;
    write_svg_chart(svg, {c}, "t");
    CHECK(svg.str().find("<svg") != std::string::npos);
    CHECK(svg.str().find("fixture") != std::string::npos);
    const auto j = report_to_json(compute_metrics(c, {{2020, 0.0}}));
    for (const char* key : {"strategy", "years", "avg_yearly_return_pct", "aggregate_sharpe", "daily_std_pct"})
        CHECK(j.contains(key));
}

}
