#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "stocksel/backtest.hpp"

namespace stocksel {

/// CSV `date,value`.
void write_equity_csv(std::ostream& out, const EquityCurve& curve);

/// {strategy, years: [{year, return_pct, daily_std_pct, sharpe}], avg_yearly_return_pct,
///  aggregate_sharpe, ...}. Undefined Sharpe ratios are written as null.
nlohmann::json report_to_json(const PerformanceReport& report);

/// Standalone SVG line chart of portfolio value over time, one polyline per curve.
void write_svg_chart(std::ostream& out, const std::vector<EquityCurve>& curves, const std::string& title);

/// Writes to a temporary sibling file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace stocksel
