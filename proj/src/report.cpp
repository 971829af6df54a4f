#include "stocksel/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "stocksel/errors.hpp"

namespace stocksel {

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

void write_equity_csv(std::ostream& out, const EquityCurve& curve) {
    out << "date,value\n";
    const auto old = out.precision(17);
    for (std::size_t i = 0; i < curve.values.size(); ++i) out << format_date(curve.dates[i]) << ',' << curve.values[i] << '\n';
    out.precision(old);
}

nlohmann::json report_to_json(const PerformanceReport& report) {
    nlohmann::json j;
    j["strategy"] = report.strategy;
    j["years"] = nlohmann::json::array();
    for (const auto& y : report.years) {
        j["years"].push_back({{"year", y.year},
                              {"return_pct", number_or_null(y.return_pct)},
                              {"daily_std_pct", number_or_null(y.daily_std_pct)},
                              {"sharpe", number_or_null(y.sharpe)}});
    }
    j["avg_yearly_return_pct"] = number_or_null(report.avg_yearly_return_pct);
    j["aggregate_sharpe"] = number_or_null(report.aggregate_sharpe);
    j["daily_std_pct"] = number_or_null(report.daily_std_pct);
    j["total_return_pct"] = number_or_null(report.total_return_pct);
    j["warnings"] = report.warnings;
    return j;
}

void write_svg_chart(std::ostream& out, const std::vector<EquityCurve>& curves, const std::string& title) {
    constexpr double width = 960, height = 540, left = 70, right = 200, top = 40, bottom = 50;
    static constexpr const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                              "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    double vmin = INFINITY, vmax = -INFINITY;
    long dmin = 0, dmax = 0;
    bool any = false;
    for (const auto& c : curves) {
        for (std::size_t i = 0; i < c.values.size(); ++i) {
            const long day = std::chrono::sys_days{c.dates[i]}.time_since_epoch().count();
            if (!any) { dmin = dmax = day; any = true; }
            dmin = std::min(dmin, day);
            dmax = std::max(dmax, day);
            vmin = std::min(vmin, c.values[i]);
            vmax = std::max(vmax, c.values[i]);
        }
    }
    if (!any) { vmin = 0; vmax = 1; }
    if (vmax <= vmin) vmax = vmin + 1.0;
    if (dmax <= dmin) dmax = dmin + 1;
    const double pw = width - left - right, ph = height - top - bottom;
    auto x_of = [&](long day) { return left + pw * static_cast<double>(day - dmin) / static_cast<double>(dmax - dmin); };
    auto y_of = [&](double v) { return top + ph * (1.0 - (v - vmin) / (vmax - vmin)); };
    char buf[128];

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << left << "\" y=\"24\" font-size=\"16\">" << xml_escape(title) << "</text>\n";
    out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double v = vmin + (vmax - vmin) * tick / 4.0;
        std::snprintf(buf, sizeof buf, "%.0f", v);
        out << "<text x=\"" << left - 6 << "\" y=\"" << y_of(v) + 4 << "\" text-anchor=\"end\">" << buf << "</text>\n";
    }
    if (any) {
        const Date first{std::chrono::sys_days{std::chrono::days{dmin}}};
        const Date last{std::chrono::sys_days{std::chrono::days{dmax}}};
        out << "<text x=\"" << left << "\" y=\"" << height - bottom + 18 << "\">" << format_date(first) << "</text>\n";
        out << "<text x=\"" << left + pw << "\" y=\"" << height - bottom + 18 << "\" text-anchor=\"end\">"
            << format_date(last) << "</text>\n";
    }
    for (std::size_t c = 0; c < curves.size(); ++c) {
        const char* colour = palette[c % (sizeof palette / sizeof palette[0])];
        out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < curves[c].values.size(); ++i) {
            const long day = std::chrono::sys_days{curves[c].dates[i]}.time_since_epoch().count();
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x_of(day), y_of(curves[c].values[i]));
            out << buf;
        }
        out << "\"/>\n";
        const double ly = top + 14.0 * static_cast<double>(c) + 10.0;
        out << "<line x1=\"" << width - right + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << width - right + 30
            << "\" y2=\"" << ly - 4 << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << width - right + 36 << "\" y=\"" << ly << "\">" << xml_escape(curves[c].strategy)
            << "</text>\n";
    }
    out << "</svg>\n";
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write '" + tmp.string() + "'");
        out << content;
        if (!out) throw InputError("failed writing '" + tmp.string() + "'");
    }
    fs::rename(tmp, target);
}

}  // namespace stocksel
