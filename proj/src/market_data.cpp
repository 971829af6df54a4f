#include "stocksel/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "stocksel/errors.hpp"

namespace stocksel {

std::size_t ReturnsPanel::index_of(const std::string& ticker) const {
    const auto it = std::find(tickers.begin(), tickers.end(), ticker);
    if (it == tickers.end()) throw ParameterError("ticker '" + ticker + "' not in panel");
    return static_cast<std::size_t>(it - tickers.begin());
}

ReturnsPanel ReturnsPanel::subset(const std::vector<std::string>& keep) const {
    ReturnsPanel out;
    out.tickers = keep;
    out.dates = dates;
    out.returns.resize(static_cast<Eigen::Index>(keep.size()), returns.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        out.returns.row(static_cast<Eigen::Index>(i)) =
            returns.row(static_cast<Eigen::Index>(index_of(keep[i])));
        if (auto it = sectors.find(keep[i]); it != sectors.end()) out.sectors.insert(*it);
    }
    return out;
}

bool TradingCalendar::is_month_start(std::size_t idx) const {
    return std::binary_search(month_starts.begin(), month_starts.end(), idx);
}

bool TradingCalendar::is_quarter_start(std::size_t idx) const {
    return std::binary_search(quarter_starts.begin(), quarter_starts.end(), idx);
}

TradingCalendar build_calendar(const std::vector<Date>& dates) {
    TradingCalendar cal;
    cal.dates = dates;
    for (std::size_t i = 0; i < dates.size(); ++i) {
        const bool new_year = i == 0 || dates[i].year() != dates[i - 1].year();
        const bool new_month = new_year || dates[i].month() != dates[i - 1].month();
        if (new_year) {
            if (!cal.year_windows.empty()) cal.year_windows.back().end = i;
            cal.year_windows.push_back({year_of(dates[i]), i, dates.size()});
        }
        if (new_month) {
            cal.month_starts.push_back(i);
            const unsigned m = month_of(dates[i]);
            // First trading day in a quarter's opening month. A panel that begins mid-quarter
            // does not get a quarter start until the next Jan/Apr/Jul/Oct.
            if (m == 1 || m == 4 || m == 7 || m == 10) cal.quarter_starts.push_back(i);
        }
    }
    return cal;
}

namespace {

std::optional<double> parse_double(std::string_view cell) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) return std::nullopt;
    return v;
}

}  // namespace

LoadResult parse_prices(std::istream& in, bool drop_incomplete, const DateRange& range) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header_tickers;
    while (std::getline(in, line)) {
        ++line_no;
        if (!detail::trim(line).empty()) break;
    }
    if (line_no == 0 || detail::trim(line).empty()) throw ParseError("empty price file", line_no);
    {
        const auto cells = detail::split_csv_line(line);
        if (cells.empty() || cells[0] != "date") throw ParseError("header must start with 'date'", line_no);
        std::set<std::string> seen;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            std::string t(cells[c]);
            if (t.empty()) throw ParseError("empty ticker name in header", line_no);
            if (!seen.insert(t).second) throw ParseError("duplicate ticker '" + t + "'", line_no);
            header_tickers.push_back(std::move(t));
        }
        if (header_tickers.empty()) throw ParseError("header has no tickers", line_no);
    }

    const std::size_t n = header_tickers.size();
    std::vector<Date> dates;
    std::vector<std::vector<double>> cols(n);   // NaN marks a missing cell
    std::vector<std::string> problem(n);         // first reason a ticker is incomplete
    Date last{};
    bool have_last = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != n + 1) {
            throw ParseError("expected " + std::to_string(n + 1) + " cells, found " +
                                 std::to_string(cells.size()),
                             line_no);
        }
        Date d;
        try {
            d = parse_date(cells[0]);
        } catch (const InputError& e) {
            throw ParseError(e.what(), line_no);
        }
        if (have_last && !(last < d)) {
            throw ParseError("dates must be strictly increasing", line_no);
        }
        last = d;
        have_last = true;
        if ((range.from && d < *range.from) || (range.to && !(d < *range.to))) {
            for (std::size_t c = 0; c < n; ++c) {
                if (!cells[c + 1].empty() && !parse_double(cells[c + 1])) {
                    throw ParseError("invalid number '" + std::string(cells[c + 1]) + "'", line_no);
                }
            }
            continue;
        }
        dates.push_back(d);
        for (std::size_t c = 0; c < n; ++c) {
            const auto cell = cells[c + 1];
            double v = std::nan("");
            if (!cell.empty()) {
                auto parsed = parse_double(cell);
                if (!parsed) throw ParseError("invalid number '" + std::string(cell) + "'", line_no);
                v = *parsed;
                if (!std::isfinite(v) || v <= 0.0) {
                    if (problem[c].empty()) {
                        problem[c] = "non-positive or non-finite price on " + format_date(d);
                    }
                    v = std::nan("");
                }
            } else if (problem[c].empty()) {
                problem[c] = "missing price on " + format_date(d);
            }
            cols[c].push_back(v);
        }
    }
    if (dates.empty()) throw InputError("price file has no data rows in the requested range");

    LoadResult result;
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < n; ++c) {
        if (problem[c].empty()) {
            keep.push_back(c);
            continue;
        }
        if (!drop_incomplete) {
            throw InputError("ticker '" + header_tickers[c] + "' is incomplete: " + problem[c]);
        }
        result.dropped.push_back(header_tickers[c]);
        result.warnings.push_back("dropped " + header_tickers[c] + ": " + problem[c]);
    }
    if (keep.empty()) throw EmptyUniverseError("no ticker has a complete price history");

    std::sort(keep.begin(), keep.end(),
              [&](std::size_t a, std::size_t b) { return header_tickers[a] < header_tickers[b]; });
    std::sort(result.dropped.begin(), result.dropped.end());

    PricePanel& p = result.panel;
    p.dates = std::move(dates);
    p.prices.resize(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(p.dates.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        p.tickers.push_back(header_tickers[keep[i]]);
        for (std::size_t t = 0; t < p.dates.size(); ++t) {
            p.prices(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = cols[keep[i]][t];
        }
    }
    return result;
}

LoadResult load_prices(const std::string& path, bool drop_incomplete, const DateRange& range) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open price file '" + path + "'");
    return parse_prices(in, drop_incomplete, range);
}

std::map<std::string, std::string> load_sectors(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open sector file '" + path + "'");
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 2) throw ParseError("expected 'ticker,sector'", line_no);
        if (line_no == 1 && cells[0] == "ticker") continue;
        out[std::string(cells[0])] = std::string(cells[1]);
    }
    return out;
}

void write_prices_csv(std::ostream& out, const PricePanel& panel) {
    out << "date";
    for (const auto& t : panel.tickers) out << ',' << t;
    out << '\n';
    out << std::setprecision(17);
    for (std::size_t t = 0; t < panel.n_days(); ++t) {
        out << format_date(panel.dates[t]);
        for (std::size_t i = 0; i < panel.n_stocks(); ++i) {
            out << ',' << panel.prices(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
        }
        out << '\n';
    }
}

ReturnsPanel compute_returns(const PricePanel& panel) {
    if (panel.n_days() < 2) {
        throw InsufficientHistoryError("need at least 2 price dates to compute returns");
    }
    ReturnsPanel rp;
    rp.tickers = panel.tickers;
    rp.sectors = panel.sectors;
    rp.dates.assign(panel.dates.begin() + 1, panel.dates.end());
    const Eigen::Index days = panel.prices.cols() - 1;
    rp.returns = panel.prices.rightCols(days).array() / panel.prices.leftCols(days).array() - 1.0;
    return rp;
}

ReturnsPanel slice_columns(const ReturnsPanel& rp, std::size_t begin, std::size_t end) {
    if (begin >= end || end > rp.n_days()) throw EmptyWindowError("empty column window");
    ReturnsPanel out;
    out.tickers = rp.tickers;
    out.sectors = rp.sectors;
    out.dates.assign(rp.dates.begin() + static_cast<std::ptrdiff_t>(begin),
                     rp.dates.begin() + static_cast<std::ptrdiff_t>(end));
    out.returns = rp.returns.middleCols(static_cast<Eigen::Index>(begin),
                                        static_cast<Eigen::Index>(end - begin));
    return out;
}

ReturnsPanel slice_window(const ReturnsPanel& rp, const Date& start, const Date& end) {
    if (end < start) throw ParameterError("window start after end");
    const auto lo = std::lower_bound(rp.dates.begin(), rp.dates.end(), start);
    const auto hi = std::lower_bound(rp.dates.begin(), rp.dates.end(), end);
    if (lo >= hi) {
        throw EmptyWindowError("window [" + format_date(start) + ", " + format_date(end) +
                               ") contains no trading days");
    }
    return slice_columns(rp, static_cast<std::size_t>(lo - rp.dates.begin()),
                         static_cast<std::size_t>(hi - rp.dates.begin()));
}

namespace {

std::string synth_ticker(std::size_t i, std::size_t n) {
    const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
    std::string num = std::to_string(i);
    return "S" + std::string(width > num.size() ? width - num.size() : 0, '0') + num;
}

std::vector<Date> weekdays_after(const Date& start, std::size_t n) {
    std::vector<Date> out;
    out.reserve(n);
    Date d = start;
    for (std::size_t i = 0; i < n; ++i) {
        d = next_weekday(d);
        out.push_back(d);
    }
    return out;
}

}  // namespace

ReturnsPanel synth_returns(const SynthConfig& cfg) {
    if (cfg.n_stocks < 1 || cfg.n_days < 1 || cfg.n_factors < 1) {
        throw ParameterError("synthetic panel dimensions must be >= 1");
    }
    const auto n = static_cast<Eigen::Index>(cfg.n_stocks);
    const auto days = static_cast<Eigen::Index>(cfg.n_days);
    const auto f = static_cast<Eigen::Index>(cfg.n_factors);

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    Eigen::MatrixXd loadings(n, f);
    Eigen::VectorXd idio_vol(n), idio_drift(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index group = i % f;
        for (Eigen::Index k = 0; k < f; ++k) {
            loadings(i, k) = k == group ? 0.8 + 0.4 * unif(rng) : 0.15 * (2.0 * unif(rng) - 1.0);
        }
        // Idiosyncratic vol spans roughly an 8x range so vol-sorted portfolios differ.
        idio_vol(i) = 0.004 * (0.5 + 3.5 * unif(rng));
        idio_drift(i) = 0.0004 * (2.0 * unif(rng) - 1.0);
    }

    Eigen::MatrixXd factors(f, days);
    for (Eigen::Index t = 0; t < days; ++t) {
        for (Eigen::Index k = 0; k < f; ++k) factors(k, t) = cfg.factor_drift + cfg.factor_vol * normal(rng);
    }
    Eigen::MatrixXd noise(n, days);
    for (Eigen::Index t = 0; t < days; ++t) {
        for (Eigen::Index i = 0; i < n; ++i) noise(i, t) = normal(rng);
    }

    // Distressed stocks: from a random onset day their factor loading collapses,
    // their noise triples and they trend down.
    Eigen::VectorXi onset = Eigen::VectorXi::Constant(n, static_cast<int>(days));
    const auto n_distressed =
        static_cast<Eigen::Index>(std::floor(cfg.distress_fraction * static_cast<double>(n)));
    if (n_distressed > 0) {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index j = 0; j < n_distressed; ++j) {
            const double frac = 0.2 + 0.8 * unif(rng);
            onset(order[static_cast<std::size_t>(j)]) = static_cast<int>(frac * static_cast<double>(days));
        }
    }

    ReturnsPanel rp;
    rp.returns.resize(n, days);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index t = 0; t < days; ++t) {
            const bool distressed = t >= onset(i);
            const double systematic = loadings.row(i).dot(factors.col(t)) * (distressed ? 0.2 : 1.0);
            double idio = cfg.noise_scale * (idio_drift(i) + idio_vol(i) * noise(i, t));
            if (distressed) idio = 3.0 * idio + cfg.distress_drift;
            rp.returns(i, t) = std::max(systematic + idio, -0.95);
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto t = synth_ticker(static_cast<std::size_t>(i), cfg.n_stocks);
        rp.tickers.push_back(t);
        rp.sectors[t] = "F" + std::to_string(i % f);
    }
    rp.dates = weekdays_after(cfg.start, cfg.n_days);
    return rp;
}

ReturnsPanel synth_returns(std::size_t n_stocks, std::size_t n_days, std::size_t n_factors,
                           std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_stocks = n_stocks;
    cfg.n_days = n_days;
    cfg.n_factors = n_factors;
    cfg.seed = seed;
    return synth_returns(cfg);
}

PricePanel synth_prices(const SynthConfig& cfg) {
    const ReturnsPanel rp = synth_returns(cfg);
    PricePanel p;
    p.tickers = rp.tickers;
    p.sectors = rp.sectors;
    p.dates.push_back(cfg.start);
    p.dates.insert(p.dates.end(), rp.dates.begin(), rp.dates.end());
    p.prices.resize(rp.returns.rows(), rp.returns.cols() + 1);
    p.prices.col(0).setConstant(100.0);
    for (Eigen::Index t = 0; t < rp.returns.cols(); ++t) {
        p.prices.col(t + 1) = p.prices.col(t).array() * (1.0 + rp.returns.col(t).array());
    }
    return p;
}

std::vector<int> factor_groups(const ReturnsPanel& rp) {
    std::vector<int> out;
    out.reserve(rp.n_stocks());
    for (const auto& t : rp.tickers) {
        const auto it = rp.sectors.find(t);
        if (it == rp.sectors.end() || it->second.size() < 2 || it->second[0] != 'F') {
            throw ParameterError("ticker '" + t + "' has no synthetic factor label");
        }
        out.push_back(std::stoi(it->second.substr(1)));
    }
    return out;
}

}  // namespace stocksel
