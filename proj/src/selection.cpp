#include "stocksel/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "stocksel/errors.hpp"

namespace stocksel {

namespace {

/// Ranks `keys` (one per candidate index) and returns the first n tickers.
std::vector<std::string> rank_tickers(const std::vector<std::string>& tickers, const std::vector<std::size_t>& candidates,
                                      const Eigen::VectorXd& keys, Direction direction, std::size_t n) {
    std::vector<std::size_t> order = candidates;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ka = keys(static_cast<Eigen::Index>(a));
        const double kb = keys(static_cast<Eigen::Index>(b));
        if (ka != kb) return direction == Direction::Max ? ka > kb : ka < kb;
        return tickers[a] < tickers[b];
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(tickers[order[i]]);
    return out;
}

/// Standard deviations at or below this are treated as constant series.
constexpr double kZeroVolatility = 1e-12;

const char* suffix(Direction d) { return d == Direction::Max ? "_max" : "_min"; }

std::string label(const ClusterModel& cm, std::size_t i) {
    return i < cm.tickers.size() ? cm.tickers[i] : std::to_string(i);
}

}  // namespace

Eigen::VectorXd return_std(const Eigen::MatrixXd& returns) {
    if (returns.cols() < 2) throw InsufficientHistoryError("standard deviation needs at least 2 days");
    const Eigen::MatrixXd centered = returns.colwise() - returns.rowwise().mean();
    return (centered.rowwise().squaredNorm() / static_cast<double>(returns.cols() - 1)).cwiseSqrt();
}

PortfolioSpec select_vol(const ReturnsPanel& rp, Direction direction, std::size_t n) {
    if (n > rp.n_stocks()) {
        throw ParameterError("cannot select " + std::to_string(n) + " of " + std::to_string(rp.n_stocks()) + " stocks");
    }
    std::vector<std::size_t> all(rp.n_stocks());
    std::iota(all.begin(), all.end(), std::size_t{0});
    PortfolioSpec spec;
    spec.as_of = rp.dates.empty() ? Date{} : rp.dates.back();
    spec.strategy_tag = std::string("vol") + suffix(direction);
    spec.tickers = rank_tickers(rp.tickers, all, return_std(rp.returns), direction, n);
    return spec;
}

PortfolioSpec select_avgret_over_vol(const ReturnsPanel& rp, Direction direction, std::size_t n) {
    const Eigen::VectorXd sd = return_std(rp.returns);
    const Eigen::VectorXd mean = rp.returns.rowwise().mean();
    Eigen::VectorXd ratio = Eigen::VectorXd::Zero(sd.size());
    std::vector<std::size_t> rankable;
    for (Eigen::Index i = 0; i < sd.size(); ++i) {
        if (sd(i) > kZeroVolatility) {
            ratio(i) = mean(i) / sd(i);
            rankable.push_back(static_cast<std::size_t>(i));
        }
    }
    if (n > rankable.size()) {
        throw ParameterError("only " + std::to_string(rankable.size()) + " stocks with non-zero volatility, need " +
                             std::to_string(n));
    }
    PortfolioSpec spec;
    spec.as_of = rp.dates.empty() ? Date{} : rp.dates.back();
    spec.strategy_tag = std::string("avgretvol") + suffix(direction);
    spec.tickers = rank_tickers(rp.tickers, rankable, ratio, direction, n);
    return spec;
}

PortfolioSpec select_model_extreme(const ReconstructionReport& report, Direction direction, std::size_t n,
                                   const std::string& strategy_tag) {
    PortfolioSpec spec;
    spec.strategy_tag = strategy_tag;
    spec.tickers = select_extreme(report, direction, n);
    return spec;
}

PortfolioSpec select_cluster_nearest(const ClusterModel& cm, std::size_t per_cluster) {
    PortfolioSpec spec;
    spec.strategy_tag = to_string(cm.method);
    for (int c = 0; c < static_cast<int>(cm.n_clusters()); ++c) {
        auto members = cm.members(c);
        if (members.size() < per_cluster || members.empty()) continue;
        std::vector<double> dist(cm.assignment.size(), 0.0);
        for (std::size_t i : members) dist[i] = cm.distance_to_center(i);
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            if (dist[a] != dist[b]) return dist[a] < dist[b];
            return label(cm, a) < label(cm, b);
        });
        for (std::size_t j = 0; j < per_cluster; ++j) spec.tickers.push_back(label(cm, members[j]));
    }
    if (spec.tickers.empty()) {
        spec.warnings.push_back("no cluster has at least " + std::to_string(per_cluster) +
                                " members; portfolio is empty");
    }
    return spec;
}

PortfolioSpec select_kmeans_benchmark(const ClusterModel& cm) {
    PortfolioSpec spec;
    spec.strategy_tag = to_string(cm.method);
    for (int c = 0; c < static_cast<int>(cm.n_clusters()); ++c) {
        const auto members = cm.members(c);
        if (members.empty()) continue;
        std::size_t best = members.front();
        for (std::size_t i : members) {
            const double d = cm.distance_to_center(i), bd = cm.distance_to_center(best);
            if (d < bd || (d == bd && label(cm, i) < label(cm, best))) best = i;
        }
        spec.tickers.push_back(label(cm, best));
    }
    return spec;
}

void write_portfolios_csv(std::ostream& out, const std::vector<PortfolioSpec>& specs) {
    out << "as_of,strategy,ticker\n";
    for (const auto& s : specs)
        for (const auto& t : s.tickers) out << format_date(s.as_of) << ',' << s.strategy_tag << ',' << t << '\n';
}

}  // namespace stocksel
