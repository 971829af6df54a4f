#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "stocksel/clustering.hpp"
#include "stocksel/latent_models.hpp"
#include "stocksel/market_data.hpp"

namespace stocksel {

/// A concrete stock list produced by one strategy at one date.
struct PortfolioSpec {
    Date as_of{};
    std::vector<std::string> tickers;
    std::string strategy_tag;
    std::vector<std::string> warnings;
};

inline constexpr std::size_t kDefaultPortfolioSize = 10;

/// Sample standard deviation ((n-1) denominator) of each stock's daily returns.
Eigen::VectorXd return_std(const Eigen::MatrixXd& returns);

PortfolioSpec select_vol(const ReturnsPanel& rp, Direction direction, std::size_t n);

/// Ranks by mean/std of daily returns; zero-volatility stocks are not ranked.
PortfolioSpec select_avgret_over_vol(const ReturnsPanel& rp, Direction direction, std::size_t n);

PortfolioSpec select_model_extreme(const ReconstructionReport& report, Direction direction, std::size_t n,
                                   const std::string& strategy_tag);

/// Union over clusters with at least per_cluster members of the per_cluster members
/// closest to the cluster's center. Smaller clusters contribute nothing.
PortfolioSpec select_cluster_nearest(const ClusterModel& cm, std::size_t per_cluster = kDefaultPortfolioSize);

/// The single member closest to each cluster center.
PortfolioSpec select_kmeans_benchmark(const ClusterModel& cm);

/// CSV `as_of,strategy,ticker`.
void write_portfolios_csv(std::ostream& out, const std::vector<PortfolioSpec>& specs);

}  // namespace stocksel
