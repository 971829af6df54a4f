#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stocksel/market_data.hpp"

namespace stocksel {

inline constexpr double kTradingDaysPerYear = 252.0;

struct WeightVector {
    std::vector<std::string> tickers;
    Eigen::VectorXd weights;  ///< non-negative, sums to one
};

/// Annualised mean and covariance estimated from daily returns.
struct MomentEstimate {
    std::vector<std::string> tickers;
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    Date window_start{};
    Date window_end{};
};

inline constexpr std::size_t kMinMomentWindow = 30;

MomentEstimate estimate_moments(const ReturnsPanel& rp, const std::vector<std::string>& tickers);

struct MaxSharpeOptions {
    /// Optional cap on any single weight; must be at least 1/n.
    std::optional<double> max_weight;
    int max_iter = 10000;
    double kkt_tol = 1e-6;
};

struct TangencySolution {
    WeightVector weights;
    double sharpe = 0.0;
    double kkt_residual = 0.0;  ///< relative, of the convex reformulation (uncapped case)
    int iterations = 0;
    bool regularized = false;
};

double portfolio_sharpe(const MomentEstimate& m, const Eigen::VectorXd& w, double risk_free);

/// Long-only tangency portfolio. Uncapped, it solves min y'Σy s.t. (mu - rf)'y = 1, y >= 0
/// and normalises w = y / sum(y).
TangencySolution solve_max_sharpe(const MomentEstimate& m, double risk_free, const MaxSharpeOptions& opts = {});
WeightVector max_sharpe(const MomentEstimate& m, double risk_free, const MaxSharpeOptions& opts = {});

WeightVector equal_weights(const std::vector<std::string>& tickers);

/// CSV `ticker,weight`.
void write_weights_csv(std::ostream& out, const WeightVector& w);

}  // namespace stocksel
