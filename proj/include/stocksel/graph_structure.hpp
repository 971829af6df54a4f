#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "stocksel/errors.hpp"
#include "stocksel/market_data.hpp"

namespace stocksel {

struct Edge {
    std::size_t source;
    std::size_t target;  ///< always > source
    double weight;       ///< |partial correlation|
    double partial_correlation;
};

struct PrecisionGraph {
    Eigen::MatrixXd theta;      ///< sparse precision estimate
    Eigen::MatrixXd sigma_hat;  ///< matching covariance estimate (the working matrix W)
    double lambda = 0.0;
    std::vector<Edge> edges;
    int iterations = 0;
};

struct GlassoOptions {
    double tol = 1e-5;
    int max_iter = 200;
    double edge_threshold = 1e-4;
};

/// Thrown when the outer sweep budget runs out; carries the last iterate.
class GlassoConvergenceError : public Error {
public:
    GlassoConvergenceError(const std::string& what, PrecisionGraph last)
        : Error(what), last_(std::move(last)) {}
    const PrecisionGraph& last_iterate() const noexcept { return last_; }

private:
    PrecisionGraph last_;
};

/// Unbiased covariance of the stocks over the panel's days (n_stocks x n_stocks).
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& returns);

/// Pearson correlation between stocks; rows with zero variance get zero correlation.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& returns);

/// Penalty default: half the mean absolute off-diagonal entry of S.
double default_glasso_lambda(const Eigen::MatrixXd& s);

/// L1-penalised Gaussian maximum likelihood by block coordinate descent, one lasso
/// sub-problem per column. The penalty is applied to off-diagonal entries only.
PrecisionGraph graphical_lasso(const Eigen::MatrixXd& s, double lambda, const GlassoOptions& opts = {});

/// Undirected edges with |theta_ij| > threshold, weighted by |partial correlation|.
std::vector<Edge> edges_from_precision(const PrecisionGraph& g, double threshold);

void write_edges_csv(std::ostream& out, const std::vector<Edge>& edges,
                     const std::vector<std::string>& tickers);

struct Embedding {
    Eigen::MatrixXd coords;  ///< n_stocks x dim
    std::string source;
};

/// Laplacian eigenmap on the positive part of the return correlation matrix.
Embedding spectral_embed(const Eigen::MatrixXd& returns, std::size_t dim = 2);
Embedding spectral_embed(const ReturnsPanel& rp, std::size_t dim = 2);

}  // namespace stocksel
