#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

#include "stocksel/market_data.hpp"

namespace stocksel {

enum class Direction { Max, Min };

/// Per-stock reconstruction error of a latent model plus each stock's latent coordinates.
struct ReconstructionReport {
    std::vector<std::string> tickers;
    Eigen::VectorXd errors;          ///< L2 norm of (actual - reconstructed), one per stock
    Eigen::MatrixXd latent_coords;   ///< n_stocks x latent dim
};

/// PCA over stocks: each stock's return vector is one observation.
struct PcaModel {
    Eigen::VectorXd mean;            ///< per-day mean over stocks
    Eigen::MatrixXd components;      ///< k x n_days, orthonormal rows
    Eigen::VectorXd singular_values; ///< all singular values of the centered matrix, descending

    std::size_t k() const { return static_cast<std::size_t>(components.rows()); }
    double explained_variance_ratio() const;
};

PcaModel fit_pca(const Eigen::MatrixXd& data, std::size_t k);
PcaModel fit_pca(const ReturnsPanel& rp, std::size_t k);

ReconstructionReport pca_reconstruct(const PcaModel& model, const Eigen::MatrixXd& data);
ReconstructionReport pca_reconstruct(const PcaModel& model, const ReturnsPanel& rp);

/// The n tickers with the largest (Max) or smallest (Min) error; ties go to the
/// lexicographically smaller ticker.
std::vector<std::string> select_extreme(const ReconstructionReport& report, Direction direction,
                                        std::size_t n);

/// The n tickers appearing most often across runs; ties go to the lexicographically smaller ticker.
std::vector<std::string> aggregate_selections(const std::vector<std::vector<std::string>>& runs,
                                              std::size_t n);

}  // namespace stocksel
