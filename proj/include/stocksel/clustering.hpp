#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stocksel/errors.hpp"
#include "stocksel/graph_structure.hpp"
#include "stocksel/market_data.hpp"

namespace stocksel {

enum class ClusterMethod { KMeans, Ward, AffinityPropagation };

std::string to_string(ClusterMethod m);

/// One agglomeration step. Ids follow the linkage convention: points are 0..n-1,
/// the cluster created by merge s gets id n+s.
struct WardMerge {
    std::size_t left;
    std::size_t right;
    double cost;       ///< increase in within-cluster sum of squares
    std::size_t size;  ///< size of the merged cluster
};

struct ClusterModel {
    ClusterMethod method = ClusterMethod::KMeans;
    std::vector<int> assignment;        ///< cluster id per point, contiguous from 0 in order of first appearance
    Eigen::MatrixXd centers;            ///< n_clusters x dim; centroids or exemplar coordinates
    std::vector<std::size_t> exemplars; ///< affinity propagation only, indexed by cluster id
    Eigen::MatrixXd points;             ///< the space distances are measured in
    std::vector<std::string> tickers;   ///< optional labels for points
    std::vector<double> inertia_history;  ///< KMeans: inertia after each Lloyd step
    std::vector<WardMerge> merges;        ///< Ward: full merge record (dendrogram heights)
    std::vector<std::string> warnings;
    bool converged = true;

    std::size_t n_clusters() const { return static_cast<std::size_t>(centers.rows()); }
    std::vector<std::size_t> members(int cluster) const;
    double distance_to_center(std::size_t point) const;
    double inertia() const;
};

ClusterModel kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, int max_iter = 300);

using Connectivity = std::vector<std::pair<std::size_t, std::size_t>>;

/// Ward agglomerative clustering. With connectivity, only clusters joined by an edge merge
/// until none remain; then unrestricted merging resumes and a warning is recorded.
ClusterModel ward_agglomerative(const Eigen::MatrixXd& points, std::size_t n_clusters,
                                const std::optional<Connectivity>& connectivity = std::nullopt);

struct AffinityOptions {
    double damping = 0.5;
    std::optional<double> preference;  ///< default: median off-diagonal similarity
    int max_iter = 1000;
    int conv_iters = 15;
};

/// Message-passing state: similarity s(i,k), responsibility r(i,k), availability a(i,k).
struct AffinityState {
    Eigen::MatrixXd s;
    Eigen::MatrixXd r;
    Eigen::MatrixXd a;
    double damping = 0.5;
    int iterations = 0;

    /// One damped responsibility update followed by one damped availability update.
    void iterate();
    std::vector<std::size_t> exemplars() const;
};

AffinityState make_affinity_state(const Eigen::MatrixXd& points, double damping,
                                  std::optional<double> preference);

/// Median of the off-diagonal entries of a similarity matrix.
double median_off_diagonal(const Eigen::MatrixXd& s);

class AffinityNonConvergenceError : public Error {
public:
    AffinityNonConvergenceError(const std::string& what, AffinityState state)
        : Error(what), state_(std::move(state)) {}
    const AffinityState& state() const noexcept { return state_; }

private:
    AffinityState state_;
};

ClusterModel affinity_propagation(const Eigen::MatrixXd& points, const AffinityOptions& opts = {});

enum class EmbeddingSpace { Spectral, Pca };

struct QuarterlyParams {
    ClusterMethod method = ClusterMethod::AffinityPropagation;
    EmbeddingSpace space = EmbeddingSpace::Spectral;
    std::size_t pca_components = 3;
    std::size_t kmeans_k = 10;
    std::uint64_t seed = 0;
    int kmeans_max_iter = 300;
    std::size_t ward_clusters = 15;
    bool ward_connectivity = true;
    std::optional<double> glasso_lambda;
    GlassoOptions glasso;
    AffinityOptions affinity;
    /// Reuse the first quarter's model for every later quarter.
    bool static_clusters = false;
};

struct QuarterModel {
    Date quarter_start;
    std::size_t start_index = 0;  ///< index of quarter_start in the calendar
    ClusterModel model;
};

inline constexpr std::size_t kMinClusterWindow = 10;

/// Clusters one training window in the configured embedding space.
ClusterModel cluster_window(const ReturnsPanel& window, const QuarterlyParams& params);

/// A model for every quarter start that has a full previous quarter of returns.
std::vector<QuarterModel> quarterly_clusters(const ReturnsPanel& rp, const TradingCalendar& cal,
                                             const QuarterlyParams& params);

/// CSV `quarter,ticker,cluster_id,dist_to_center`.
void write_clusters_csv(std::ostream& out, const std::vector<QuarterModel>& models);

/// Adjusted Rand index between two labelings of the same points.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace stocksel
