// Independent reference computations used by the tests. None of these call into the library's
// numerical code; they re-derive each quantity the slow, obvious way.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <vector>

namespace oracle {

/// Gaussian blobs around the given centers (one row per center), `per` points each.
inline Eigen::MatrixXd blobs(const Eigen::MatrixXd& centers, std::size_t per, double spread, std::uint64_t seed,
                             std::vector<int>* labels = nullptr) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, spread);
    const auto k = static_cast<std::size_t>(centers.rows());
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(k * per), centers.cols());
    if (labels) labels->clear();
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < per; ++i) {
            const auto row = static_cast<Eigen::Index>(c * per + i);
            for (Eigen::Index d = 0; d < centers.cols(); ++d)
                pts(row, d) = centers(static_cast<Eigen::Index>(c), d) + normal(rng);
            if (labels) labels->push_back(static_cast<int>(c));
        }
    }
    return pts;
}

/// Random symmetric positive-definite matrix with unit-order entries.
inline Eigen::MatrixXd random_spd(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd a(N, 2 * N);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
    Eigen::MatrixXd s = a * a.transpose() / static_cast<double>(2 * n);
    s.diagonal().array() += 0.1;
    return s;
}

/// Sum of squared deviations of the given rows from their mean.
inline double sse(const Eigen::MatrixXd& pts, const std::vector<std::size_t>& members) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(pts.cols());
    for (auto m : members) mean += pts.row(static_cast<Eigen::Index>(m));
    mean /= static_cast<double>(members.size());
    double total = 0.0;
    for (auto m : members) total += (pts.row(static_cast<Eigen::Index>(m)) - mean).squaredNorm();
    return total;
}

struct Merge {
    std::size_t left;
    std::size_t right;
    double cost;
};

/// Greedy agglomeration that, at every step, tries every pair of live clusters and merges the one
/// whose union increases the total within-cluster sum of squares least. Cluster ids follow the
/// linkage convention: points are 0..n-1, the s-th merge creates id n+s.
inline std::vector<Merge> greedy_ward(const Eigen::MatrixXd& pts, std::size_t n_clusters) {
    const auto n = static_cast<std::size_t>(pts.rows());
    std::map<std::size_t, std::vector<std::size_t>> live;
    for (std::size_t i = 0; i < n; ++i) live[i] = {i};
    std::vector<Merge> merges;
    std::size_t next = n;
    while (live.size() > n_clusters) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t ba = 0, bb = 0;
        for (auto ia = live.begin(); ia != live.end(); ++ia) {
            for (auto ib = std::next(ia); ib != live.end(); ++ib) {
                std::vector<std::size_t> both = ia->second;
                both.insert(both.end(), ib->second.begin(), ib->second.end());
                const double cost = sse(pts, both) - sse(pts, ia->second) - sse(pts, ib->second);
                if (cost < best) {
                    best = cost;
                    ba = ia->first;
                    bb = ib->first;
                }
            }
        }
        std::vector<std::size_t> both = live[ba];
        both.insert(both.end(), live[bb].begin(), live[bb].end());
        live.erase(ba);
        live.erase(bb);
        live[next++] = both;
        merges.push_back({ba, bb, best});
    }
    return merges;
}

/// Mean silhouette coefficient with Euclidean distance.
inline double silhouette(const Eigen::MatrixXd& pts, const std::vector<int>& labels) {
    const auto n = static_cast<std::size_t>(pts.rows());
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = (pts.row(static_cast<Eigen::Index>(i)) - pts.row(static_cast<Eigen::Index>(j))).norm();
            sum[static_cast<std::size_t>(labels[j])] += d;
            ++count[static_cast<std::size_t>(labels[j])];
        }
        const auto own = static_cast<std::size_t>(labels[i]);
        if (count[own] == 0) continue;  // singleton clusters score 0
        const double a = sum[own] / static_cast<double>(count[own]);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c)
            if (c != own && count[c] > 0) b = std::min(b, sum[c] / static_cast<double>(count[c]));
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

/// Worst violation of the stationarity conditions of the L1-penalised likelihood, using the
/// independently inverted precision matrix rather than the solver's working matrix.
inline double glasso_kkt_violation(const Eigen::MatrixXd& s, const Eigen::MatrixXd& theta, double lambda) {
    const Eigen::MatrixXd w = theta.inverse();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        worst = std::max(worst, std::abs(w(i, i) - s(i, i)));
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
            if (i == j) continue;
            const double g = w(i, j) - s(i, j);
            if (theta(i, j) != 0.0) {
                // W - S = lambda * sign(theta_ij) on the support
                const double target = theta(i, j) > 0 ? lambda : -lambda;
                worst = std::max(worst, std::abs(g - target));
            } else {
                worst = std::max(worst, std::abs(g) - lambda);
            }
        }
    }
    return worst;
}

inline double sharpe(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double rf, const Eigen::VectorXd& w) {
    return (w.dot(mu) - rf) / std::sqrt(w.dot(sigma * w));
}

/// Best Sharpe ratio over the simplex grid with the given step (n <= 3).
inline double grid_best_sharpe(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double rf, double step) {
    const int steps = static_cast<int>(std::lround(1.0 / step));
    const auto n = mu.size();
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= steps; ++i) {
        for (int j = 0; j <= (n >= 2 ? steps - i : 0); ++j) {
            Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
            w(0) = i * step;
            if (n >= 2) w(1) = j * step;
            if (n == 3) w(2) = (steps - i - j) * step;
            if (n == 2 && i + j != steps) continue;
            if (n == 1 && i != steps) continue;
            best = std::max(best, sharpe(mu, sigma, rf, w));
        }
    }
    return best;
}

/// Annualised (x252) mean and covariance with an explicit two-pass loop; rows are series.
inline void two_pass_moments(const Eigen::MatrixXd& r, Eigen::VectorXd& mu, Eigen::MatrixXd& sigma) {
    const auto n = r.rows();
    const auto t = r.cols();
    mu = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (Eigen::Index d = 0; d < t; ++d) s += r(i, d);
        mu(i) = s / static_cast<double>(t);
    }
    sigma = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            double s = 0.0;
            for (Eigen::Index d = 0; d < t; ++d) s += (r(i, d) - mu(i)) * (r(j, d) - mu(j));
            sigma(i, j) = 252.0 * s / static_cast<double>(t - 1);
        }
    mu *= 252.0;
}

}  // namespace oracle
