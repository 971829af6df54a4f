#include "stocksel/graph_structure.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace stocksel {

namespace {

double soft_threshold(double x, double lambda) {
    if (x > lambda) return x - lambda;
    if (x < -lambda) return x + lambda;
    return 0.0;
}

Eigen::MatrixXd center_rows(const Eigen::MatrixXd& returns) {
    return returns.colwise() - returns.rowwise().mean();
}

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v *= -1.0;
}

}  // namespace

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& returns) {
    if (returns.cols() < 2) throw InsufficientHistoryError("covariance needs at least 2 observations");
    const Eigen::MatrixXd c = center_rows(returns);
    return (c * c.transpose()) / static_cast<double>(returns.cols() - 1);
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& returns) {
    const Eigen::MatrixXd cov = sample_covariance(returns);
    const Eigen::VectorXd sd = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd corr = Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        for (Eigen::Index j = 0; j < cov.cols(); ++j) {
            if (sd(i) > 0.0 && sd(j) > 0.0) corr(i, j) = std::clamp(cov(i, j) / (sd(i) * sd(j)), -1.0, 1.0);
        }
    }
    return corr;
}

double default_glasso_lambda(const Eigen::MatrixXd& s) {
    const Eigen::Index n = s.rows();
    if (n < 2) return 0.0;
    const double off = s.cwiseAbs().sum() - s.diagonal().cwiseAbs().sum();
    return 0.5 * off / static_cast<double>(n * (n - 1));
}

PrecisionGraph graphical_lasso(const Eigen::MatrixXd& s, double lambda, const GlassoOptions& opts) {
    const Eigen::Index n = s.rows();
    if (n < 1 || s.cols() != n) throw ParameterError("covariance must be a non-empty square matrix");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be finite and >= 0");
    if (!s.allFinite()) throw ParameterError("covariance has non-finite entries");
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, s.cwiseAbs().maxCoeff())) {
        throw ParameterError("covariance must be symmetric");
    }
    if ((s.diagonal().array() <= 0.0).any()) throw ParameterError("covariance diagonal must be positive");
    if (lambda == 0.0 && Eigen::LLT<Eigen::MatrixXd>(s).info() != Eigen::Success) {
        throw NumericalError("unpenalised graphical lasso needs a positive definite covariance");
    }

    PrecisionGraph g;
    g.lambda = lambda;
    Eigen::MatrixXd w = s;
    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(n - 1, 1), n);
    const double inner_tol = std::min(opts.tol, 1e-6) * 1e-4;

    auto others = [n](Eigen::Index j) {
        std::vector<Eigen::Index> idx;
        idx.reserve(static_cast<std::size_t>(n - 1));
        for (Eigen::Index k = 0; k < n; ++k)
            if (k != j) idx.push_back(k);
        return idx;
    };

    auto build_theta = [&]() {
        Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(n, n);
        if (n == 1) {
            theta(0, 0) = 1.0 / w(0, 0);
            return theta;
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto idx = others(j);
            double dot = 0.0;
            for (Eigen::Index a = 0; a < n - 1; ++a) dot += w(idx[a], j) * beta(a, j);
            const double denom = w(j, j) - dot;
            if (!(denom > 0.0)) throw NumericalError("graphical lasso working matrix lost positive definiteness");
            theta(j, j) = 1.0 / denom;
            for (Eigen::Index a = 0; a < n - 1; ++a) theta(idx[a], j) = -beta(a, j) * theta(j, j);
        }
        return Eigen::MatrixXd(0.5 * (theta + theta.transpose()));
    };

    bool converged = n == 1;
    int iter = 0;
    while (!converged && iter < opts.max_iter) {
        ++iter;
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto idx = others(j);
            const Eigen::Index m = n - 1;
            Eigen::MatrixXd w11(m, m);
            Eigen::VectorXd s12(m);
            for (Eigen::Index a = 0; a < m; ++a) {
                s12(a) = s(idx[a], j);
                for (Eigen::Index b = 0; b < m; ++b) w11(a, b) = w(idx[a], idx[b]);
            }
            Eigen::VectorXd b = beta.col(j);
            // w11 * b, maintained incrementally
            Eigen::VectorXd wb = w11 * b;
            for (int sweep = 0; sweep < 10000; ++sweep) {
                double delta = 0.0;
                for (Eigen::Index k = 0; k < m; ++k) {
                    if (!(w11(k, k) > 0.0)) throw NumericalError("graphical lasso working matrix is not positive definite");
                    const double partial = s12(k) - (wb(k) - w11(k, k) * b(k));
                    const double updated = soft_threshold(partial, lambda) / w11(k, k);
                    const double step = updated - b(k);
                    if (step != 0.0) {
                        wb += step * w11.col(k);
                        b(k) = updated;
                        delta = std::max(delta, std::abs(step) * w11(k, k));
                    }
                }
                if (delta < inner_tol) break;
            }
            beta.col(j) = b;
            const Eigen::VectorXd w12 = w11 * b;
            for (Eigen::Index a = 0; a < m; ++a) {
                max_change = std::max(max_change, std::abs(w(idx[a], j) - w12(a)));
                w(idx[a], j) = w12(a);
                w(j, idx[a]) = w12(a);
            }
        }
        if (!w.allFinite()) throw NumericalError("graphical lasso iterate became non-finite");
        converged = max_change < opts.tol;
    }

    g.iterations = iter;
    g.sigma_hat = w;
    g.theta = build_theta();
    g.edges = edges_from_precision(g, opts.edge_threshold);
    if (!converged) {
        throw GlassoConvergenceError("graphical lasso did not converge in " +
                                         std::to_string(opts.max_iter) + " sweeps",
                                     g);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.theta, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
        throw NumericalError("graphical lasso produced a precision matrix that is not positive definite");
    }
    return g;
}

std::vector<Edge> edges_from_precision(const PrecisionGraph& g, double threshold) {
    std::vector<Edge> edges;
    const Eigen::Index n = g.theta.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double t = g.theta(i, j);
            if (!(std::abs(t) > threshold)) continue;
            const double pc = -t / std::sqrt(g.theta(i, i) * g.theta(j, j));
            edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), std::abs(pc), pc});
        }
    }
    return edges;
}

void write_edges_csv(std::ostream& out, const std::vector<Edge>& edges,
                     const std::vector<std::string>& tickers) {
    out << "source,target,weight\n";
    const auto old = out.precision(17);
    for (const auto& e : edges) out << tickers.at(e.source) << ',' << tickers.at(e.target) << ',' << e.weight << '\n';
    out.precision(old);
}

Embedding spectral_embed(const Eigen::MatrixXd& returns, std::size_t dim) {
    const Eigen::Index n = returns.rows();
    const auto d = static_cast<Eigen::Index>(dim);
    if (dim < 1 || n < d + 1) {
        throw ParameterError("spectral embedding of dimension " + std::to_string(dim) + " needs at least " +
                             std::to_string(dim + 1) + " stocks");
    }
    Eigen::MatrixXd affinity = correlation_matrix(returns).cwiseMax(0.0);
    affinity.diagonal().setZero();
    const Eigen::VectorXd degree = affinity.rowwise().sum();

    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < n; ++i)
        if (degree(i) > 0.0) active.push_back(i);
    const auto m = static_cast<Eigen::Index>(active.size());
    if (m == 0) throw DegenerateGraphError("affinity matrix is identically zero");
    if (m < d + 1) {
        throw DegenerateGraphError("only " + std::to_string(m) + " connected stocks for a " +
                                   std::to_string(dim) + "-d embedding");
    }

    Eigen::VectorXd inv_sqrt(m), sqrt_deg(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        sqrt_deg(a) = std::sqrt(degree(active[a]));
        inv_sqrt(a) = 1.0 / sqrt_deg(a);
    }
    Eigen::MatrixXd laplacian(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = 0; b < m; ++b)
            laplacian(a, b) = (a == b ? 1.0 : 0.0) - inv_sqrt(a) * affinity(active[a], active[b]) * inv_sqrt(b);
    // Lift the trivial eigenvector D^{1/2} 1 above the spectrum (which lies in [0, 2])
    // so the smallest eigenpairs left are the informative ones.
    const Eigen::VectorXd trivial = sqrt_deg.normalized();
    laplacian += 3.0 * trivial * trivial.transpose();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(laplacian);
    if (eig.info() != Eigen::Success) throw NumericalError("Laplacian eigendecomposition failed");

    Embedding e;
    e.source = "positive-correlation affinity, symmetric normalized Laplacian";
    e.coords = Eigen::MatrixXd::Zero(n, d);
    for (Eigen::Index c = 0; c < d; ++c) {
        Eigen::VectorXd v = eig.eigenvectors().col(c).cwiseProduct(inv_sqrt);
        fix_sign(v);
        for (Eigen::Index a = 0; a < m; ++a) e.coords(active[a], c) = v(a);
    }
    return e;
}

Embedding spectral_embed(const ReturnsPanel& rp, std::size_t dim) { return spectral_embed(rp.returns, dim); }

}  // namespace stocksel
