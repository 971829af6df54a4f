#include "stocksel/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "stocksel/errors.hpp"

namespace stocksel {

namespace {

/// Euclidean projection of v onto { y >= 0, a'y = 1 }.
Eigen::VectorXd project_halfspace_orthant(const Eigen::VectorXd& v, const Eigen::VectorXd& a) {
    auto total = [&](double tau) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i) s += a(i) * std::max(0.0, v(i) - tau * a(i));
        return s;
    };
    // total() is non-increasing in tau.
    double lo = -1.0, hi = 1.0;
    while (total(lo) < 1.0) lo *= 2.0;
    while (total(hi) > 1.0) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (total(mid) > 1.0 ? lo : hi) = mid;
    }
    double tau = 0.5 * (lo + hi);
    // Exact tau on the identified support.
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v(i) - tau * a(i) > 0.0) {
            num += a(i) * v(i);
            den += a(i) * a(i);
        }
    }
    if (den > 0.0) {
        const double exact = (num - 1.0) / den;
        bool same_support = true;
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if ((v(i) - tau * a(i) > 0.0) != (v(i) - exact * a(i) > 0.0)) same_support = false;
        }
        if (same_support) tau = exact;
    }
    Eigen::VectorXd y(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) y(i) = std::max(0.0, v(i) - tau * a(i));
    return y;
}

/// Euclidean projection onto { 0 <= w <= cap, sum w = 1 }.
Eigen::VectorXd project_capped_simplex(const Eigen::VectorXd& v, double cap) {
    auto total = [&](double tau) { return (v.array() - tau).cwiseMax(0.0).cwiseMin(cap).sum(); };
    double lo = v.minCoeff() - cap - 1.0, hi = v.maxCoeff() + 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (total(mid) > 1.0 ? lo : hi) = mid;
    }
    Eigen::VectorXd w = (v.array() - 0.5 * (lo + hi)).cwiseMax(0.0).cwiseMin(cap).matrix();
    return w / w.sum();
}

double relative_kkt_residual(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& a, const Eigen::VectorXd& y) {
    const Eigen::VectorXd g = 2.0 * sigma * y;
    const double ymax = y.maxCoeff();
    double ga = 0.0, aa = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y(i) > 1e-12 * ymax) {
            ga += g(i) * a(i);
            aa += a(i) * a(i);
        }
    }
    const double nu = aa > 0.0 ? ga / aa : 0.0;
    double res = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double lambda = g(i) - nu * a(i);
        res = std::max(res, y(i) > 1e-12 * ymax ? std::abs(lambda) : std::max(0.0, -lambda));
    }
    const double scale = std::max({g.cwiseAbs().maxCoeff(), std::abs(nu) * a.cwiseAbs().maxCoeff(), 1e-300});
    return res / scale;
}

/// Exact solution of the equality-constrained problem on the support of y, if it stays feasible.
std::optional<Eigen::VectorXd> polish_on_support(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& a,
                                                 const Eigen::VectorXd& y) {
    std::vector<Eigen::Index> support;
    const double ymax = y.maxCoeff();
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y(i) > 1e-9 * ymax) support.push_back(i);
    const auto m = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd ss(m, m);
    Eigen::VectorXd as(m);
    for (Eigen::Index p = 0; p < m; ++p) {
        as(p) = a(support[p]);
        for (Eigen::Index q = 0; q < m; ++q) ss(p, q) = sigma(support[p], support[q]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ss);
    if (ldlt.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd x = ldlt.solve(as);
    const double denom = as.dot(x);
    if (!(denom > 0.0) || !x.allFinite()) return std::nullopt;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(y.size());
    for (Eigen::Index p = 0; p < m; ++p) {
        if (!(x(p) / denom > 0.0)) return std::nullopt;
        out(support[p]) = x(p) / denom;
    }
    return out;
}

Eigen::VectorXd normalise(const Eigen::VectorXd& y) {
    Eigen::VectorXd w = y.cwiseMax(0.0);
    w /= w.sum();
    return w;
}

}  // namespace

MomentEstimate estimate_moments(const ReturnsPanel& rp, const std::vector<std::string>& tickers) {
    if (tickers.empty()) throw ParameterError("no tickers for moment estimation");
    if (rp.n_days() < kMinMomentWindow) {
        throw InsufficientHistoryError("moment window has " + std::to_string(rp.n_days()) + " days, need " +
                                       std::to_string(kMinMomentWindow));
    }
    const ReturnsPanel sub = rp.subset(tickers);
    MomentEstimate m;
    m.tickers = tickers;
    m.window_start = rp.dates.front();
    m.window_end = rp.dates.back();
    const Eigen::VectorXd mean = sub.returns.rowwise().mean();
    const Eigen::MatrixXd centered = sub.returns.colwise() - mean;
    m.mu = kTradingDaysPerYear * mean;
    m.sigma = kTradingDaysPerYear * (centered * centered.transpose()) / static_cast<double>(sub.n_days() - 1);
    return m;
}

double portfolio_sharpe(const MomentEstimate& m, const Eigen::VectorXd& w, double risk_free) {
    const double vol = std::sqrt(std::max(0.0, w.dot(m.sigma * w)));
    const double excess = w.dot(m.mu) - risk_free * w.sum();
    if (vol == 0.0) return excess == 0.0 ? 0.0 : std::copysign(INFINITY, excess);
    return excess / vol;
}

TangencySolution solve_max_sharpe(const MomentEstimate& m, double risk_free, const MaxSharpeOptions& opts) {
    const Eigen::Index n = m.mu.size();
    if (n < 1 || m.sigma.rows() != n || m.sigma.cols() != n) throw ParameterError("moment estimate is malformed");
    const Eigen::VectorXd excess = m.mu.array() - risk_free;
    if (!(excess.maxCoeff() > 0.0)) {
        throw InfeasibleTangencyError("no asset has expected return above the risk-free rate");
    }
    if (opts.max_weight && !(*opts.max_weight * static_cast<double>(n) >= 1.0 - 1e-12)) {
        throw ParameterError("max_weight below 1/n makes the weights infeasible");
    }

    TangencySolution sol;
    sol.weights.tickers = m.tickers;
    Eigen::MatrixXd sigma = 0.5 * (m.sigma + m.sigma.transpose());
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < 1e-10) {
            const double bump = 1e-8 * sigma.trace() / static_cast<double>(n);
            sigma.diagonal().array() += bump;
            sol.regularized = true;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> again(sigma, Eigen::EigenvaluesOnly);
            if (!(again.eigenvalues().minCoeff() > 0.0)) {
                throw NumericalError("covariance is singular even after diagonal regularisation");
            }
        }
    }

    // Projected gradient with backtracking on f(y) = y'Σy.
    Eigen::VectorXd y = project_halfspace_orthant(Eigen::VectorXd::Zero(n), excess);
    double step = 1.0 / std::max(2.0 * sigma.diagonal().maxCoeff() * static_cast<double>(n), 1e-300);
    double f = y.dot(sigma * y);
    int iter = 0;
    for (; iter < opts.max_iter; ++iter) {
        const Eigen::VectorXd g = 2.0 * sigma * y;
        Eigen::VectorXd next;
        double f_next = 0.0;
        for (int bt = 0; bt < 60; ++bt) {
            next = project_halfspace_orthant(y - step * g, excess);
            f_next = next.dot(sigma * next);
            const Eigen::VectorXd d = next - y;
            if (f_next <= f + g.dot(d) + d.squaredNorm() / (2.0 * step)) break;
            step *= 0.5;
        }
        const double moved = (next - y).cwiseAbs().maxCoeff();
        y = next;
        f = f_next;
        step *= 2.0;
        if (moved <= 1e-15 * std::max(1.0, y.cwiseAbs().maxCoeff()) ||
            relative_kkt_residual(sigma, excess, y) < opts.kkt_tol * 1e-3) {
            break;
        }
    }
    sol.iterations = iter;
    if (auto polished = polish_on_support(sigma, excess, y)) {
        if (relative_kkt_residual(sigma, excess, *polished) <= relative_kkt_residual(sigma, excess, y)) y = *polished;
    }
    sol.kkt_residual = relative_kkt_residual(sigma, excess, y);
    Eigen::VectorXd w = normalise(y);

    if (opts.max_weight && w.maxCoeff() > *opts.max_weight) {
        // Capped problem: projected gradient ascent on the Sharpe ratio itself over the capped simplex.
        const double cap = *opts.max_weight;
        auto sharpe = [&](const Eigen::VectorXd& x) { return x.dot(excess) / std::sqrt(x.dot(sigma * x)); };
        w = project_capped_simplex(w, cap);
        double s = sharpe(w);
        double t = 1.0;
        for (int it = 0; it < opts.max_iter; ++it) {
            const double var = w.dot(sigma * w);
            const double vol = std::sqrt(var);
            const Eigen::VectorXd grad = excess / vol - (w.dot(excess) / (var * vol)) * (sigma * w);
            Eigen::VectorXd cand = w;
            double s_cand = s;
            for (int bt = 0; bt < 60; ++bt) {
                cand = project_capped_simplex(w + t * grad, cap);
                s_cand = sharpe(cand);
                if (s_cand >= s + 1e-4 * grad.dot(cand - w)) break;
                t *= 0.5;
            }
            const double moved = (cand - w).cwiseAbs().maxCoeff();
            if (s_cand < s) break;
            w = cand;
            s = s_cand;
            t *= 2.0;
            if (moved < 1e-14) break;
        }
        sol.iterations += 1;
    }
    sol.weights.weights = w;
    sol.sharpe = portfolio_sharpe(m, w, risk_free);
    return sol;
}

WeightVector max_sharpe(const MomentEstimate& m, double risk_free, const MaxSharpeOptions& opts) {
    return solve_max_sharpe(m, risk_free, opts).weights;
}

WeightVector equal_weights(const std::vector<std::string>& tickers) {
    if (tickers.empty()) throw ParameterError("equal weights need at least one ticker");
    WeightVector w;
    w.tickers = tickers;
    w.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(tickers.size()),
                                          1.0 / static_cast<double>(tickers.size()));
    return w;
}

void write_weights_csv(std::ostream& out, const WeightVector& w) {
    out << "ticker,weight\n";
    const auto old = out.precision(17);
    for (std::size_t i = 0; i < w.tickers.size(); ++i) out << w.tickers[i] << ',' << w.weights(static_cast<Eigen::Index>(i)) << '\n';
    out.precision(old);
}

}  // namespace stocksel
