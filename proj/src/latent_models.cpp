#include "stocksel/latent_models.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "stocksel/errors.hpp"

namespace stocksel {

double PcaModel::explained_variance_ratio() const {
    const double total = singular_values.squaredNorm();
    if (total == 0.0) return 1.0;
    return singular_values.head(components.rows()).squaredNorm() / total;
}

PcaModel fit_pca(const Eigen::MatrixXd& data, std::size_t k) {
    const auto max_k = static_cast<std::size_t>(std::min(data.rows(), data.cols()));
    if (k < 1 || k > max_k) {
        throw ParameterError("PCA component count " + std::to_string(k) + " outside [1, " +
                             std::to_string(max_k) + "]");
    }
    PcaModel m;
    m.mean = data.colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.rowwise() - m.mean.transpose();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    m.singular_values = svd.singularValues();
    m.components = svd.matrixV().leftCols(static_cast<Eigen::Index>(k)).transpose();
    for (Eigen::Index r = 0; r < m.components.rows(); ++r) {
        Eigen::Index arg = 0;
        m.components.row(r).cwiseAbs().maxCoeff(&arg);
        if (m.components(r, arg) < 0.0) m.components.row(r) *= -1.0;
    }
    return m;
}

PcaModel fit_pca(const ReturnsPanel& rp, std::size_t k) { return fit_pca(rp.returns, k); }

ReconstructionReport pca_reconstruct(const PcaModel& model, const Eigen::MatrixXd& data) {
    if (data.cols() != model.mean.size()) {
        throw ParameterError("PCA model expects " + std::to_string(model.mean.size()) +
                             " days, panel has " + std::to_string(data.cols()));
    }
    ReconstructionReport r;
    const Eigen::MatrixXd centered = data.rowwise() - model.mean.transpose();
    r.latent_coords = centered * model.components.transpose();
    const Eigen::MatrixXd residual = centered - r.latent_coords * model.components;
    r.errors = residual.rowwise().norm();
    return r;
}

ReconstructionReport pca_reconstruct(const PcaModel& model, const ReturnsPanel& rp) {
    auto r = pca_reconstruct(model, rp.returns);
    r.tickers = rp.tickers;
    return r;
}

std::vector<std::string> select_extreme(const ReconstructionReport& report, Direction direction,
                                        std::size_t n) {
    const std::size_t total = report.tickers.size();
    if (static_cast<std::size_t>(report.errors.size()) != total) {
        throw ParameterError("report has mismatched tickers and errors");
    }
    if (n > total) {
        throw ParameterError("cannot select " + std::to_string(n) + " of " + std::to_string(total) +
                             " stocks");
    }
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ea = report.errors(static_cast<Eigen::Index>(a));
        const double eb = report.errors(static_cast<Eigen::Index>(b));
        if (ea != eb) return direction == Direction::Max ? ea > eb : ea < eb;
        return report.tickers[a] < report.tickers[b];
    });
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(report.tickers[order[i]]);
    return out;
}

std::vector<std::string> aggregate_selections(const std::vector<std::vector<std::string>>& runs,
                                              std::size_t n) {
    if (runs.empty()) throw ParameterError("no selection runs to aggregate");
    std::map<std::string, std::size_t> counts;
    for (const auto& run : runs) {
        for (const auto& t : run) ++counts[t];
    }
    if (counts.size() < n) {
        throw ParameterError("only " + std::to_string(counts.size()) +
                             " distinct tickers across runs, need " + std::to_string(n));
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    // counts is already in ticker order, so a stable sort on count keeps the tie rule.
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(ranked[i].first);
    return out;
}

}  // namespace stocksel
