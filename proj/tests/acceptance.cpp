// Acceptance suite: one PASS/FAIL line per criterion, each checked at its stated tolerance and
// runtime budget. Exit status is non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "stocksel/allocation.hpp"
#include "stocksel/backtest.hpp"
#include "stocksel/cli.hpp"
#include "stocksel/clustering.hpp"
#include "stocksel/graph_structure.hpp"
#include "stocksel/latent_models.hpp"
#include "stocksel/market_data.hpp"
#include "stocksel/selection.hpp"
#include "stocksel/vae.hpp"

using namespace stocksel;
namespace fs = std::filesystem;

namespace {

/// Collects failed checks for one criterion.
class Checker {
public:
    void expect(bool ok, const std::string& what) {
        ++checks_;
        if (!ok) failures_.push_back(what);
    }
    void note(const std::string& text) { notes_.push_back(text); }
    const std::vector<std::string>& failures() const { return failures_; }
    const std::vector<std::string>& notes() const { return notes_; }
    int checks() const { return checks_; }

private:
    int checks_ = 0;
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

std::string num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

Date ymd(int y, unsigned m, unsigned d) { return Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}; }

Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(rng);
    return m;
}

Eigen::MatrixXd uniform_points(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd p(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) p(i, j) = u(rng);
    return p;
}

double max_off_diagonal(const Eigen::MatrixXd& s) {
    double m = 0.0;
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.cols(); ++j)
            if (i != j) m = std::max(m, std::abs(s(i, j)));
    return m;
}

/// Five simulated years (2013-2017) plus one training year on the seeded 50-stock market.
SynthConfig five_year_market() {
    SynthConfig sc;
    sc.n_stocks = 50;
    sc.n_days = 6 * 261;
    sc.n_factors = 3;
    return sc;
}

BacktestConfig five_year_run() {
    BacktestConfig cfg;
    cfg.initial_capital = 10000.0;
    cfg.start = ymd(2013, 1, 1);
    cfg.end = ymd(2017, 12, 31);
    cfg.risk_free = {{2012, 0.001}, {2013, 0.001}, {2014, 0.001}, {2015, 0.001}, {2016, 0.003}, {2017, 0.009}};
    return cfg;
}

// ---------------------------------------------------------------------------------------------

void graphical_lasso_criterion(Checker& c) {
    Eigen::Matrix2d s;
    s << 1.0, 0.5, 0.5, 1.0;
    const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
    Eigen::Matrix2d inv;
    inv << s(1, 1) / det, -s(0, 1) / det, -s(1, 0) / det, s(0, 0) / det;
    const double inv_err = (graphical_lasso(s, 0.0).theta - inv).cwiseAbs().maxCoeff();
    c.expect(inv_err < 1e-6, "2x2 unpenalised inverse error " + num(inv_err));

    std::mt19937_64 rng(1);
    const Eigen::MatrixXd spd = oracle::random_spd(6, rng);
    const auto shrunk = graphical_lasso(spd, max_off_diagonal(spd));
    double diag_err = 0.0;
    for (Eigen::Index i = 0; i < 6; ++i)
        for (Eigen::Index j = 0; j < 6; ++j)
            diag_err = std::max(diag_err, std::abs(shrunk.theta(i, j) - (i == j ? 1.0 / spd(i, i) : 0.0)));
    c.expect(diag_err < 1e-8, "full-shrinkage diagonal error " + num(diag_err));

    std::mt19937_64 rng2(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd m = oracle::random_spd(10, rng2);
        const double lambda = 0.1 * max_off_diagonal(m) * (1 + trial % 5);
        worst = std::max(worst, oracle::glasso_kkt_violation(m, graphical_lasso(m, lambda).theta, lambda));
    }
    c.expect(worst <= 1e-4, "worst KKT residual " + num(worst));
    c.note("worst KKT residual over 20 matrices " + num(worst));
}

void affinity_propagation_criterion(Checker& c) {
    Eigen::MatrixXd centers(3, 2);
    centers << 0, 0, 10, 0, 0, 10;
    std::vector<int> labels;
    const Eigen::MatrixXd pts = oracle::blobs(centers, 10, 0.5, 11, &labels);
    const auto model = affinity_propagation(pts);
    c.expect(model.n_clusters() == 3, "blob cluster count " + std::to_string(model.n_clusters()));
    const double ari = adjusted_rand_index(model.assignment, labels);
    c.expect(ari == 1.0, "blob adjusted Rand " + num(ari));

    // Two points 4 apart, preference 0, damping 0.5. By hand:
    //   iteration 1: r = 0.5 * [[16, -16], [-16, 16]] = [[8, -8], [-8, 8]], a = 0
    //   iteration 2: r(k, k) = 0.5 * 8 + 0.5 * 16 = 12, a stays 0
    Eigen::MatrixXd two(2, 1);
    two << 0.0, 4.0;
    AffinityState st = make_affinity_state(two, 0.5, 0.0);
    st.iterate();
    Eigen::Matrix2d r1;
    r1 << 8, -8, -8, 8;
    c.expect(st.r == Eigen::MatrixXd(r1), "responsibilities after one iteration");
    c.expect(st.a == Eigen::MatrixXd::Zero(2, 2), "availabilities after one iteration");
    st.iterate();
    c.expect(st.r(0, 0) == 12.0 && st.r(1, 1) == 12.0 && st.r(0, 1) == -12.0, "responsibilities after two iterations");
    c.expect(st.a == Eigen::MatrixXd::Zero(2, 2), "availabilities after two iterations");
}

void ward_criterion(Checker& c) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Eigen::MatrixXd p = uniform_points(6, 2, 100 + seed);
        const auto m = ward_agglomerative(p, 1);
        const auto expected = oracle::greedy_ward(p, 1);
        bool same = m.merges.size() == expected.size();
        for (std::size_t s = 0; same && s < expected.size(); ++s) {
            same = std::min(m.merges[s].left, m.merges[s].right) == std::min(expected[s].left, expected[s].right) &&
                   std::max(m.merges[s].left, m.merges[s].right) == std::max(expected[s].left, expected[s].right) &&
                   std::abs(m.merges[s].cost - expected[s].cost) < 1e-10;
        }
        c.expect(same, "merge sequence differs from greedy search, seed " + std::to_string(seed));
    }
    const Eigen::MatrixXd p = uniform_points(25, 3, 7);
    Connectivity complete;
    for (std::size_t i = 0; i < 25; ++i)
        for (std::size_t j = i + 1; j < 25; ++j) complete.emplace_back(i, j);
    for (std::size_t k : {1u, 4u, 10u}) {
        const auto free = ward_agglomerative(p, k);
        const auto full = ward_agglomerative(p, k, complete);
        bool same = free.assignment == full.assignment && free.merges.size() == full.merges.size();
        for (std::size_t s = 0; same && s < free.merges.size(); ++s) {
            same = free.merges[s].left == full.merges[s].left && free.merges[s].right == full.merges[s].right &&
                   free.merges[s].cost == full.merges[s].cost;
        }
        c.expect(same, "complete connectivity differs from unconstrained at k=" + std::to_string(k));
    }
}

double vae_gradient_error(Likelihood kind, std::uint64_t seed) {
    VaeModel m = vae_init(5, kind, seed, 7, 2);
    for (std::size_t i = 0; i < kVaeTensorCount; ++i)
        m.params[i] += gaussian(m.params[i].rows(), m.params[i].cols(), seed + i, 0.1);
    const Eigen::MatrixXd x = gaussian(5, 6, seed + 100);
    const Eigen::MatrixXd noise = gaussian(2, 6, seed + 200);
    const ElboResult analytic = vae_elbo(m, x, noise, true);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t t = 0; t < kVaeTensorCount; ++t) {
        for (Eigen::Index i = 0; i < m.params[t].size(); ++i) {
            VaeModel plus = m, minus = m;
            plus.params[t].data()[i] += h;
            minus.params[t].data()[i] -= h;
            const double fd = (vae_elbo(plus, x, noise, false).elbo - vae_elbo(minus, x, noise, false).elbo) / (2 * h);
            const double an = analytic.gradient[t].data()[i];
            worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
        }
    }
    return worst;
}

void vae_criterion(Checker& c) {
    for (auto kind : {Likelihood::Normal, Likelihood::Cauchy}) {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const double err = vae_gradient_error(kind, seed);
            c.expect(err < 1e-4, to_string(kind) + " gradient relative error " + num(err));
        }
    }
    const double kl0 = kl_to_standard_normal(Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0));
    const double kl_half = kl_to_standard_normal(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0));
    c.expect(std::abs(kl0) <= 1e-12, "KL at the prior " + num(kl0));
    c.expect(std::abs(kl_half - 0.5) <= 1e-12, "KL with unit mean shift " + num(kl_half));
    const double mode = cauchy_log_density(0.3, 0.3, 1.0);
    c.expect(std::abs(mode + std::log(std::numbers::pi)) <= 1e-12, "Cauchy log-density at mode " + num(mode));

    const auto rp = synth_returns(SynthConfig{});
    for (auto kind : {Likelihood::Normal, Likelihood::Cauchy}) {
        VaeTrainConfig tc;
        tc.kind = kind;
        tc.epochs = 300;
        tc.seed = 3;
        const VaeModel model = vae_train(rp, tc);
        const double initial = model.elbo_history.front();
        const double final_smoothed = smoothed_elbo(model.elbo_history).back();
        c.expect(final_smoothed > initial,
                 to_string(kind) + " smoothed ELBO " + num(final_smoothed) + " not above initial " + num(initial));
        c.note(to_string(kind) + " ELBO " + num(initial) + " -> " + num(final_smoothed) + " (smoothed)");
    }
}

void pca_criterion(Checker& c) {
    SynthConfig exact;
    exact.noise_scale = 0.0;
    const auto rp = synth_returns(exact);
    const double worst = pca_reconstruct(fit_pca(rp, 3), rp).errors.maxCoeff();
    c.expect(worst < 1e-8, "zero-noise k=3 worst error " + num(worst));

    const auto noisy = synth_returns(SynthConfig{});
    Eigen::VectorXd previous = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(noisy.n_stocks()), INFINITY);
    bool monotone = true;
    for (std::size_t k = 1; k < noisy.n_stocks(); ++k) {
        const Eigen::VectorXd errors = pca_reconstruct(fit_pca(noisy, k), noisy).errors;
        monotone = monotone && (errors.array() <= previous.array() + 1e-12).all();
        previous = errors;
    }
    c.expect(monotone, "reconstruction error increased with k");
}

void max_sharpe_criterion(Checker& c) {
    MomentEstimate two;
    two.tickers = {"A", "B"};
    two.mu = Eigen::Vector2d(0.10, 0.05);
    two.sigma = Eigen::Vector2d(0.01, 0.04).asDiagonal();
    const auto w = max_sharpe(two, 0.0).weights;
    c.expect(std::abs(w(0) - 0.8889) < 1e-4 && std::abs(w(1) - 0.1111) < 1e-4,
             "two-asset tangency (" + num(w(0)) + ", " + num(w(1)) + ")");

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_gap = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 2 + trial % 2;
        Eigen::MatrixXd a(n, n + 2);
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = u(rng) - 0.5;
        MomentEstimate m;
        m.mu.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            m.mu(i) = 0.02 + 0.15 * u(rng);
            m.tickers.push_back("S" + std::to_string(i));
        }
        m.sigma = 0.1 * a * a.transpose() + 0.01 * Eigen::MatrixXd::Identity(n, n);
        const double rf = 0.03;
        const double solved = oracle::sharpe(m.mu, m.sigma, rf, max_sharpe(m, rf).weights);
        const double grid = oracle::grid_best_sharpe(m.mu, m.sigma, rf, 0.01);
        worst_gap = std::max(worst_gap, std::abs(solved - grid));
    }
    c.expect(worst_gap < 1e-3, "worst Sharpe gap to the simplex grid " + num(worst_gap));
    c.note("worst Sharpe gap to the simplex grid " + num(worst_gap));
}

/// Every trade keeps the portfolio value, matches the curve on its day and leaves no cash behind.
void check_self_financing(Checker& c, const EquityCurve& curve, const std::string& label) {
    int bad = 0;
    for (const auto& tr : curve.trades) {
        double held = 0.0;
        for (const auto& [ticker, value] : tr.holdings) held += value;
        const auto pos = static_cast<std::size_t>(std::find(curve.dates.begin(), curve.dates.end(), tr.date) -
                                                  curve.dates.begin());
        const bool ok = std::abs(tr.value_after - tr.value_before) <= 1e-9 * tr.value_before &&
                        (tr.holdings.empty() || std::abs(held - tr.value_after) <= 1e-9 * tr.value_after) &&
                        pos < curve.values.size() &&
                        std::abs(curve.values[pos] - tr.value_before) <= 1e-9 * tr.value_before;
        if (!ok) ++bad;
    }
    c.expect(bad == 0, label + ": " + std::to_string(bad) + " trades are not self-financing");
    c.expect(curve.trades.size() > 12, label + ": too few trades to exercise rebalancing");
}

ReturnsPanel ledger_panel() {
    ReturnsPanel rp;
    rp.tickers = {"A", "B"};
    rp.dates = {ymd(2021, 12, 31), ymd(2022, 1, 3), ymd(2022, 2, 1), ymd(2022, 2, 2), ymd(2022, 3, 1), ymd(2022, 3, 2)};
    const double r[6][2] = {{0.3, -0.2}, {0.1, 0.0}, {0.0, 0.1}, {-0.1, 0.2}, {0.05, 0.05}, {0.0, -0.5}};
    rp.returns.resize(2, 6);
    for (int t = 0; t < 6; ++t)
        for (int i = 0; i < 2; ++i) rp.returns(i, t) = r[t][i];
    return rp;
}

void backtester_criterion(Checker& c) {
    {
        const auto rp = synth_returns(1, 300, 1, 4);
        BacktestConfig cfg;
        cfg.initial_capital = 1000.0;
        cfg.start = rp.dates.front();
        cfg.end = ymd(2100, 1, 1);
        PortfolioSpec spec;
        spec.tickers = rp.tickers;
        const auto curve = run_rebalance(rp, build_calendar(rp.dates), spec, equal_weights(rp.tickers), cfg);
        // The same compounding sequence, evaluated independently.
        double v = 1000.0;
        bool exact = curve.values.size() == rp.n_days() && curve.values[0] == v;
        double worst = 0.0;
        for (std::size_t t = 1; exact && t < rp.n_days(); ++t) {
            v *= 1.0 + rp.returns(0, static_cast<Eigen::Index>(t));
            worst = std::max(worst, std::abs(curve.values[t] / v - 1.0));
        }
        c.expect(exact && worst <= 1e-13, "single-stock curve deviates from compounding by " + num(worst));
    }
    {
        // Hand ledger: the first day only opens positions; month starts trade back to 50/50.
        const std::vector<double> ledger = {1000, 1050, 1102.5, 1157.625, 1215.50625, 911.6296875};
        const auto rp = ledger_panel();
        BacktestConfig cfg;
        cfg.initial_capital = 1000.0;
        cfg.start = rp.dates.front();
        cfg.end = ymd(2100, 1, 1);
        PortfolioSpec spec;
        spec.tickers = rp.tickers;
        const auto curve = run_rebalance(rp, build_calendar(rp.dates), spec, equal_weights(rp.tickers), cfg);
        double worst = curve.values.size() == ledger.size() ? 0.0 : INFINITY;
        for (std::size_t t = 0; t < ledger.size() && t < curve.values.size(); ++t)
            worst = std::max(worst, std::abs(curve.values[t] / ledger[t] - 1.0));
        c.expect(worst <= 1e-9, "hand ledger relative error " + num(worst));
    }
    {
        const auto rp = synth_returns(five_year_market());
        const auto cal = build_calendar(rp.dates);
        auto cfg = five_year_run();
        for (auto scheme : {WeightScheme::Equal, WeightScheme::MaxSharpe}) {
            cfg.weight_scheme = scheme;
            const auto result = run_annual_selection(
                rp, cal, [](const ReturnsPanel& t, int) { return select_vol(t, Direction::Min, 10); }, cfg);
            check_self_financing(c, result.curve,
                                 std::string("annual min-vol, ") + (scheme == WeightScheme::Equal ? "equal" : "max-Sharpe"));
        }
        cfg.weight_scheme = WeightScheme::Equal;
        cfg.recluster = ReclusterMode::Quarterly;
        QuarterlyParams params;
        params.method = ClusterMethod::KMeans;
        params.space = EmbeddingSpace::Pca;
        check_self_financing(c, run_dynamic_clusters(rp, cal, params, cfg).curve, "quarterly KMeans");
    }
}

double final_value(const ReturnsPanel& rp, const TradingCalendar& cal, ReclusterMode mode) {
    auto cfg = five_year_run();
    cfg.recluster = mode;
    QuarterlyParams params;
    params.method = ClusterMethod::KMeans;
    params.space = EmbeddingSpace::Pca;
    params.kmeans_k = 10;
    return run_dynamic_clusters(rp, cal, params, cfg).curve.values.back();
}

/// The drift fixture: 30% of stocks decouple from their factor at random onsets, become three
/// times as noisy and trend upwards. Their dispersion earns them their own KMeans clusters once
/// they break away, so only reclustering can pick them up.
SynthConfig drift_market(std::uint64_t seed) {
    SynthConfig sc = five_year_market();
    sc.seed = seed;
    sc.distress_fraction = 0.3;
    sc.distress_drift = 0.002;
    return sc;
}

void paper_pattern_criterion(Checker& c) {
    {
        const auto rp = synth_returns(five_year_market());
        const auto cal = build_calendar(rp.dates);
        const auto cfg = five_year_run();
        auto daily_std = [&](Direction dir) {
            const auto result = run_annual_selection(
                rp, cal, [&](const ReturnsPanel& t, int) { return select_vol(t, dir, 10); }, cfg);
            return compute_metrics(result.curve, cfg.risk_free).daily_std_pct;
        };
        const double hi = daily_std(Direction::Max), lo = daily_std(Direction::Min);
        c.expect(hi > lo, "max-vol daily std " + num(hi) + "% not above min-vol " + num(lo) + "%");
        c.note("daily std: max-vol " + num(hi) + "%, min-vol " + num(lo) + "%");
    }
    {
        const SynthConfig sc = drift_market(SynthConfig{}.seed);
        const auto rp = synth_returns(sc);
        const auto cal = build_calendar(rp.dates);
        const double dynamic = final_value(rp, cal, ReclusterMode::Quarterly);
        const double fixed = final_value(rp, cal, ReclusterMode::Static);
        c.expect(dynamic >= fixed, "quarterly KMeans " + num(dynamic) + " below static " + num(fixed));
        c.note("drift fixture final value: quarterly KMeans " + num(dynamic) + ", static " + num(fixed));
        int wins = 0;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const auto alt = synth_returns(drift_market(seed));
            const auto alt_cal = build_calendar(alt.dates);
            wins += final_value(alt, alt_cal, ReclusterMode::Quarterly) >= final_value(alt, alt_cal, ReclusterMode::Static);
        }
        c.note("quarterly >= static on " + std::to_string(wins) + "/20 other seeds of the drift fixture");
    }
    {
        const auto rp = synth_returns(SynthConfig{});
        VaeTrainConfig tc;
        tc.kind = Likelihood::Cauchy;
        tc.epochs = 300;
        tc.seed = 1;
        const VaeModel model = vae_train(rp, tc);
        const double s = oracle::silhouette(vae_reconstruct(model, rp).latent_coords, factor_groups(rp));
        c.expect(s > 0.0, "Cauchy latent silhouette " + num(s));
        c.note("Cauchy latent silhouette by factor group " + num(s));
    }
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        files[fs::relative(entry.path(), root).generic_string()] = std::string(std::istreambuf_iterator<char>(in), {});
    }
    return files;
}

void end_to_end_criterion(Checker& c) {
    const fs::path config = fs::path(STOCKSEL_SOURCE_DIR) / "configs" / "synthetic.ini";
    const fs::path scratch = fs::temp_directory_path() / "stocksel_acceptance";
    fs::remove_all(scratch);
    std::vector<std::map<std::string, std::string>> outputs;
    for (const char* name : {"first", "second"}) {
        const fs::path out = scratch / name;
        std::ostringstream log, err;
        const int code = run_cli({"run", "--config", config.string(), "--out", out.string()}, log, err);
        c.expect(code == 0, std::string(name) + " run exited " + std::to_string(code) + ": " + err.str());
        if (code != 0) return;
        outputs.push_back(read_tree(out));
    }
    const auto& first = outputs[0];
    std::size_t curves = 0;
    for (const auto& [path, body] : first) curves += path.rfind("curves/", 0) == 0;
    c.expect(curves == 14, "expected 14 equity curves, found " + std::to_string(curves));
    c.expect(first.count("report.json") == 1, "report.json missing");
    c.expect(first.count("FAILED.json") == 0, "run reported a failure");
    std::vector<std::string> differing;
    for (const auto& [path, body] : first) {
        const auto it = outputs[1].find(path);
        if (it == outputs[1].end() || it->second != body) differing.push_back(path);
    }
    c.expect(first.size() == outputs[1].size() && differing.empty(),
             "rerun differs in " + std::to_string(differing.size()) + " files" +
                 (differing.empty() ? "" : " (first: " + differing.front() + ")"));
    c.note(std::to_string(first.size()) + " output files compared byte for byte");
    fs::remove_all(scratch);
}

struct Criterion {
    int id;
    std::string name;
    double budget_seconds;  ///< 0 means no runtime limit
    std::function<void(Checker&)> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "graphical lasso", 5.0, graphical_lasso_criterion},
        {2, "affinity propagation", 2.0, affinity_propagation_criterion},
        {3, "Ward agglomeration", 0.0, ward_criterion},
        {4, "variational autoencoder", 60.0, vae_criterion},
        {5, "PCA reconstruction", 0.0, pca_criterion},
        {6, "max-Sharpe allocation", 10.0, max_sharpe_criterion},
        {7, "backtester", 0.0, backtester_criterion},
        {8, "qualitative patterns on the synthetic market", 300.0, paper_pattern_criterion},
        {9, "end-to-end run", 600.0, end_to_end_criterion},
    };
    int failed = 0;
    for (const auto& crit : criteria) {
        Checker checker;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            crit.run(checker);
        } catch (const std::exception& e) {
            checker.expect(false, std::string("exception: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (crit.budget_seconds > 0.0) {
            checker.expect(seconds < crit.budget_seconds,
                           "runtime " + num(seconds) + " s exceeds " + num(crit.budget_seconds) + " s");
        }
        const bool ok = checker.failures().empty();
        failed += !ok;
        std::printf("%s criterion %d: %s (%d checks, %.2f s)\n", ok ? "PASS" : "FAIL", crit.id, crit.name.c_str(),
                    checker.checks(), seconds);
        for (const auto& n : checker.notes()) std::printf("    %s\n", n.c_str());
        for (const auto& f : checker.failures()) std::printf("    failed: %s\n", f.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
