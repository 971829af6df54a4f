#include "stocksel/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "stocksel/allocation.hpp"
#include "stocksel/errors.hpp"
#include "stocksel/graph_structure.hpp"
#include "stocksel/latent_models.hpp"
#include "stocksel/report.hpp"
#include "stocksel/selection.hpp"
#include "stocksel/vae.hpp"

namespace stocksel {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

// ---------------------------------------------------------------------------
// Config parsing

const pt::ptree* section(const pt::ptree& tree, const std::string& name) {
    for (const auto& [key, child] : tree)
        if (key == name) return &child;
    return nullptr;
}

std::optional<std::string> value(const pt::ptree* sec, const std::string& key) {
    if (!sec) return std::nullopt;
    for (const auto& [k, child] : *sec)
        if (k == key) return child.data();
    return std::nullopt;
}

std::string where(const std::string& sec, const std::string& key) { return "[" + sec + "] " + key; }

double to_double(const std::string& text, const std::string& ctx) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw ConfigError(ctx + ": expected a number, got '" + text + "'");
    }
    return v;
}

long long to_integer(const std::string& text, const std::string& ctx) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ConfigError(ctx + ": expected an integer, got '" + text + "'");
    }
    return v;
}

std::size_t to_count(const std::string& text, const std::string& ctx) {
    const long long v = to_integer(text, ctx);
    if (v < 0) throw ConfigError(ctx + ": must be non-negative");
    return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& text, const std::string& ctx) {
    if (text == "true" || text == "yes" || text == "1") return true;
    if (text == "false" || text == "no" || text == "0") return false;
    throw ConfigError(ctx + ": expected true/false, got '" + text + "'");
}

Date to_date(const std::string& text, const std::string& ctx) {
    try {
        return parse_date(text);
    } catch (const InputError& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

WeightScheme to_weights(const std::string& text, const std::string& ctx) {
    if (text == "equal") return WeightScheme::Equal;
    if (text == "maxsharpe" || text == "max_sharpe") return WeightScheme::MaxSharpe;
    throw ConfigError(ctx + ": weights must be 'equal' or 'maxsharpe'");
}

EmbeddingSpace to_space(const std::string& text, const std::string& ctx) {
    if (text == "pca") return EmbeddingSpace::Pca;
    if (text == "spectral") return EmbeddingSpace::Spectral;
    throw ConfigError(ctx + ": space must be 'pca' or 'spectral'");
}

void apply_strategy_keys(StrategyConfig& s, const pt::ptree* sec, const std::string& name) {
    if (!sec) return;
    for (const auto& [key, child] : *sec) {
        const std::string& v = child.data();
        const std::string ctx = where(name, key);
        if (key == "kind") s.kind = v;
        else if (key == "weights") s.weights = to_weights(v, ctx);
        else if (key == "n") s.n = to_count(v, ctx);
        else if (key == "pca_components") s.pca_components = to_count(v, ctx);
        else if (key == "vae_epochs") s.vae_epochs = static_cast<int>(to_integer(v, ctx));
        else if (key == "vae_lr") s.vae_lr = to_double(v, ctx);
        else if (key == "vae_repeats") s.vae_repeats = to_count(v, ctx);
        else if (key == "kmeans_k") s.kmeans_k = to_count(v, ctx);
        else if (key == "kmeans_space") s.kmeans_space = to_space(v, ctx);
        else if (key == "ward_clusters") s.ward_clusters = to_count(v, ctx);
        else if (key == "ward_connectivity") s.ward_connectivity = to_bool(v, ctx);
        else if (key == "damping") s.damping = to_double(v, ctx);
        else if (key == "preference") s.preference = to_double(v, ctx);
        else if (key == "ap_max_iter") s.ap_max_iter = static_cast<int>(to_integer(v, ctx));
        else if (key == "ap_conv_iters") s.ap_conv_iters = static_cast<int>(to_integer(v, ctx));
        else if (key == "glasso_lambda") s.glasso_lambda = to_double(v, ctx);
        else if (key == "per_cluster") s.per_cluster = to_count(v, ctx);
        else if (key == "max_weight") s.max_weight = to_double(v, ctx);
        else throw ConfigError(ctx + ": unknown key");
    }
}

std::string resolve(const std::string& base_dir, const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute() || base_dir.empty()) return path;
    return (fs::path(base_dir) / path).string();
}

}  // namespace

const std::vector<std::string>& known_strategy_kinds() {
    static const std::vector<std::string> kinds = {
        "pca_max",   "pca_min",   "vae_normal_max", "vae_normal_min", "vae_cauchy_max", "vae_cauchy_min",
        "vol_max",   "vol_min",   "avgretvol_max",  "avgretvol_min",  "affinity",       "ward",
        "kmeans_dynamic", "kmeans_static", "benchmark"};
    return kinds;
}

RunConfig parse_run_config(std::istream& in, const std::string& base_dir) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    RunConfig cfg;

    const auto* data = section(tree, "data");
    if (auto v = value(data, "prices")) cfg.data.prices = resolve(base_dir, *v);
    if (auto v = value(data, "sectors")) cfg.data.sectors = resolve(base_dir, *v);
    if (auto v = value(data, "benchmark")) cfg.data.benchmark = resolve(base_dir, *v);
    if (auto v = value(data, "synthetic")) cfg.data.synthetic = to_bool(*v, where("data", "synthetic"));

    if (const auto* syn = section(tree, "synthetic")) {
        auto& s = cfg.data.synth;
        for (const auto& [key, child] : *syn) {
            const std::string ctx = where("synthetic", key);
            const std::string& v = child.data();
            if (key == "stocks") s.n_stocks = to_count(v, ctx);
            else if (key == "days") s.n_days = to_count(v, ctx);
            else if (key == "factors") s.n_factors = to_count(v, ctx);
            else if (key == "seed") s.seed = static_cast<std::uint64_t>(to_count(v, ctx));
            else if (key == "noise") s.noise_scale = to_double(v, ctx);
            else if (key == "distress_fraction") s.distress_fraction = to_double(v, ctx);
            else if (key == "distress_drift") s.distress_drift = to_double(v, ctx);
            else if (key == "start") s.start = to_date(v, ctx);
            else throw ConfigError(ctx + ": unknown key");
        }
    }

    const auto* sim = section(tree, "simulation");
    if (auto v = value(sim, "from")) cfg.from = to_date(*v, where("simulation", "from"));
    else throw ConfigError("[simulation] from is required");
    if (auto v = value(sim, "to")) cfg.to = to_date(*v, where("simulation", "to"));
    else throw ConfigError("[simulation] to is required");
    if (auto v = value(sim, "initial_capital")) cfg.initial_capital = to_double(*v, where("simulation", "initial_capital"));

    if (const auto* rf = section(tree, "risk_free")) {
        for (const auto& [key, child] : *rf) {
            const std::string ctx = where("risk_free", key);
            cfg.risk_free[static_cast<int>(to_integer(key, ctx))] = to_double(child.data(), ctx);
        }
    }
    const auto* output = section(tree, "output");
    if (auto v = value(output, "dir")) cfg.out_dir = resolve(base_dir, *v);

    const auto* run = section(tree, "run");
    if (auto v = value(run, "seed")) cfg.seed = static_cast<std::uint64_t>(to_count(*v, where("run", "seed")));
    const auto list = value(run, "strategies");
    if (!list) throw ConfigError("[run] strategies is required");

    StrategyConfig defaults;
    apply_strategy_keys(defaults, section(tree, "defaults"), "defaults");
    for (const auto& id : split_list(*list)) {
        StrategyConfig s = defaults;
        s.id = id;
        s.kind = id;
        apply_strategy_keys(s, section(tree, "strategy." + id), "strategy." + id);
        cfg.strategies.push_back(s);
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_run_config(in, fs::path(path).parent_path().string());
}

void validate_run_config(const RunConfig& cfg) {
    if (!(cfg.from < cfg.to)) throw ConfigError("[simulation] from must precede to");
    if (!(cfg.initial_capital > 0.0)) throw ConfigError("[simulation] initial_capital must be positive");
    if (!cfg.data.synthetic && cfg.data.prices.empty()) throw ConfigError("[data] prices is required unless synthetic = true");
    if (cfg.data.synthetic) {
        const auto& s = cfg.data.synth;
        if (s.n_stocks < 1 || s.n_days < 1 || s.n_factors < 1) throw ConfigError("[synthetic] dimensions must be >= 1");
        if (s.noise_scale < 0.0) throw ConfigError("[synthetic] noise must be >= 0");
        if (s.distress_fraction < 0.0 || s.distress_fraction > 1.0) throw ConfigError("[synthetic] distress_fraction must lie in [0, 1]");
    }
    if (cfg.strategies.empty()) throw ConfigError("[run] strategies lists nothing");
    std::set<std::string> ids;
    const auto& kinds = known_strategy_kinds();
    for (const auto& s : cfg.strategies) {
        const std::string ctx = "strategy '" + s.id + "'";
        if (!ids.insert(s.id).second) throw ConfigError(ctx + " listed twice");
        if (std::find(kinds.begin(), kinds.end(), s.kind) == kinds.end() && s.kind != "kmeans") {
            throw ConfigError(ctx + ": unknown kind '" + s.kind + "'");
        }
        if (s.n < 1) throw ConfigError(ctx + ": n must be >= 1");
        if (s.pca_components < 1) throw ConfigError(ctx + ": pca_components must be >= 1");
        if (s.vae_epochs < 1) throw ConfigError(ctx + ": vae_epochs must be >= 1");
        if (!(s.vae_lr > 0.0)) throw ConfigError(ctx + ": vae_lr must be positive");
        if (s.vae_repeats < 1) throw ConfigError(ctx + ": vae_repeats must be >= 1");
        if (s.kmeans_k < 1) throw ConfigError(ctx + ": kmeans_k must be >= 1");
        if (s.ward_clusters < 1) throw ConfigError(ctx + ": ward_clusters must be >= 1");
        if (!(s.damping >= 0.5 && s.damping < 1.0)) throw ConfigError(ctx + ": damping must lie in [0.5, 1)");
        if (s.ap_max_iter < 1 || s.ap_conv_iters < 1) throw ConfigError(ctx + ": affinity iteration counts must be >= 1");
        if (s.glasso_lambda && *s.glasso_lambda < 0.0) throw ConfigError(ctx + ": glasso_lambda must be >= 0");
        if (s.per_cluster < 1) throw ConfigError(ctx + ": per_cluster must be >= 1");
        if (s.max_weight && !(*s.max_weight > 0.0 && *s.max_weight <= 1.0)) {
            throw ConfigError(ctx + ": max_weight must lie in (0, 1]");
        }
        if (s.max_weight && *s.max_weight * static_cast<double>(s.n) < 1.0) {
            throw ConfigError(ctx + ": max_weight * n must be at least 1");
        }
    }
}

namespace {

// ---------------------------------------------------------------------------
// Running strategies

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

bool is_annual(const std::string& kind) {
    return starts_with(kind, "pca_") || starts_with(kind, "vae_") || starts_with(kind, "vol_") ||
           starts_with(kind, "avgretvol_");
}

bool is_cluster(const std::string& kind) {
    return kind == "affinity" || kind == "ward" || starts_with(kind, "kmeans");
}

Direction direction_of(const std::string& kind) {
    return kind.size() > 4 && kind.compare(kind.size() - 4, 4, "_max") == 0 ? Direction::Max : Direction::Min;
}

struct LoadedData {
    ReturnsPanel returns;
    TradingCalendar calendar;
    ReturnsPanel benchmark;
    std::vector<std::string> notes;
};

ReturnsPanel market_average(const ReturnsPanel& rp) {
    ReturnsPanel idx;
    idx.tickers = {"MARKET"};
    idx.dates = rp.dates;
    idx.returns = rp.returns.colwise().mean();
    return idx;
}

LoadedData load_data(const RunConfig& cfg) {
    LoadedData d;
    PricePanel prices;
    if (cfg.data.synthetic) {
        prices = synth_prices(cfg.data.synth);
    } else {
        auto loaded = load_prices(cfg.data.prices, true);
        prices = std::move(loaded.panel);
        d.notes = loaded.warnings;
        if (!cfg.data.sectors.empty()) prices.sectors = load_sectors(cfg.data.sectors);
    }
    d.returns = compute_returns(prices);
    d.calendar = build_calendar(d.returns.dates);
    if (!cfg.data.benchmark.empty()) {
        auto bench = load_prices(cfg.data.benchmark, true);
        if (bench.panel.n_stocks() != 1) throw InputError("benchmark file must hold exactly one price series");
        d.benchmark = compute_returns(bench.panel);
    } else {
        d.benchmark = market_average(d.returns);
    }
    return d;
}

BacktestConfig backtest_config(const RunConfig& cfg, const StrategyConfig& s) {
    BacktestConfig b;
    b.initial_capital = cfg.initial_capital;
    b.start = cfg.from;
    b.end = cfg.to;
    b.risk_free = cfg.risk_free;
    b.weight_scheme = s.weights;
    b.max_sharpe.max_weight = s.max_weight;
    if (s.kind == "kmeans_static") b.recluster = ReclusterMode::Static;
    else if (is_cluster(s.kind)) b.recluster = ReclusterMode::Quarterly;
    return b;
}

/// Checks the data-dependent preconditions of every strategy before any model is fitted.
void validate_against_data(const RunConfig& cfg, const LoadedData& d) {
    const ReturnsPanel& rp = d.returns;
    const TradingCalendar& cal = d.calendar;
    BacktestConfig probe;
    probe.start = cfg.from;
    probe.end = cfg.to;
    std::size_t begin = 0;
    try {
        begin = simulation_range(rp, probe).first;
        simulation_range(d.benchmark, probe);
    } catch (const EmptyWindowError& e) {
        throw ConfigError(e.what());
    }
    const std::size_t n_stocks = rp.n_stocks();
    for (const auto& s : cfg.strategies) {
        const std::string ctx = "strategy '" + s.id + "'";
        if (is_annual(s.kind)) {
            if (s.n > n_stocks) throw ConfigError(ctx + ": n exceeds the " + std::to_string(n_stocks) + "-stock universe");
            const int year = year_of(rp.dates[begin]);
            const auto prior = std::find_if(cal.year_windows.begin(), cal.year_windows.end(),
                                            [&](const YearWindow& w) { return w.year == year - 1; });
            const std::size_t need = s.weights == WeightScheme::MaxSharpe ? kMinMomentWindow : 2;
            if (prior == cal.year_windows.end() || prior->end - prior->begin < need) {
                throw ConfigError(ctx + ": needs a full training year before " + format_date(rp.dates[begin]));
            }
            if (starts_with(s.kind, "pca_") && s.pca_components > std::min(n_stocks, prior->end - prior->begin)) {
                throw ConfigError(ctx + ": pca_components exceeds the data dimensions");
            }
        }
        if (is_cluster(s.kind)) {
            if (starts_with(s.kind, "kmeans") && s.kmeans_k > n_stocks) throw ConfigError(ctx + ": kmeans_k exceeds the universe");
            if (s.kind == "ward" && s.ward_clusters > n_stocks) throw ConfigError(ctx + ": ward_clusters exceeds the universe");
            if (n_stocks < 3) throw ConfigError(ctx + ": clustering needs at least 3 stocks");
            bool trained = false;
            for (std::size_t q = 1; q < cal.quarter_starts.size(); ++q) trained |= cal.quarter_starts[q] <= begin;
            if (!trained) throw ConfigError(ctx + ": needs a full quarter of history before the simulation start");
        }
    }
}

class VaeCache {
public:
    const std::vector<ReconstructionReport>& reports(const ReturnsPanel& training, int year, Likelihood kind,
                                                     const StrategyConfig& s, std::uint64_t seed) {
        std::ostringstream key;
        key << to_string(kind) << '|' << year << '|' << s.vae_epochs << '|' << s.vae_lr << '|' << s.vae_repeats;
        auto it = cache_.find(key.str());
        if (it != cache_.end()) return it->second;
        VaeTrainConfig tc;
        tc.kind = kind;
        tc.epochs = s.vae_epochs;
        tc.learning_rate = s.vae_lr;
        tc.seed = seed;
        std::vector<ReconstructionReport> reps;
        for (const auto& m : vae_train_repeated(training, tc, s.vae_repeats)) reps.push_back(vae_reconstruct(m, training));
        return cache_.emplace(key.str(), std::move(reps)).first->second;
    }

private:
    std::map<std::string, std::vector<ReconstructionReport>> cache_;
};

StrategyResult run_strategy(const RunConfig& cfg, const StrategyConfig& s, const LoadedData& d, VaeCache& vae_cache) {
    const BacktestConfig bcfg = backtest_config(cfg, s);
    StrategyResult result;
    if (s.kind == "benchmark") {
        result.curve = run_benchmark(d.benchmark, bcfg);
    } else if (is_cluster(s.kind)) {
        QuarterlyParams qp;
        qp.seed = cfg.seed;
        qp.pca_components = s.pca_components;
        qp.kmeans_k = s.kmeans_k;
        qp.ward_clusters = s.ward_clusters;
        qp.ward_connectivity = s.ward_connectivity;
        qp.glasso_lambda = s.glasso_lambda;
        qp.affinity.damping = s.damping;
        qp.affinity.preference = s.preference;
        qp.affinity.max_iter = s.ap_max_iter;
        qp.affinity.conv_iters = s.ap_conv_iters;
        if (starts_with(s.kind, "kmeans")) {
            qp.method = ClusterMethod::KMeans;
            qp.space = s.kmeans_space;
        } else {
            qp.method = s.kind == "ward" ? ClusterMethod::Ward : ClusterMethod::AffinityPropagation;
            qp.space = EmbeddingSpace::Spectral;
        }
        result = run_dynamic_clusters(d.returns, d.calendar, qp, bcfg, s.per_cluster);
    } else {
        const Direction dir = direction_of(s.kind);
        AnnualSelector select = [&](const ReturnsPanel& training, int year) -> PortfolioSpec {
            PortfolioSpec spec;
            if (starts_with(s.kind, "pca_")) {
                const PcaModel pca = fit_pca(training, s.pca_components);
                spec = select_model_extreme(pca_reconstruct(pca, training), dir, s.n, s.id);
            } else if (starts_with(s.kind, "vae_")) {
                const Likelihood kind = starts_with(s.kind, "vae_normal") ? Likelihood::Normal : Likelihood::Cauchy;
                std::vector<std::vector<std::string>> runs;
                for (const auto& rep : vae_cache.reports(training, year, kind, s, cfg.seed)) {
                    runs.push_back(select_extreme(rep, dir, s.n));
                }
                spec.tickers = aggregate_selections(runs, s.n);
            } else if (starts_with(s.kind, "vol_")) {
                spec = select_vol(training, dir, s.n);
            } else {
                spec = select_avgret_over_vol(training, dir, s.n);
            }
            spec.strategy_tag = s.id;
            return spec;
        };
        result = run_annual_selection(d.returns, d.calendar, select, bcfg);
    }
    result.curve.strategy = s.id;
    for (auto& p : result.portfolios) p.strategy_tag = s.id;
    return result;
}

std::string render(const std::function<void(std::ostream&)>& fn) {
    std::ostringstream ss;
    fn(ss);
    return ss.str();
}

void write_strategy_outputs(const std::string& out_dir, const StrategyConfig& s, const StrategyResult& r) {
    const fs::path base(out_dir);
    write_file_atomic((base / "curves" / (s.id + ".csv")).string(),
                      render([&](std::ostream& o) { write_equity_csv(o, r.curve); }));
    if (!r.portfolios.empty()) {
        write_file_atomic((base / "portfolios" / (s.id + ".csv")).string(),
                          render([&](std::ostream& o) { write_portfolios_csv(o, r.portfolios); }));
    }
    // weights hold one entry per non-empty portfolio, in portfolio order
    std::size_t w = 0;
    for (const auto& p : r.portfolios) {
        if (p.tickers.empty()) continue;
        if (w >= r.weights.size()) break;
        const std::string name = s.id + "_" + format_date(p.as_of) + ".csv";
        const WeightVector& wv = r.weights[w++];
        write_file_atomic((base / "weights" / name).string(),
                          render([&](std::ostream& o) { write_weights_csv(o, wv); }));
    }
    if (!r.quarter_models.empty()) {
        write_file_atomic((base / "clusters" / (s.id + ".csv")).string(),
                          render([&](std::ostream& o) { write_clusters_csv(o, r.quarter_models); }));
    }
}

void write_failure_manifest(const std::string& out_dir, const std::string& stage, const std::string& error,
                            const std::vector<std::string>& completed) {
    nlohmann::json j;
    j["status"] = "failed";
    j["stage"] = stage;
    j["error"] = error;
    j["completed_strategies"] = completed;
    try {
        write_file_atomic((fs::path(out_dir) / "FAILED.json").string(), j.dump(2) + "\n");
    } catch (const std::exception&) {
        // the original error is what matters to the caller
    }
}

// ---------------------------------------------------------------------------
// Commands

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
            const std::optional<std::string>& out_dir, const std::optional<std::string>& from,
            const std::optional<std::string>& to, std::ostream& out, std::ostream& err) {
    RunConfig cfg = load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    if (from) cfg.from = to_date(*from, "--from");
    if (to) cfg.to = to_date(*to, "--to");
    validate_run_config(cfg);

    std::string stage = "data";
    std::vector<std::string> completed;
    try {
        const LoadedData data = load_data(cfg);
        for (const auto& note : data.notes) err << "warning: " << note << '\n';
        stage = "validation";
        validate_against_data(cfg, data);

        VaeCache cache;
        std::vector<PerformanceReport> reports;
        std::vector<EquityCurve> curves;
        for (const auto& s : cfg.strategies) {
            stage = "strategy " + s.id;
            StrategyResult r = run_strategy(cfg, s, data, cache);
            write_strategy_outputs(cfg.out_dir, s, r);
            PerformanceReport rep = compute_metrics(r.curve, cfg.risk_free);
            rep.warnings.insert(rep.warnings.end(), r.curve.warnings.begin(), r.curve.warnings.end());
            out << s.id << ": total return " << rep.total_return_pct << "%, aggregate Sharpe " << rep.aggregate_sharpe
                << '\n';
            reports.push_back(std::move(rep));
            curves.push_back(std::move(r.curve));
            completed.push_back(s.id);
        }

        stage = "report";
        nlohmann::json j;
        j["seed"] = cfg.seed;
        j["simulation"] = {{"from", format_date(cfg.from)}, {"to", format_date(cfg.to)},
                           {"initial_capital", cfg.initial_capital}};
        j["strategies"] = nlohmann::json::array();
        for (const auto& rep : reports) j["strategies"].push_back(report_to_json(rep));
        write_file_atomic((fs::path(cfg.out_dir) / "report.json").string(), j.dump(2) + "\n");
        write_file_atomic((fs::path(cfg.out_dir) / "comparison.svg").string(),
                          render([&](std::ostream& o) { write_svg_chart(o, curves, "Portfolio value"); }));
        std::error_code ec;
        fs::remove(fs::path(cfg.out_dir) / "FAILED.json", ec);
        out << "wrote " << reports.size() << " strategies to " << cfg.out_dir << '\n';
    } catch (const std::exception& e) {
        write_failure_manifest(cfg.out_dir, stage, e.what(), completed);
        throw;
    }
    return 0;
}

int cmd_ingest(const std::string& prices, const std::string& sectors, const std::optional<std::string>& out_dir,
               const std::optional<std::string>& from, const std::optional<std::string>& to, std::ostream& out) {
    DateRange range;
    if (from) range.from = to_date(*from, "--from");
    if (to) range.to = to_date(*to, "--to");
    LoadResult loaded = load_prices(prices, true, range);
    if (!sectors.empty()) loaded.panel.sectors = load_sectors(sectors);
    const PricePanel& p = loaded.panel;
    out << "universe: " << p.n_stocks() << " tickers\n";
    out << "dates: " << format_date(p.dates.front()) << " .. " << format_date(p.dates.back()) << " (" << p.n_days()
        << " days)\n";
    out << "dropped: " << loaded.dropped.size();
    for (std::size_t i = 0; i < loaded.dropped.size(); ++i) out << (i == 0 ? " (" : ", ") << loaded.dropped[i];
    out << (loaded.dropped.empty() ? "" : ")") << '\n';
    for (const auto& w : loaded.warnings) out << "warning: " << w << '\n';
    if (out_dir) {
        write_file_atomic((fs::path(*out_dir) / "panel.csv").string(),
                          render([&](std::ostream& o) { write_prices_csv(o, p); }));
        out << "wrote " << (fs::path(*out_dir) / "panel.csv").string() << '\n';
    }
    return 0;
}

int cmd_graph(const std::string& prices, const std::string& config, const std::optional<std::string>& out_dir,
              const std::optional<std::string>& from, const std::optional<std::string>& to,
              const std::optional<double>& lambda, double threshold, std::ostream& out) {
    ReturnsPanel rp;
    std::string dir = out_dir.value_or("out");
    if (!config.empty()) {
        RunConfig cfg = load_run_config(config);
        if (!out_dir) dir = cfg.out_dir;
        rp = load_data(cfg).returns;
    } else if (!prices.empty()) {
        rp = compute_returns(load_prices(prices, true).panel);
    } else {
        throw ConfigError("graph needs --prices or --config");
    }
    if (from || to) {
        const Date lo = from ? to_date(*from, "--from") : rp.dates.front();
        const Date hi = to ? to_date(*to, "--to") : Date{std::chrono::sys_days{rp.dates.back()} + std::chrono::days{1}};
        rp = slice_window(rp, lo, hi);
    }
    const Eigen::MatrixXd s = sample_covariance(rp.returns);
    const double lam = lambda ? *lambda : default_glasso_lambda(s);
    PrecisionGraph g;
    try {
        g = graphical_lasso(s, lam);
    } catch (const GlassoConvergenceError& e) {
        out << "warning: " << e.what() << "; writing last iterate\n";
        g = e.last_iterate();
    }
    const auto edges = edges_from_precision(g, threshold);
    const Embedding emb = spectral_embed(rp, 2);
    write_file_atomic((fs::path(dir) / "edges.csv").string(),
                      render([&](std::ostream& o) { write_edges_csv(o, edges, rp.tickers); }));
    write_file_atomic((fs::path(dir) / "embedding.csv").string(), render([&](std::ostream& o) {
                          o << "ticker,x,y\n";
                          o.precision(17);
                          for (std::size_t i = 0; i < rp.n_stocks(); ++i) {
                              const auto r = static_cast<Eigen::Index>(i);
                              o << rp.tickers[i] << ',' << emb.coords(r, 0) << ',' << emb.coords(r, 1) << '\n';
                          }
                      }));
    out << "window: " << format_date(rp.dates.front()) << " .. " << format_date(rp.dates.back()) << " ("
        << rp.n_days() << " days)\n";
    out << "lambda: " << lam << "\nedges: " << edges.size() << "\n";
    return 0;
}

int cmd_synth(const SynthConfig& sc, const std::string& out_dir, std::ostream& out) {
    if (sc.n_stocks < 1 || sc.n_days < 1 || sc.n_factors < 1) throw ConfigError("synthetic dimensions must be >= 1");
    const PricePanel p = synth_prices(sc);
    write_file_atomic((fs::path(out_dir) / "prices.csv").string(), render([&](std::ostream& o) { write_prices_csv(o, p); }));
    write_file_atomic((fs::path(out_dir) / "sectors.csv").string(), render([&](std::ostream& o) {
                          o << "ticker,sector\n";
                          for (const auto& [t, sec] : p.sectors) o << t << ',' << sec << '\n';
                      }));
    out << "wrote " << p.n_stocks() << " stocks x " << p.n_days() << " days to " << out_dir << '\n';
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Latent-space and clustering portfolio research toolkit"};
    app.require_subcommand(1);

    std::string config, prices, sectors;
    std::optional<std::string> out_dir, from, to;
    std::optional<std::uint64_t> seed;
    std::optional<double> lambda;
    double threshold = GlassoOptions{}.edge_threshold;
    SynthConfig sc;
    std::string synth_out = "data", synth_start;

    auto* run = app.add_subcommand("run", "Run every configured strategy and write reports");
    run->add_option("--config", config, "Run configuration file")->required();
    run->add_option("--seed", seed, "Override the global seed");
    run->add_option("--out", out_dir, "Override the output directory");
    run->add_option("--from", from, "Override the simulation start (YYYY-MM-DD)");
    run->add_option("--to", to, "Override the simulation end, exclusive (YYYY-MM-DD)");

    auto* ingest = app.add_subcommand("ingest", "Validate a price file and write a normalised panel");
    ingest->add_option("--prices", prices, "Price CSV: date,<TICKER>...")->required();
    ingest->add_option("--sectors", sectors, "Sector CSV: ticker,sector");
    ingest->add_option("--out", out_dir, "Directory for panel.csv");
    ingest->add_option("--from", from, "First date to keep");
    ingest->add_option("--to", to, "Exclusive end date");

    auto* graph = app.add_subcommand("graph", "Graphical-lasso edges and 2-D spectral embedding for a window");
    graph->add_option("--prices", prices, "Price CSV");
    graph->add_option("--config", config, "Run configuration (uses its [data] section)");
    graph->add_option("--out", out_dir, "Output directory");
    graph->add_option("--from", from, "Window start");
    graph->add_option("--to", to, "Window end, exclusive");
    graph->add_option("--lambda", lambda, "L1 penalty (default: half the mean |off-diagonal covariance|)");
    graph->add_option("--threshold", threshold, "Edge threshold on |theta_ij|");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic factor-model market");
    synth->add_option("--stocks", sc.n_stocks, "Number of stocks");
    synth->add_option("--days", sc.n_days, "Number of return days");
    synth->add_option("--factors", sc.n_factors, "Number of factors");
    synth->add_option("--seed", sc.seed, "Generator seed");
    synth->add_option("--noise", sc.noise_scale, "Idiosyncratic scale multiplier");
    synth->add_option("--distress", sc.distress_fraction, "Fraction of stocks that decouple and decline");
    synth->add_option("--start", synth_start, "Date of the first price (YYYY-MM-DD)");
    synth->add_option("--out", synth_out, "Output directory");

    std::vector<std::string> argv_store = args;
    argv_store.insert(argv_store.begin(), "stocksel");
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) return cmd_run(config, seed, out_dir, from, to, out, err);
        if (*ingest) return cmd_ingest(prices, sectors, out_dir, from, to, out);
        if (*graph) return cmd_graph(prices, config, out_dir, from, to, lambda, threshold, out);
        if (*synth) {
            if (!synth_start.empty()) sc.start = to_date(synth_start, "--start");
            return cmd_synth(sc, synth_out, out);
        }
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace stocksel
