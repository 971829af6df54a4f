#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stocksel/backtest.hpp"
#include "stocksel/clustering.hpp"
#include "stocksel/market_data.hpp"

namespace stocksel {

/// Parameters for one configured strategy. `kind` selects the algorithm; `id` names its outputs.
struct StrategyConfig {
    std::string id;
    std::string kind;
    WeightScheme weights = WeightScheme::Equal;
    std::size_t n = 10;
    std::size_t pca_components = 3;
    int vae_epochs = 300;
    double vae_lr = 1e-3;
    std::size_t vae_repeats = 10;
    std::size_t kmeans_k = 10;
    EmbeddingSpace kmeans_space = EmbeddingSpace::Pca;
    std::size_t ward_clusters = 15;
    bool ward_connectivity = true;
    double damping = 0.5;
    std::optional<double> preference;
    int ap_max_iter = 1000;
    int ap_conv_iters = 15;
    std::optional<double> glasso_lambda;
    std::size_t per_cluster = 10;
    std::optional<double> max_weight;
};

struct DataConfig {
    std::string prices;
    std::string sectors;
    std::string benchmark;
    bool synthetic = false;
    SynthConfig synth;
};

struct RunConfig {
    DataConfig data;
    Date from{};
    Date to{};
    double initial_capital = 10000.0;
    std::map<int, double> risk_free;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    std::vector<StrategyConfig> strategies;
};

/// Strategy kinds understood by `run`.
const std::vector<std::string>& known_strategy_kinds();

/// Reads the INI-style run configuration. Relative data paths resolve against `base_dir`.
RunConfig parse_run_config(std::istream& in, const std::string& base_dir);
RunConfig load_run_config(const std::string& path);

/// Static precondition checks; throws ConfigError.
void validate_run_config(const RunConfig& cfg);

/// Entry point shared by the executable and the tests. Returns the process exit code:
/// 0 success, 1 computation error, 2 input or configuration error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stocksel
