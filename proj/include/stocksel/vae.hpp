#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "stocksel/latent_models.hpp"
#include "stocksel/market_data.hpp"

namespace stocksel {

enum class Likelihood { Normal, Cauchy };

std::string to_string(Likelihood kind);
Likelihood likelihood_from_string(const std::string& text);

/// Indices into VaeParams::tensors. Weights are (fan_out x fan_in); biases are column vectors.
enum VaeTensor : std::size_t {
    kEncW1, kEncB1,           // input -> hidden
    kEncWMu, kEncBMu,         // hidden -> latent mean
    kEncWLogVar, kEncBLogVar, // hidden -> latent log variance
    kDecW1, kDecB1,           // latent -> hidden
    kDecWLoc, kDecBLoc,       // hidden -> location (mean or Cauchy x0)
    kDecWLogScale, kDecBLogScale,  // hidden -> log scale (sigma or Cauchy gamma)
    kVaeTensorCount
};

const char* tensor_name(std::size_t index);

struct VaeParams {
    std::array<Eigen::MatrixXd, kVaeTensorCount> tensors;

    Eigen::MatrixXd& operator[](std::size_t i) { return tensors[i]; }
    const Eigen::MatrixXd& operator[](std::size_t i) const { return tensors[i]; }
    std::size_t parameter_count() const;
};

/// Recognition net q(z|x) and generative net p(x|z), each with one ReLU hidden layer.
struct VaeModel {
    Likelihood kind = Likelihood::Normal;
    std::size_t input_dim = 0;
    std::size_t hidden = 100;
    std::size_t latent = 2;
    std::uint64_t seed = 0;
    /// Inputs are divided by this before entering the encoder; generated data is multiplied back.
    double input_scale = 1.0;
    VaeParams params;
    std::vector<double> elbo_history;  ///< mean per-observation ELBO at each epoch
};

enum class VaeOptimizer { Adam, GradientAscent };

struct VaeTrainConfig {
    Likelihood kind = Likelihood::Normal;
    int epochs = 300;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    std::size_t hidden = 100;
    std::size_t latent = 2;
    VaeOptimizer optimizer = VaeOptimizer::Adam;
};

/// Scale floor shared by the Normal sigma and the Cauchy gamma.
inline constexpr double kMinScale = 1e-6;

double kl_to_standard_normal(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var);
double normal_log_density(double x, double loc, double scale);
double cauchy_log_density(double x, double loc, double scale);

/// Xavier-uniform weights from the seeded generator, zero biases.
VaeModel vae_init(std::size_t input_dim, Likelihood kind, std::uint64_t seed,
                  std::size_t hidden = 100, std::size_t latent = 2);

struct ElboResult {
    double elbo = 0.0;           ///< mean over observations
    double log_likelihood = 0.0; ///< mean reconstruction term
    double kl = 0.0;             ///< mean KL term
    VaeParams gradient;          ///< d(elbo)/d(params); empty tensors unless requested
};

/// Single-sample reparameterised ELBO for data (observations as columns, already scaled)
/// and fixed standard-normal noise (latent x n_obs).
ElboResult vae_elbo(const VaeModel& model, const Eigen::MatrixXd& data,
                    const Eigen::MatrixXd& noise, bool with_gradient);

/// Full-batch training on the stock return vectors; throws DivergenceError on a non-finite ELBO.
VaeModel vae_train(const ReturnsPanel& rp, const VaeTrainConfig& cfg);

/// Encoder means as latent coordinates; error against the decoder location at that mean.
ReconstructionReport vae_reconstruct(const VaeModel& model, const ReturnsPanel& rp);
ReconstructionReport vae_reconstruct(const VaeModel& model, const Eigen::MatrixXd& data);

/// Encoder means for each row of data (unscaled).
Eigen::MatrixXd vae_encode(const VaeModel& model, const Eigen::MatrixXd& data);

/// Decoder output distribution for latent points (one per row), in unscaled return units.
struct DecodedDistribution {
    Eigen::MatrixXd location;  ///< n_points x input_dim
    Eigen::MatrixXd scale;     ///< n_points x input_dim, strictly positive
};
DecodedDistribution vae_decode(const VaeModel& model, const Eigen::MatrixXd& latent);

/// Trains `repeats` models with seeds seed, seed+1, ... and returns them in seed order.
std::vector<VaeModel> vae_train_repeated(const ReturnsPanel& rp, const VaeTrainConfig& cfg,
                                         std::size_t repeats, std::size_t threads = 1);

/// Moving average of the last `window` ELBO values ending at each epoch.
std::vector<double> smoothed_elbo(const std::vector<double>& history, std::size_t window = 20);

std::string vae_to_json(const VaeModel& model);
VaeModel vae_from_json(const std::string& text);

}  // namespace stocksel
