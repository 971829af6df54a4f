#include "stocksel/vae.hpp"

#include <cmath>
#include <future>
#include <numbers>
#include <random>

#include <json.hpp>

#include "stocksel/errors.hpp"

namespace stocksel {

namespace {

const double kLogMinScale = std::log(kMinScale);
const double kLogTwoPi = std::log(2.0 * std::numbers::pi);
const double kLogPi = std::log(std::numbers::pi);

Eigen::MatrixXd relu(const Eigen::MatrixXd& a) { return a.cwiseMax(0.0); }

Eigen::MatrixXd relu_mask(const Eigen::MatrixXd& a) {
    return (a.array() > 0.0).cast<double>().matrix();
}

struct Forward {
    Eigen::MatrixXd enc_pre, enc_hidden, mu, log_var, std_dev, z;
    Eigen::MatrixXd dec_pre, dec_hidden, loc, log_scale_raw, log_scale;
};

Forward forward(const VaeParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd* noise) {
    Forward f;
    f.enc_pre = (p[kEncW1] * x).colwise() + p[kEncB1].col(0);
    f.enc_hidden = relu(f.enc_pre);
    f.mu = (p[kEncWMu] * f.enc_hidden).colwise() + p[kEncBMu].col(0);
    f.log_var = (p[kEncWLogVar] * f.enc_hidden).colwise() + p[kEncBLogVar].col(0);
    f.std_dev = (0.5 * f.log_var.array()).exp().matrix();
    f.z = noise ? (f.mu.array() + f.std_dev.array() * noise->array()).matrix() : f.mu;
    f.dec_pre = (p[kDecW1] * f.z).colwise() + p[kDecB1].col(0);
    f.dec_hidden = relu(f.dec_pre);
    f.loc = (p[kDecWLoc] * f.dec_hidden).colwise() + p[kDecBLoc].col(0);
    f.log_scale_raw = (p[kDecWLogScale] * f.dec_hidden).colwise() + p[kDecBLogScale].col(0);
    f.log_scale = f.log_scale_raw.cwiseMax(kLogMinScale);
    return f;
}

double scale_for(const Eigen::MatrixXd& returns) {
    if (returns.size() == 0) return 1.0;
    const double rms = std::sqrt(returns.squaredNorm() / static_cast<double>(returns.size()));
    return rms > 0.0 && std::isfinite(rms) ? rms : 1.0;
}

void check_shape(const VaeModel& m, Eigen::Index cols) {
    if (static_cast<std::size_t>(cols) != m.input_dim) {
        throw ParameterError("VAE expects " + std::to_string(m.input_dim) + " inputs, got " +
                             std::to_string(cols));
    }
}

}  // namespace

std::string to_string(Likelihood kind) { return kind == Likelihood::Normal ? "normal" : "cauchy"; }

Likelihood likelihood_from_string(const std::string& text) {
    if (text == "normal") return Likelihood::Normal;
    if (text == "cauchy") return Likelihood::Cauchy;
    throw ParameterError("unknown likelihood '" + text + "'");
}

const char* tensor_name(std::size_t index) {
    static constexpr const char* names[kVaeTensorCount] = {
        "enc_w1",  "enc_b1",  "enc_w_mu",  "enc_b_mu",  "enc_w_logvar",   "enc_b_logvar",
        "dec_w1",  "dec_b1",  "dec_w_loc", "dec_b_loc", "dec_w_logscale", "dec_b_logscale"};
    return names[index];
}

std::size_t VaeParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
    return n;
}

double kl_to_standard_normal(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var) {
    return 0.5 * (mu.array().square() + log_var.array().exp() - 1.0 - log_var.array()).sum();
}

double normal_log_density(double x, double loc, double scale) {
    const double u = (x - loc) / scale;
    return -0.5 * kLogTwoPi - std::log(scale) - 0.5 * u * u;
}

double cauchy_log_density(double x, double loc, double scale) {
    const double u = (x - loc) / scale;
    return -std::log(std::numbers::pi * scale) - std::log1p(u * u);
}

VaeModel vae_init(std::size_t input_dim, Likelihood kind, std::uint64_t seed, std::size_t hidden,
                  std::size_t latent) {
    if (input_dim < 1 || hidden < 1 || latent < 1) throw ParameterError("VAE dimensions must be >= 1");
    VaeModel m;
    m.kind = kind;
    m.input_dim = input_dim;
    m.hidden = hidden;
    m.latent = latent;
    m.seed = seed;
    std::mt19937_64 rng(seed);
    const auto d = static_cast<Eigen::Index>(input_dim);
    const auto h = static_cast<Eigen::Index>(hidden);
    const auto l = static_cast<Eigen::Index>(latent);
    auto weight = [&](Eigen::Index out, Eigen::Index in) {
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Eigen::MatrixXd w(out, in);
        for (Eigen::Index c = 0; c < in; ++c)
            for (Eigen::Index r = 0; r < out; ++r) w(r, c) = dist(rng);
        return w;
    };
    auto& p = m.params;
    p[kEncW1] = weight(h, d);
    p[kEncB1] = Eigen::MatrixXd::Zero(h, 1);
    p[kEncWMu] = weight(l, h);
    p[kEncBMu] = Eigen::MatrixXd::Zero(l, 1);
    p[kEncWLogVar] = weight(l, h);
    p[kEncBLogVar] = Eigen::MatrixXd::Zero(l, 1);
    p[kDecW1] = weight(h, l);
    p[kDecB1] = Eigen::MatrixXd::Zero(h, 1);
    p[kDecWLoc] = weight(d, h);
    p[kDecBLoc] = Eigen::MatrixXd::Zero(d, 1);
    p[kDecWLogScale] = weight(d, h);
    p[kDecBLogScale] = Eigen::MatrixXd::Zero(d, 1);
    return m;
}

ElboResult vae_elbo(const VaeModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& noise,
                    bool with_gradient) {
    const auto& p = model.params;
    const double n_obs = static_cast<double>(x.cols());
    const Forward f = forward(p, x, &noise);

    const Eigen::ArrayXXd scale = f.log_scale.array().exp();
    const Eigen::ArrayXXd u = (x - f.loc).array() / scale;
    Eigen::ArrayXXd log_lik, d_loc, d_log_scale;
    if (model.kind == Likelihood::Normal) {
        log_lik = -0.5 * kLogTwoPi - f.log_scale.array() - 0.5 * u.square();
        d_loc = u / scale;
        d_log_scale = u.square() - 1.0;
    } else {
        const Eigen::ArrayXXd one_plus = 1.0 + u.square();
        log_lik = -kLogPi - f.log_scale.array() - one_plus.log();
        d_loc = 2.0 * u / (one_plus * scale);
        d_log_scale = 2.0 * u.square() / one_plus - 1.0;
    }
    const Eigen::ArrayXXd var = f.log_var.array().exp();
    const double kl = 0.5 * (f.mu.array().square() + var - 1.0 - f.log_var.array()).sum();

    ElboResult out;
    out.log_likelihood = log_lik.sum() / n_obs;
    out.kl = kl / n_obs;
    out.elbo = out.log_likelihood - out.kl;
    if (!with_gradient) return out;

    auto& g = out.gradient;
    const Eigen::MatrixXd g_loc = (d_loc / n_obs).matrix();
    const Eigen::MatrixXd g_log_scale =
        ((d_log_scale / n_obs) * (f.log_scale_raw.array() > kLogMinScale).cast<double>()).matrix();
    g[kDecWLoc] = g_loc * f.dec_hidden.transpose();
    g[kDecBLoc] = g_loc.rowwise().sum();
    g[kDecWLogScale] = g_log_scale * f.dec_hidden.transpose();
    g[kDecBLogScale] = g_log_scale.rowwise().sum();

    const Eigen::MatrixXd g_dec_pre =
        ((p[kDecWLoc].transpose() * g_loc + p[kDecWLogScale].transpose() * g_log_scale).array() *
         relu_mask(f.dec_pre).array())
            .matrix();
    g[kDecW1] = g_dec_pre * f.z.transpose();
    g[kDecB1] = g_dec_pre.rowwise().sum();

    const Eigen::MatrixXd g_z = p[kDecW1].transpose() * g_dec_pre;
    const Eigen::MatrixXd g_mu = g_z - f.mu / n_obs;
    const Eigen::MatrixXd g_log_var =
        (g_z.array() * noise.array() * 0.5 * f.std_dev.array() - 0.5 * (var - 1.0) / n_obs).matrix();
    g[kEncWMu] = g_mu * f.enc_hidden.transpose();
    g[kEncBMu] = g_mu.rowwise().sum();
    g[kEncWLogVar] = g_log_var * f.enc_hidden.transpose();
    g[kEncBLogVar] = g_log_var.rowwise().sum();

    const Eigen::MatrixXd g_enc_pre =
        ((p[kEncWMu].transpose() * g_mu + p[kEncWLogVar].transpose() * g_log_var).array() *
         relu_mask(f.enc_pre).array())
            .matrix();
    g[kEncW1] = g_enc_pre * x.transpose();
    g[kEncB1] = g_enc_pre.rowwise().sum();
    return out;
}

VaeModel vae_train(const ReturnsPanel& rp, const VaeTrainConfig& cfg) {
    if (cfg.epochs < 1) throw ParameterError("VAE training needs at least one epoch");
    if (!(cfg.learning_rate > 0.0)) throw ParameterError("VAE learning rate must be positive");
    if (rp.n_stocks() < 1 || rp.n_days() < 1) throw ParameterError("empty training panel");

    VaeModel m = vae_init(rp.n_days(), cfg.kind, cfg.seed, cfg.hidden, cfg.latent);
    m.input_scale = scale_for(rp.returns);
    const Eigen::MatrixXd x = rp.returns.transpose() / m.input_scale;

    // Separate stream for reparameterisation noise so init and sampling stay independent.
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd noise(static_cast<Eigen::Index>(m.latent), x.cols());

    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    VaeParams first, second;
    for (std::size_t i = 0; i < kVaeTensorCount; ++i) {
        first[i] = Eigen::MatrixXd::Zero(m.params[i].rows(), m.params[i].cols());
        second[i] = first[i];
    }
    m.elbo_history.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (Eigen::Index c = 0; c < noise.cols(); ++c)
            for (Eigen::Index r = 0; r < noise.rows(); ++r) noise(r, c) = normal(rng);
        ElboResult res = vae_elbo(m, x, noise, true);
        if (!std::isfinite(res.elbo)) throw DivergenceError("VAE ELBO became non-finite", epoch);
        m.elbo_history.push_back(res.elbo);
        if (cfg.optimizer == VaeOptimizer::GradientAscent) {
            for (std::size_t i = 0; i < kVaeTensorCount; ++i) {
                m.params[i] += cfg.learning_rate * res.gradient[i];
            }
            continue;
        }
        const double c1 = 1.0 - std::pow(beta1, epoch);
        const double c2 = 1.0 - std::pow(beta2, epoch);
        for (std::size_t i = 0; i < kVaeTensorCount; ++i) {
            first[i] = beta1 * first[i] + (1.0 - beta1) * res.gradient[i];
            second[i] = beta2 * second[i] + (1.0 - beta2) * res.gradient[i].cwiseAbs2();
            m.params[i].array() += cfg.learning_rate * (first[i].array() / c1) /
                                   ((second[i].array() / c2).sqrt() + adam_eps);
        }
    }
    return m;
}

Eigen::MatrixXd vae_encode(const VaeModel& model, const Eigen::MatrixXd& data) {
    check_shape(model, data.cols());
    const Eigen::MatrixXd x = data.transpose() / model.input_scale;
    return forward(model.params, x, nullptr).mu.transpose();
}

DecodedDistribution vae_decode(const VaeModel& model, const Eigen::MatrixXd& latent) {
    if (static_cast<std::size_t>(latent.cols()) != model.latent) {
        throw ParameterError("VAE decoder expects " + std::to_string(model.latent) + " latent coordinates");
    }
    const VaeParams& p = model.params;
    const Eigen::MatrixXd z = latent.transpose();
    const Eigen::MatrixXd hidden = relu((p[kDecW1] * z).colwise() + p[kDecB1].col(0));
    const Eigen::MatrixXd loc = (p[kDecWLoc] * hidden).colwise() + p[kDecBLoc].col(0);
    const Eigen::MatrixXd log_scale =
        ((p[kDecWLogScale] * hidden).colwise() + p[kDecBLogScale].col(0)).cwiseMax(kLogMinScale);
    DecodedDistribution d;
    d.location = loc.transpose() * model.input_scale;
    d.scale = log_scale.array().exp().transpose() * model.input_scale;
    return d;
}

ReconstructionReport vae_reconstruct(const VaeModel& model, const Eigen::MatrixXd& data) {
    check_shape(model, data.cols());
    const Eigen::MatrixXd x = data.transpose() / model.input_scale;
    const Forward f = forward(model.params, x, nullptr);
    ReconstructionReport r;
    r.latent_coords = f.mu.transpose();
    const Eigen::MatrixXd generated = f.loc.transpose() * model.input_scale;
    r.errors = (data - generated).rowwise().norm();
    return r;
}

ReconstructionReport vae_reconstruct(const VaeModel& model, const ReturnsPanel& rp) {
    auto r = vae_reconstruct(model, rp.returns);
    r.tickers = rp.tickers;
    return r;
}

std::vector<VaeModel> vae_train_repeated(const ReturnsPanel& rp, const VaeTrainConfig& cfg,
                                         std::size_t repeats, std::size_t threads) {
    std::vector<VaeModel> out(repeats);
    auto run = [&](std::size_t i) {
        VaeTrainConfig c = cfg;
        c.seed = cfg.seed + i;
        out[i] = vae_train(rp, c);
    };
    if (threads <= 1) {
        for (std::size_t i = 0; i < repeats; ++i) run(i);
        return out;
    }
    for (std::size_t begin = 0; begin < repeats; begin += threads) {
        std::vector<std::future<void>> batch;
        for (std::size_t i = begin; i < std::min(repeats, begin + threads); ++i) {
            batch.push_back(std::async(std::launch::async, run, i));
        }
        for (auto& f : batch) f.get();
    }
    return out;
}

std::vector<double> smoothed_elbo(const std::vector<double>& history, std::size_t window) {
    std::vector<double> out(history.size());
    double running = 0.0;
    for (std::size_t i = 0; i < history.size(); ++i) {
        running += history[i];
        if (i >= window) running -= history[i - window];
        out[i] = running / static_cast<double>(std::min(i + 1, window));
    }
    return out;
}

std::string vae_to_json(const VaeModel& model) {
    nlohmann::json j;
    j["format"] = "stocksel-vae";
    j["version"] = 1;
    j["likelihood"] = to_string(model.kind);
    j["input_dim"] = model.input_dim;
    j["hidden"] = model.hidden;
    j["latent"] = model.latent;
    j["seed"] = model.seed;
    j["input_scale"] = model.input_scale;
    auto& tensors = j["tensors"];
    tensors = nlohmann::json::array();
    for (std::size_t i = 0; i < kVaeTensorCount; ++i) {
        const auto& t = model.params[i];
        std::vector<double> data;
        data.reserve(static_cast<std::size_t>(t.size()));
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index c = 0; c < t.cols(); ++c) data.push_back(t(r, c));
        tensors.push_back({{"name", tensor_name(i)}, {"rows", t.rows()}, {"cols", t.cols()}, {"data", data}});
    }
    return j.dump();
}

VaeModel vae_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("invalid VAE blob: ") + e.what());
    }
    if (j.value("format", "") != "stocksel-vae" || j.value("version", 0) != 1) {
        throw InputError("unsupported VAE blob format");
    }
    VaeModel m;
    m.kind = likelihood_from_string(j.at("likelihood").get<std::string>());
    m.input_dim = j.at("input_dim").get<std::size_t>();
    m.hidden = j.at("hidden").get<std::size_t>();
    m.latent = j.at("latent").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.input_scale = j.at("input_scale").get<double>();
    const auto& tensors = j.at("tensors");
    if (tensors.size() != kVaeTensorCount) throw InputError("VAE blob has wrong tensor count");
    for (std::size_t i = 0; i < kVaeTensorCount; ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != tensor_name(i)) throw InputError("VAE blob tensor order");
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        const auto data = t.at("data").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw InputError("VAE blob tensor size");
        m.params[i].resize(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m.params[i](r, c) = data[static_cast<std::size_t>(r * cols + c)];
    }
    return m;
}

}  // namespace stocksel
