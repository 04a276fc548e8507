#include "statesoup/params.hpp"

#include <cmath>

#include "statesoup/rng.hpp"

namespace statesoup {

template <class Scalar>
BasicParams<Scalar> zero_params(const ModelConfig& config) {
    config.validate();
    const auto V = static_cast<Eigen::Index>(config.vocab_size);
    const auto D = static_cast<Eigen::Index>(config.embed_dim);
    const auto N = static_cast<Eigen::Index>(config.state_dim);
    const auto W = static_cast<Eigen::Index>(config.conv_width);
    const auto R = static_cast<Eigen::Index>(config.effective_delta_rank());

    BasicParams<Scalar> p;
    p.config = config;
    p.embedding = Mat<Scalar>::Zero(V, D);
    p.final_norm = Vec<Scalar>::Zero(D);
    p.layers.resize(config.num_layers);
    for (auto& l : p.layers) {
        l.norm_scale = Vec<Scalar>::Zero(D);
        l.in_proj = Mat<Scalar>::Zero(D, D);
        l.gate_proj = Mat<Scalar>::Zero(D, D);
        l.conv_kernel = Mat<Scalar>::Zero(W, D);
        l.conv_bias = Vec<Scalar>::Zero(D);
        l.delta_down = Mat<Scalar>::Zero(R, D);
        l.delta_up = Mat<Scalar>::Zero(D, R);
        l.delta_bias = Vec<Scalar>::Zero(D);
        l.b_proj = Mat<Scalar>::Zero(N, D);
        l.c_proj = Mat<Scalar>::Zero(N, D);
        l.a_log = Vec<Scalar>::Zero(N);
        l.out_proj = Mat<Scalar>::Zero(D, D);
    }
    return p;
}

template BasicParams<float> zero_params<float>(const ModelConfig&);
template BasicParams<double> zero_params<double>(const ModelConfig&);

namespace {

template <class M>
void fill_normal(M& m, Rng& rng, double stddev) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<float>(rng.normal() * stddev);
    }
}

template <class M>
void fill_uniform(M& m, Rng& rng, double bound) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
    }
}

double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

}  // namespace

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
    ModelParams p = zero_params<float>(config);
    const double D = static_cast<double>(config.embed_dim);
    const double R = static_cast<double>(config.effective_delta_rank());
    const double W = static_cast<double>(config.conv_width);
    const std::size_t N = config.state_dim;

    Rng rng(derive_seed(seed, 0x6d6f64656cULL));
    fill_normal(p.embedding, rng, 1.0 / std::sqrt(D));
    p.final_norm.setOnes();

    // Per-step log-decays -log(A) at the mean step size: geometric between
    // -log(0.999) and -log(0.9).
    const double slow = -std::log(0.999);
    const double fast = -std::log(0.9);

    for (std::size_t l = 0; l < config.num_layers; ++l) {
        auto& layer = p.layers[l];
        Rng lr(derive_seed(seed, 0x6c61796572ULL, l));
        layer.norm_scale.setOnes();
        fill_normal(layer.in_proj, lr, 1.0 / std::sqrt(D));
        fill_normal(layer.gate_proj, lr, 1.0 / std::sqrt(D));
        fill_uniform(layer.conv_kernel, lr, 1.0 / std::sqrt(W));
        fill_uniform(layer.conv_bias, lr, 1.0 / std::sqrt(W));
        fill_uniform(layer.delta_down, lr, 1.0 / std::sqrt(D));
        fill_uniform(layer.delta_up, lr, 1.0 / std::sqrt(R));
        // Step sizes log-uniform in [1e-3, 1e-1].
        for (Eigen::Index d = 0; d < layer.delta_bias.size(); ++d) {
            const double dt = std::exp(lr.uniform(std::log(1e-3), std::log(1e-1)));
            layer.delta_bias[d] = static_cast<float>(inverse_softplus(dt));
        }
        fill_normal(layer.b_proj, lr, 1.0 / std::sqrt(D));
        fill_normal(layer.c_proj, lr, 1.0 / std::sqrt(D));
        fill_normal(layer.out_proj, lr, 1.0 / std::sqrt(D * 2.0 * static_cast<double>(config.num_layers)));

        const double mean_step = mean_initial_step(layer);
        for (std::size_t n = 0; n < N; ++n) {
            const double frac = N == 1 ? 0.5 : static_cast<double>(n) / static_cast<double>(N - 1);
            const double neg_log_a = slow * std::pow(fast / slow, frac);
            layer.a_log[static_cast<Eigen::Index>(n)] = static_cast<float>(std::log(neg_log_a / mean_step));
        }
    }
    return p;
}

double mean_initial_step(const LayerParams& layer) {
    double sum = 0.0;
    for (Eigen::Index d = 0; d < layer.delta_bias.size(); ++d) {
        const double b = layer.delta_bias[d];
        sum += b > 20.0 ? b : std::log1p(std::exp(b));
    }
    return sum / static_cast<double>(layer.delta_bias.size());
}

}  // namespace statesoup
