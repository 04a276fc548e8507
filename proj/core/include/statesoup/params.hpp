#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "statesoup/config.hpp"
#include "statesoup/types.hpp"

namespace statesoup {

/// Learned parameters of one gated-linear block.
///
/// Block recipe, applied to the residual stream x:
///   n = rmsnorm(x) * norm_scale
///   p = in_proj n,  z = gate_proj n
///   u = silu(causal_depthwise_conv(p) + conv_bias)
///   delta = softplus(delta_up (delta_down u) + delta_bias)
///   B = b_proj u,  C = c_proj u,  A = exp(-delta (x) exp(a_log))
///   S = A * S + (delta * u) (x) B
///   out = out_proj ((S C) * silu(z))
template <class Scalar>
struct BasicLayerParams {
    Vec<Scalar> norm_scale;   // D
    Mat<Scalar> in_proj;      // D x D
    Mat<Scalar> gate_proj;    // D x D
    Mat<Scalar> conv_kernel;  // W x D, row W-1 applies to the newest input
    Vec<Scalar> conv_bias;    // D
    Mat<Scalar> delta_down;   // R x D
    Mat<Scalar> delta_up;     // D x R
    Vec<Scalar> delta_bias;   // D
    Mat<Scalar> b_proj;       // N x D
    Mat<Scalar> c_proj;       // N x D
    Vec<Scalar> a_log;        // N, transition rate = exp(a_log)
    Mat<Scalar> out_proj;     // D x D
};

template <class Scalar>
struct BasicParams {
    ModelConfig config;
    Mat<Scalar> embedding;  // V x D, tied with the output head
    std::vector<BasicLayerParams<Scalar>> layers;
    Vec<Scalar> final_norm;  // D
};

using LayerParams = BasicLayerParams<float>;
using ModelParams = BasicParams<float>;

/// Zero-filled parameters with the shapes implied by `config`.
template <class Scalar>
BasicParams<Scalar> zero_params(const ModelConfig& config);

/// Visits every tensor in a fixed canonical order. The callback receives
/// (name, Eigen dense object). Serialization and the optimizer rely on the
/// order being identical across calls.
template <class P, class F>
void for_each_tensor(P& params, F&& fn) {
    fn(std::string("embedding"), params.embedding);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        const std::string p = "layers." + std::to_string(l) + ".";
        fn(p + "norm_scale", layer.norm_scale);
        fn(p + "in_proj", layer.in_proj);
        fn(p + "gate_proj", layer.gate_proj);
        fn(p + "conv_kernel", layer.conv_kernel);
        fn(p + "conv_bias", layer.conv_bias);
        fn(p + "delta_down", layer.delta_down);
        fn(p + "delta_up", layer.delta_up);
        fn(p + "delta_bias", layer.delta_bias);
        fn(p + "b_proj", layer.b_proj);
        fn(p + "c_proj", layer.c_proj);
        fn(p + "a_log", layer.a_log);
        fn(p + "out_proj", layer.out_proj);
    }
    fn(std::string("final_norm"), params.final_norm);
}

/// Visits corresponding tensors of two parameter sets with equal shapes.
template <class P, class Q, class F>
void for_each_tensor_pair(P& a, Q& b, F&& fn) {
    fn(a.embedding, b.embedding);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        auto& x = a.layers[l];
        auto& y = b.layers[l];
        fn(x.norm_scale, y.norm_scale);
        fn(x.in_proj, y.in_proj);
        fn(x.gate_proj, y.gate_proj);
        fn(x.conv_kernel, y.conv_kernel);
        fn(x.conv_bias, y.conv_bias);
        fn(x.delta_down, y.delta_down);
        fn(x.delta_up, y.delta_up);
        fn(x.delta_bias, y.delta_bias);
        fn(x.b_proj, y.b_proj);
        fn(x.c_proj, y.c_proj);
        fn(x.a_log, y.a_log);
        fn(x.out_proj, y.out_proj);
    }
    fn(a.final_norm, b.final_norm);
}

template <class To, class From>
BasicParams<To> cast_params(const BasicParams<From>& src) {
    BasicParams<To> dst = zero_params<To>(src.config);
    for_each_tensor_pair(dst, src, [](auto& d, const auto& s) { d = s.template cast<To>(); });
    return dst;
}

template <class Scalar>
std::size_t parameter_count(const BasicParams<Scalar>& params) {
    std::size_t n = 0;
    for_each_tensor(params, [&](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
}

/// Deterministic initialization. Transition rates are set so that, at the
/// mean initial step size, per-step decays span [0.9, 0.999] across state
/// channels.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

/// Mean of softplus(delta_bias) over channels: the step size seen at zero
/// input for freshly initialized delta projections.
double mean_initial_step(const LayerParams& layer);

}  // namespace statesoup
