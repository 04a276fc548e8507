#include "statesoup/model.hpp"

#include <cmath>
#include <limits>

#include "statesoup/error.hpp"

namespace statesoup {

namespace {

constexpr double kNormEps = 1e-5;

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }

inline double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

template <class M>
auto as_double(const M& m) {
    return m.template cast<double>();
}

/// One block in 64-bit arithmetic. Works on float (cast per use) or double
/// parameter sets. When `transition` is non-null only A_t is computed and
/// the state is left untouched apart from the conv window shift.
template <class P>
void block_step(const BasicLayerParams<P>& p, LayerState& st, const VecD& x, VecD& out, MatD* transition) {
    const Eigen::Index D = x.size();
    const Eigen::Index N = st.ssm.cols();
    const Eigen::Index W = st.conv.rows();
    if (!x.allFinite()) throw NumericError("layer input contains non-finite values");

    const double r = 1.0 / std::sqrt(x.squaredNorm() / static_cast<double>(D) + kNormEps);
    const VecD n = (x * r).cwiseProduct(as_double(p.norm_scale));
    const VecD pre = as_double(p.in_proj) * n;
    const VecD z = as_double(p.gate_proj) * n;

    for (Eigen::Index i = 0; i + 1 < W; ++i) st.conv.row(i) = st.conv.row(i + 1);
    st.conv.row(W - 1) = pre.transpose().cast<float>();

    VecD u(D);
    for (Eigen::Index d = 0; d < D; ++d) {
        double v = static_cast<double>(p.conv_bias[d]);
        for (Eigen::Index j = 0; j < W; ++j) {
            v += static_cast<double>(p.conv_kernel(j, d)) * static_cast<double>(st.conv(j, d));
        }
        u[d] = silu(v);
    }

    const VecD low = as_double(p.delta_down) * u;
    const VecD dl = as_double(p.delta_up) * low + as_double(p.delta_bias);
    VecD delta(D);
    for (Eigen::Index d = 0; d < D; ++d) delta[d] = softplus(dl[d]);
    const VecD B = as_double(p.b_proj) * u;
    const VecD C = as_double(p.c_proj) * u;
    VecD rate(N);
    for (Eigen::Index k = 0; k < N; ++k) rate[k] = std::exp(static_cast<double>(p.a_log[k]));

    if (transition != nullptr) {
        transition->resize(D, N);
        for (Eigen::Index d = 0; d < D; ++d)
            for (Eigen::Index k = 0; k < N; ++k) (*transition)(d, k) = std::exp(-delta[d] * rate[k]);
        return;
    }

    VecD y = VecD::Zero(D);
    for (Eigen::Index d = 0; d < D; ++d) {
        const double drive = delta[d] * u[d];
        double acc = 0.0;
        for (Eigen::Index k = 0; k < N; ++k) {
            const double log_a = -delta[d] * rate[k];
            const double s = std::exp(log_a) * static_cast<double>(st.ssm(d, k)) + drive * B[k];
            const float stored = static_cast<float>(s);
            st.ssm(d, k) = stored;
            st.log_decay(d, k) += log_a;
            acc += static_cast<double>(stored) * C[k];
        }
        y[d] = acc;
    }
    VecD gated(D);
    for (Eigen::Index d = 0; d < D; ++d) gated[d] = y[d] * silu(z[d]);
    out = as_double(p.out_proj) * gated;
}

void check_token(const ModelConfig& c, Token t) {
    if (t >= c.vocab_size) {
        throw RangeError("token " + std::to_string(t) + " out of range for vocab " + std::to_string(c.vocab_size));
    }
}

}  // namespace

VecD log_softmax(const VecD& logits) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return (logits.array() - lse).matrix();
}

Token argmax_token(const VecD& logits) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return static_cast<Token>(best);
}

StepResult forward_step(const LanguageModel& model, const StateSnapshot& state, Token token) {
    check_snapshot(state, model.config());
    StepResult r{state, VecD()};
    model.step_inplace(r.state, token, r.logits);
    return r;
}

SequenceResult process_sequence(const LanguageModel& model, const StateSnapshot& state,
                                std::span<const Token> tokens, bool reset_decay, bool keep_logits) {
    check_snapshot(state, model.config());
    SequenceResult r{state, {}};
    if (reset_decay) {
        for (auto& l : r.state.layers) l.log_decay.setZero();
    }
    if (keep_logits) r.logits.reserve(tokens.size());
    VecD logits;
    for (Token t : tokens) {
        model.step_inplace(r.state, t, logits);
        if (keep_logits) r.logits.push_back(logits);
    }
    return r;
}

StateSnapshot advance(const LanguageModel& model, const StateSnapshot& state, std::span<const Token> tokens,
                      bool reset_decay) {
    return process_sequence(model, state, tokens, reset_decay, false).state;
}

double sequence_loss(const LanguageModel& model, const StateSnapshot& state, std::span<const Token> tokens) {
    if (tokens.size() < 2) throw RangeError("sequence_loss needs at least two tokens");
    check_snapshot(state, model.config());
    StateSnapshot s = state;
    VecD logits;
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        model.step_inplace(s, tokens[i], logits);
        check_token(model.config(), tokens[i + 1]);
        total -= log_softmax(logits)[tokens[i + 1]];
    }
    const double loss = total / static_cast<double>(tokens.size() - 1);
    if (!std::isfinite(loss)) throw NumericError("sequence loss is not finite");
    return loss;
}

LayerStepResult layer_step(const LayerParams& params, const LayerState& state, const VecD& input) {
    if (input.size() != params.norm_scale.size() || state.ssm.rows() != input.size()) {
        throw ShapeError("layer_step input dimension does not match parameters");
    }
    LayerStepResult r{state, VecD()};
    block_step(params, r.state, input, r.output, nullptr);
    return r;
}

GatedLinearModel::GatedLinearModel(ModelParams params)
    : params_(std::move(params)), compute_(cast_params<double>(params_)) {
    params_.config.validate();
}

void GatedLinearModel::layer_step_inplace(std::size_t layer, LayerState& state, const VecD& input,
                                          VecD& output) const {
    block_step(compute_.layers.at(layer), state, input, output, nullptr);
}

MatD GatedLinearModel::transition(std::size_t layer, const LayerState& state, const VecD& input) const {
    LayerState scratch = state;
    VecD unused;
    MatD a;
    block_step(compute_.layers.at(layer), scratch, input, unused, &a);
    return a;
}

void GatedLinearModel::step_inplace(StateSnapshot& state, Token token, VecD& logits) const {
    const ModelConfig& c = params_.config;
    check_token(c, token);
    VecD x = compute_.embedding.row(token).transpose();
    VecD out;
    for (std::size_t l = 0; l < c.num_layers; ++l) {
        block_step(compute_.layers[l], state.layers[l], x, out, nullptr);
        x += out;
    }
    const double r = 1.0 / std::sqrt(x.squaredNorm() / static_cast<double>(x.size()) + kNormEps);
    const VecD n = (x * r).cwiseProduct(compute_.final_norm);
    logits = compute_.embedding * n;
    if (!logits.allFinite()) throw NumericError("logits contain non-finite values");
    ++state.meta.token_count;
}

}  // namespace statesoup
