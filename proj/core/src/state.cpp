#include "statesoup/state.hpp"

#include <cstring>

#include "statesoup/error.hpp"

namespace statesoup {

StateSnapshot zero_state(const ModelConfig& config) {
    config.validate();
    const auto D = static_cast<Eigen::Index>(config.embed_dim);
    const auto N = static_cast<Eigen::Index>(config.state_dim);
    const auto W = static_cast<Eigen::Index>(config.conv_width);
    StateSnapshot s;
    s.layers.resize(config.num_layers);
    for (auto& l : s.layers) {
        l.ssm = MatF::Zero(D, N);
        l.conv = MatF::Zero(W, D);
        l.log_decay = MatD::Zero(D, N);
    }
    s.meta.model_hash = config_hash(config);
    return s;
}

StateSnapshot suffix_start(const StateSnapshot& prefix) {
    StateSnapshot s = prefix;
    for (auto& l : s.layers) {
        l.ssm.setZero();
        l.log_decay.setZero();
    }
    s.meta.shots = 0;
    s.meta.token_count = 0;
    s.meta.task_label.clear();
    return s;
}

void check_snapshot(const StateSnapshot& s, const ModelConfig& config) {
    if (s.meta.model_hash != config_hash(config)) {
        throw HashMismatchError("snapshot model hash " + hash_hex(s.meta.model_hash) +
                                " does not match model " + hash_hex(config_hash(config)));
    }
    if (s.layers.size() != config.num_layers) {
        throw ShapeError("snapshot has " + std::to_string(s.layers.size()) + " layers, model has " +
                         std::to_string(config.num_layers));
    }
    const auto D = static_cast<Eigen::Index>(config.embed_dim);
    const auto N = static_cast<Eigen::Index>(config.state_dim);
    const auto W = static_cast<Eigen::Index>(config.conv_width);
    for (const auto& l : s.layers) {
        if (l.ssm.rows() != D || l.ssm.cols() != N || l.log_decay.rows() != D || l.log_decay.cols() != N ||
            l.conv.rows() != W || l.conv.cols() != D) {
            throw ShapeError("snapshot layer tensor shapes do not match model config");
        }
    }
}

namespace {

template <class M>
bool same_bits(const M& a, const M& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(typename M::Scalar) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

bool bit_equal(const StateSnapshot& a, const StateSnapshot& b) {
    if (!(a.meta == b.meta) || a.layers.size() != b.layers.size()) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        if (!same_bits(a.layers[l].ssm, b.layers[l].ssm) || !same_bits(a.layers[l].conv, b.layers[l].conv) ||
            !same_bits(a.layers[l].log_decay, b.layers[l].log_decay)) {
            return false;
        }
    }
    return true;
}

}  // namespace statesoup
