#include "statesoup/mixing.hpp"

#include <algorithm>
#include <cmath>

#include "statesoup/error.hpp"

namespace statesoup {

namespace {

void check_compatible(const StateSnapshot& a, const StateSnapshot& b) {
    if (a.meta.model_hash != b.meta.model_hash) {
        throw HashMismatchError("cannot mix states of models " + hash_hex(a.meta.model_hash) + " and " +
                                hash_hex(b.meta.model_hash));
    }
    if (a.layers.size() != b.layers.size()) throw ShapeError("cannot mix states with different layer counts");
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        const auto& x = a.layers[l];
        const auto& y = b.layers[l];
        if (x.ssm.rows() != y.ssm.rows() || x.ssm.cols() != y.ssm.cols() || x.conv.rows() != y.conv.rows() ||
            x.conv.cols() != y.conv.cols() || x.log_decay.rows() != y.log_decay.rows() ||
            x.log_decay.cols() != y.log_decay.cols()) {
            throw ShapeError("cannot mix states with different tensor shapes");
        }
    }
}

StateSnapshot linear_mix(std::span<const StateSnapshot> states, std::span<const double> w) {
    const StateSnapshot& first = states.front();
    for (const auto& s : states) check_compatible(first, s);
    StateSnapshot out;
    out.meta.model_hash = first.meta.model_hash;
    out.meta.task_label = first.meta.task_label;
    for (const auto& s : states) {
        out.meta.shots += s.meta.shots;
        out.meta.token_count = std::max(out.meta.token_count, s.meta.token_count);
        if (s.meta.task_label != out.meta.task_label) out.meta.task_label.clear();
    }
    out.layers.resize(first.layers.size());
    for (std::size_t l = 0; l < first.layers.size(); ++l) {
        MatD ssm = MatD::Zero(first.layers[l].ssm.rows(), first.layers[l].ssm.cols());
        MatD conv = MatD::Zero(first.layers[l].conv.rows(), first.layers[l].conv.cols());
        for (std::size_t i = 0; i < states.size(); ++i) {
            ssm += w[i] * states[i].layers[l].ssm.cast<double>();
            conv += w[i] * states[i].layers[l].conv.cast<double>();
        }
        out.layers[l].ssm = ssm.cast<float>();
        out.layers[l].conv = conv.cast<float>();
        out.layers[l].log_decay = MatD::Zero(ssm.rows(), ssm.cols());
    }
    return out;
}

}  // namespace

std::string to_string(MixStrategy s) {
    switch (s) {
        case MixStrategy::Mean: return "mean";
        case MixStrategy::Weighted: return "weighted";
        case MixStrategy::ADecay: return "adecay";
    }
    return "mean";
}

MixStrategy parse_mix_strategy(const std::string& name) {
    if (name == "mean") return MixStrategy::Mean;
    if (name == "weighted") return MixStrategy::Weighted;
    if (name == "adecay") return MixStrategy::ADecay;
    throw ConfigError("unknown mixing strategy '" + name + "' (expected mean, weighted or adecay)");
}

void MixRecipe::validate(std::size_t operands) const {
    if (strategy != MixStrategy::Weighted) return;
    if (weights.size() != operands) {
        throw ConfigError("weighted mix has " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(operands) + " states");
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w)) throw ConfigError("weighted mix weight is not finite");
        sum += w;
    }
    if (sum == 0.0 || !std::isfinite(sum)) throw ConfigError("weighted mix weights sum to zero");
}

StateSnapshot mean_mix(std::span<const StateSnapshot> states) {
    if (states.empty()) throw RangeError("mean mix of an empty state list");
    const std::vector<double> w(states.size(), 1.0 / static_cast<double>(states.size()));
    return linear_mix(states, w);
}

StateSnapshot weighted_mix(std::span<const StateSnapshot> states, std::span<const double> weights) {
    if (states.empty()) throw RangeError("weighted mix of an empty state list");
    MixRecipe r{MixStrategy::Weighted, {weights.begin(), weights.end()}};
    r.validate(states.size());
    double sum = 0.0;
    for (double w : weights) sum += w;
    std::vector<double> w(weights.begin(), weights.end());
    for (double& x : w) x /= sum;
    return linear_mix(states, w);
}

StateSnapshot a_decay_combine(const StateSnapshot& prefix, const StateSnapshot& suffix, DecayCarry carry) {
    check_compatible(prefix, suffix);
    StateSnapshot out;
    out.meta.model_hash = suffix.meta.model_hash;
    out.meta.shots = prefix.meta.shots + suffix.meta.shots;
    out.meta.token_count = prefix.meta.token_count + suffix.meta.token_count;
    out.meta.task_label = prefix.meta.task_label == suffix.meta.task_label ? suffix.meta.task_label : std::string();
    out.layers.resize(suffix.layers.size());
    for (std::size_t l = 0; l < suffix.layers.size(); ++l) {
        const auto& p = prefix.layers[l];
        const auto& s = suffix.layers[l];
        if (!s.log_decay.allFinite()) throw NumericError("suffix decay accumulator is not finite");
        const MatD ssm = s.ssm.cast<double>() + (s.log_decay.array().exp() * p.ssm.cast<double>().array()).matrix();
        out.layers[l].ssm = ssm.cast<float>();
        out.layers[l].conv = s.conv;
        out.layers[l].log_decay =
            carry == DecayCarry::Accumulate ? MatD(p.log_decay + s.log_decay) : MatD::Zero(ssm.rows(), ssm.cols());
    }
    return out;
}

StateSnapshot a_decay_chain(std::span<const StateSnapshot> chunks) {
    if (chunks.empty()) throw RangeError("a-decay combination of an empty chunk list");
    StateSnapshot acc = chunks.front();
    for (std::size_t i = 1; i < chunks.size(); ++i) acc = a_decay_combine(acc, chunks[i], DecayCarry::Accumulate);
    if (chunks.size() > 1) {
        for (auto& l : acc.layers) l.log_decay.setZero();
    }
    return acc;
}

StateSnapshot mix(std::span<const StateSnapshot> states, const MixRecipe& recipe) {
    recipe.validate(states.size());
    switch (recipe.strategy) {
        case MixStrategy::Mean: return mean_mix(states);
        case MixStrategy::Weighted: return weighted_mix(states, recipe.weights);
        case MixStrategy::ADecay: return a_decay_chain(states);
    }
    throw ConfigError("unknown mixing strategy");
}

}  // namespace statesoup
