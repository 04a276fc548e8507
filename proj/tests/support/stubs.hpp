#pragma once

#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "statesoup/model.hpp"
#include "statesoup/rng.hpp"
#include "statesoup/tasks.hpp"

namespace statesoup::testing {

/// Tiny shapes shared by the stubs; the state only carries bookkeeping.
inline ModelConfig stub_config() {
    ModelConfig c;
    c.vocab_size = kTaskVocab;
    c.embed_dim = 4;
    c.state_dim = 2;
    c.num_layers = 1;
    c.conv_width = 2;
    return c;
}

/// Remembers the previous token in the conv window and, after ARROW, puts
/// all logit mass on the task's answer for that question.
class OracleModel final : public LanguageModel {
public:
    explicit OracleModel(const TaskSpec& task) : config_(stub_config()) {
        for (std::size_t i = 0; i < task.size(); ++i) answer_[task.questions[i]] = task.answers[i];
    }

    const ModelConfig& config() const override { return config_; }

    void step_inplace(StateSnapshot& s, Token token, VecD& logits) const override {
        auto& conv = s.layers[0].conv;
        const auto prev = static_cast<Token>(conv(1, 0));
        conv(0, 0) = conv(1, 0);
        conv(1, 0) = static_cast<float>(token);
        s.layers[0].ssm(0, 0) += 1.0f;
        logits = VecD::Zero(static_cast<Eigen::Index>(config_.vocab_size));
        if (token == kArrow) {
            auto it = answer_.find(prev);
            if (it != answer_.end()) logits[it->second] = 1.0;
        }
    }

private:
    ModelConfig config_;
    std::unordered_map<Token, Token> answer_;
};

/// All-zero logits: argmax always returns token 0.
class UniformModel final : public LanguageModel {
public:
    UniformModel() : config_(stub_config()) {}
    const ModelConfig& config() const override { return config_; }
    void step_inplace(StateSnapshot& s, Token, VecD& logits) const override {
        s.layers[0].ssm(0, 0) += 1.0f;
        logits = VecD::Zero(static_cast<Eigen::Index>(config_.vocab_size));
    }

private:
    ModelConfig config_;
};

/// Logits and state drawn from a hash of (state, token): a deterministic
/// source of uninformative states and uniformly random argmax.
class RandomLogitsModel final : public LanguageModel {
public:
    explicit RandomLogitsModel(std::uint64_t seed = 0) : config_(stub_config()), seed_(seed) {}
    const ModelConfig& config() const override { return config_; }
    void step_inplace(StateSnapshot& s, Token token, VecD& logits) const override {
        auto& l = s.layers[0];
        std::uint64_t h = derive_seed(seed_, token, static_cast<std::uint64_t>(l.conv(0, 0) * 1e6f));
        Rng rng(h);
        for (Eigen::Index i = 0; i < l.ssm.size(); ++i) l.ssm.data()[i] = static_cast<float>(rng.normal());
        l.conv(0, 0) = static_cast<float>(rng.uniform());
        logits.resize(static_cast<Eigen::Index>(config_.vocab_size));
        for (Eigen::Index i = 0; i < logits.size(); ++i) logits[i] = rng.normal();
    }

private:
    ModelConfig config_;
    std::uint64_t seed_;
};

inline MatF random_matf(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
    MatF m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(scale * rng.normal());
    return m;
}

inline StateSnapshot random_snapshot(const ModelConfig& config, Rng& rng) {
    StateSnapshot s = zero_state(config);
    for (auto& l : s.layers) {
        l.ssm = random_matf(l.ssm.rows(), l.ssm.cols(), rng);
        l.conv = random_matf(l.conv.rows(), l.conv.cols(), rng);
        for (Eigen::Index i = 0; i < l.log_decay.size(); ++i) l.log_decay.data()[i] = -std::abs(rng.normal());
    }
    s.meta.task_label = "random";
    s.meta.shots = 1 + rng.below(32);
    s.meta.token_count = 4 * s.meta.shots;
    return s;
}

inline TokenSeq random_tokens(std::size_t n, std::size_t vocab, Rng& rng) {
    TokenSeq t(n);
    for (auto& x : t) x = static_cast<Token>(rng.below(vocab));
    return t;
}

/// max |a - b| / max |b|.
template <class A, class B>
double rel_err(const A& a, const B& b) {
    const double denom = b.template cast<double>().cwiseAbs().maxCoeff();
    const double num = (a.template cast<double>() - b.template cast<double>()).cwiseAbs().maxCoeff();
    return denom > 0 ? num / denom : num;
}

}  // namespace statesoup::testing
