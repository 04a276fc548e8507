#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "statesoup/params.hpp"
#include "statesoup/state.hpp"

namespace statesoup {

struct StepResult {
    StateSnapshot state;
    VecD logits;
};

struct SequenceResult {
    StateSnapshot state;
    std::vector<VecD> logits;  // one entry per input token
};

/// Anything that maps (state, token) to (state, next-token logits). The
/// experiment runners are written against this interface so they can be
/// exercised with analytic stub models.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;

    virtual const ModelConfig& config() const = 0;

    /// Advances `state` by one token and writes vocab_size logits.
    /// Implementations must be pure functions of (state, token).
    virtual void step_inplace(StateSnapshot& state, Token token, VecD& logits) const = 0;

    std::uint64_t model_hash() const { return config_hash(config()); }
    StateSnapshot zero_state() const { return statesoup::zero_state(config()); }
};

StepResult forward_step(const LanguageModel& model, const StateSnapshot& state, Token token);

/// Folds forward_step over `tokens`. With `reset_decay` the decay accumulator
/// is zeroed first so that it covers exactly these tokens.
SequenceResult process_sequence(const LanguageModel& model, const StateSnapshot& state,
                                std::span<const Token> tokens, bool reset_decay = false,
                                bool keep_logits = true);

/// State only; avoids materializing per-token logits.
StateSnapshot advance(const LanguageModel& model, const StateSnapshot& state,
                      std::span<const Token> tokens, bool reset_decay = false);

/// Mean next-token NLL of tokens[1..] given the prefix tokens, starting
/// from `state`. Requires at least two tokens.
double sequence_loss(const LanguageModel& model, const StateSnapshot& state,
                     std::span<const Token> tokens);

/// log-softmax computed with max subtraction.
VecD log_softmax(const VecD& logits);

/// Index of the largest logit; ties go to the lowest index.
Token argmax_token(const VecD& logits);

struct LayerStepResult {
    LayerState state;
    VecD output;  // block output before the residual add
};

/// One block applied to one residual-stream vector.
LayerStepResult layer_step(const LayerParams& params, const LayerState& state, const VecD& input);

/// The gated-linear language model. Parameters are stored in 32-bit floats;
/// all arithmetic runs in 64-bit and states are rounded to 32-bit on write.
class GatedLinearModel final : public LanguageModel {
public:
    explicit GatedLinearModel(ModelParams params);

    const ModelConfig& config() const override { return params_.config; }
    const ModelParams& params() const noexcept { return params_; }

    void step_inplace(StateSnapshot& state, Token token, VecD& logits) const override;

    /// One block in 64-bit arithmetic; exposed for single-layer analyses.
    void layer_step_inplace(std::size_t layer, LayerState& state, const VecD& input,
                            VecD& output) const;

    /// Per-step transition coefficients A_t of `layer` for a block input.
    /// Does not modify any state beyond the supplied conv window copy.
    MatD transition(std::size_t layer, const LayerState& state, const VecD& input) const;

private:
    ModelParams params_;
    BasicParams<double> compute_;
};

}  // namespace statesoup
