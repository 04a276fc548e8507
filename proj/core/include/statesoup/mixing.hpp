#pragma once

#include <span>
#include <string>
#include <vector>

#include "statesoup/state.hpp"

namespace statesoup {

enum class MixStrategy { Mean, Weighted, ADecay };

std::string to_string(MixStrategy s);
/// Accepts "mean", "weighted" or "adecay"; throws ConfigError otherwise.
MixStrategy parse_mix_strategy(const std::string& name);

struct MixRecipe {
    MixStrategy strategy = MixStrategy::Mean;
    std::vector<double> weights;  // weighted only

    /// Throws ConfigError if the weights do not fit `operands` states.
    void validate(std::size_t operands) const;
};

/// Elementwise mean of every ssm and conv tensor, accumulated in 64-bit in
/// list order. The result has zero log_decay, shots = sum of operand shots,
/// token_count = max of operand counts, and keeps the task label only when
/// all operands share it.
StateSnapshot mean_mix(std::span<const StateSnapshot> states);

/// Sum of w_i * state_i with weights normalized to sum 1. Other fields as
/// mean_mix.
StateSnapshot weighted_mix(std::span<const StateSnapshot> states, std::span<const double> weights);

enum class DecayCarry {
    Reset,       // result log_decay = 0
    Accumulate,  // result log_decay = prefix + suffix, for chaining partitions
};

/// Per layer: suffix.ssm + exp(suffix.log_decay) * prefix.ssm, conv window
/// from the suffix. The suffix must have been processed with its decay
/// accumulator reset at its first token; tokens and shots add up.
StateSnapshot a_decay_combine(const StateSnapshot& prefix, const StateSnapshot& suffix,
                              DecayCarry carry = DecayCarry::Reset);

/// Left fold of a_decay_combine over chunks in sequence order.
StateSnapshot a_decay_chain(std::span<const StateSnapshot> chunks);

/// Dispatches on the recipe. A-decay treats the operands as an ordered chunk
/// partition.
StateSnapshot mix(std::span<const StateSnapshot> states, const MixRecipe& recipe);

}  // namespace statesoup
