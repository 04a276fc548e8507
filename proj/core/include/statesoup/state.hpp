#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "statesoup/config.hpp"
#include "statesoup/types.hpp"

namespace statesoup {

/// Recurrent state of one block.
struct LayerState {
    MatF ssm;        // D x N, the linear recurrence state
    MatF conv;       // W x D, last W pre-conv inputs, row W-1 newest
    MatD log_decay;  // D x N, running sum of log transition since last reset
};

struct SnapshotMeta {
    std::string task_label;
    std::size_t shots = 0;
    std::size_t token_count = 0;
    std::uint64_t model_hash = 0;

    friend bool operator==(const SnapshotMeta&, const SnapshotMeta&) = default;
};

/// A full model state: the unit of storage, retrieval and mixing.
struct StateSnapshot {
    std::vector<LayerState> layers;
    SnapshotMeta meta;

    std::size_t num_layers() const noexcept { return layers.size(); }
};

StateSnapshot zero_state(const ModelConfig& config);

/// Zero recurrent state and decay accumulator, conv window kept. This is the
/// starting point for processing a chunk that directly follows `prefix` when
/// the chunk's state will later be recombined with the prefix.
StateSnapshot suffix_start(const StateSnapshot& prefix);

/// Throws HashMismatchError / ShapeError if `s` does not fit `config`.
void check_snapshot(const StateSnapshot& s, const ModelConfig& config);

/// Bitwise equality of every tensor and metadata field.
bool bit_equal(const StateSnapshot& a, const StateSnapshot& b);

}  // namespace statesoup
