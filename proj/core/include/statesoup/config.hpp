#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

namespace statesoup {

enum class DType { F32StorageF64Accumulate };

/// Shape of the stacked gated-linear language model.
struct ModelConfig {
    std::size_t vocab_size = 256;
    std::size_t embed_dim = 64;   // D
    std::size_t state_dim = 16;   // N
    std::size_t num_layers = 4;   // L
    std::size_t conv_width = 4;   // W
    std::size_t delta_rank = 0;   // 0 selects ceil(D / 16)
    DType dtype = DType::F32StorageF64Accumulate;

    std::size_t effective_delta_rank() const noexcept {
        return delta_rank != 0 ? delta_rank : (embed_dim + 15) / 16;
    }

    /// Throws ConfigError on a zero dimension.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// FNV-1a over a canonical textual rendering of the config. Stable across
/// platforms and releases of this library.
std::uint64_t config_hash(const ModelConfig& config);

std::string hash_hex(std::uint64_t hash);

/// Throws ConfigError if `j` is not an object or has a key outside `keys`.
void check_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> keys,
                      std::string_view section);

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace statesoup
