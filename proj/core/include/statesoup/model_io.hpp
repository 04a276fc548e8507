#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "statesoup/params.hpp"

namespace statesoup {

constexpr char kModelMagic[] = "SSOUPM1";  // with its terminator: 8 bytes
constexpr int kModelFormatVersion = 1;

/// Writes a checkpoint. `metadata` is stored verbatim under "metadata";
/// `seed` is the initialization seed, null in the header when unknown.
void save_model(const ModelParams& params, const std::string& path, const nlohmann::json& metadata = {},
                std::optional<std::uint64_t> seed = {});

/// Throws IoError, FormatError, or HashMismatchError when the stored hash
/// disagrees with the stored config.
ModelParams load_model(const std::string& path);

/// The "metadata" object of a checkpoint, without reading tensors into
/// parameters.
nlohmann::json load_model_metadata(const std::string& path);

}  // namespace statesoup
