#include "statesoup/config.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "statesoup/error.hpp"

namespace statesoup {

void ModelConfig::validate() const {
    if (vocab_size == 0 || embed_dim == 0 || state_dim == 0 || num_layers == 0 || conv_width == 0) {
        throw ConfigError("model dimensions must all be >= 1");
    }
}

std::uint64_t config_hash(const ModelConfig& c) {
    std::ostringstream os;
    os << "statesoup-model-v1;vocab=" << c.vocab_size << ";D=" << c.embed_dim << ";N=" << c.state_dim
       << ";L=" << c.num_layers << ";W=" << c.conv_width << ";R=" << c.effective_delta_rank()
       << ";dtype=f32s/f64a";
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : os.str()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t hash) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim},
                       {"state_dim", c.state_dim},   {"num_layers", c.num_layers},
                       {"conv_width", c.conv_width}, {"delta_rank", c.delta_rank},
                       {"dtype", "f32-storage/f64-accumulate"}};
}

void check_known_keys(const nlohmann::json& j, std::initializer_list<std::string_view> keys,
                      std::string_view section) {
    if (!j.is_object()) throw ConfigError(std::string(section) + " config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
            throw ConfigError("unknown key '" + k + "' in " + std::string(section) + " config");
        }
    }
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    check_known_keys(j, {"vocab_size", "embed_dim", "state_dim", "num_layers", "conv_width", "delta_rank", "dtype"},
                     "model");
    ModelConfig d;
    c.vocab_size = j.value("vocab_size", d.vocab_size);
    c.embed_dim = j.value("embed_dim", d.embed_dim);
    c.state_dim = j.value("state_dim", d.state_dim);
    c.num_layers = j.value("num_layers", d.num_layers);
    c.conv_width = j.value("conv_width", d.conv_width);
    c.delta_rank = j.value("delta_rank", std::size_t{0});
    if (j.contains("dtype") && j.at("dtype").get<std::string>() != "f32-storage/f64-accumulate") {
        throw ConfigError("unsupported dtype " + j.at("dtype").get<std::string>());
    }
    c.dtype = DType::F32StorageF64Accumulate;
}

}  // namespace statesoup
