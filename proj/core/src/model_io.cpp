#include "statesoup/model_io.hpp"

#include <string_view>
#include <type_traits>

#include "statesoup/binary_format.hpp"
#include "statesoup/error.hpp"

namespace statesoup {

namespace {

constexpr std::string_view magic() { return {kModelMagic, binary::kMagicSize}; }

}  // namespace

void save_model(const ModelParams& params, const std::string& path, const nlohmann::json& metadata,
                std::optional<std::uint64_t> seed) {
    params.config.validate();
    binary::PayloadWriter w;
    nlohmann::json tensors = nlohmann::json::array();
    for_each_tensor(params, [&](const std::string& name, const auto& t) { tensors.push_back(w.add(name, t)); });
    nlohmann::json header;
    header["format_version"] = kModelFormatVersion;
    header["config"] = params.config;
    header["model_hash"] = hash_hex(config_hash(params.config));
    header["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
    header["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
    header["tensors"] = std::move(tensors);
    binary::write_container(path, magic(), std::move(header), w.bytes());
}

ModelParams load_model(const std::string& path) {
    auto c = binary::read_container(path, magic());
    ModelConfig config;
    try {
        if (c.header.at("format_version").get<int>() != kModelFormatVersion) {
            throw FormatError("unsupported model format version in '" + path + "'");
        }
        config = c.header.at("config").get<ModelConfig>();
        if (c.header.at("model_hash").get<std::string>() != hash_hex(config_hash(config))) {
            throw HashMismatchError("model hash in '" + path + "' does not match its config");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed model header in '" + path + "': " + e.what());
    }
    const auto& tensors = c.header["tensors"];
    binary::PayloadReader r(c.payload);
    ModelParams p = zero_params<float>(config);
    std::size_t i = 0;
    std::size_t total = 0;
    for_each_tensor(p, [&](const std::string& name, auto& t) {
        if (!tensors.is_array() || i >= tensors.size()) throw FormatError("missing tensor '" + name + "'");
        const auto& rec = tensors[i++];
        if constexpr (std::is_same_v<std::decay_t<decltype(t)>, VecF>) {
            auto v = r.vec_f32(rec, name);
            if (v.size() != t.size()) throw FormatError("tensor '" + name + "' has wrong shape");
            t = std::move(v);
        } else {
            auto m = r.mat_f32(rec, name);
            if (m.rows() != t.rows() || m.cols() != t.cols()) throw FormatError("tensor '" + name + "' has wrong shape");
            t = std::move(m);
        }
        total += static_cast<std::size_t>(t.size()) * sizeof(float);
    });
    if (i != tensors.size() || total != c.payload.size()) {
        throw FormatError("payload of '" + path + "' does not match its tensor manifest");
    }
    return p;
}

nlohmann::json load_model_metadata(const std::string& path) {
    auto c = binary::read_container(path, magic());
    return c.header.value("metadata", nlohmann::json::object());
}

}  // namespace statesoup
