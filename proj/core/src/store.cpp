#include "statesoup/store.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <string_view>

#include "statesoup/binary_format.hpp"
#include "statesoup/error.hpp"

namespace statesoup {

namespace {

constexpr std::string_view magic() { return {kLibraryMagic, binary::kMagicSize}; }

std::uint64_t parse_hash(const std::string& hex) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
        v = std::stoull(hex, &used, 16);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != hex.size() || hex.empty()) throw FormatError("malformed model hash '" + hex + "'");
    return v;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void check_query_layer(const StateSnapshot& s, std::size_t layer_index) {
    if (layer_index >= s.layers.size()) {
        throw RangeError("layer index " + std::to_string(layer_index) + " out of range for " +
                         std::to_string(s.layers.size()) + " layers");
    }
}

}  // namespace

std::string to_string(StateKind kind) { return kind == StateKind::Ssm ? "ssm" : "conv"; }

StateKind parse_state_kind(const std::string& name) {
    if (name == "ssm") return StateKind::Ssm;
    if (name == "conv") return StateKind::Conv;
    throw ConfigError("unknown state kind '" + name + "' (expected ssm or conv)");
}

void SkillLibrary::add(StateSnapshot s) {
    if (entries.empty() && model_hash == 0) model_hash = s.meta.model_hash;
    if (s.meta.model_hash != model_hash) {
        throw HashMismatchError("snapshot model hash " + hash_hex(s.meta.model_hash) + " does not match library " +
                                hash_hex(model_hash));
    }
    entries.push_back(std::move(s));
}

VecD flatten_state(const StateSnapshot& s, std::size_t layer_index, StateKind kind) {
    check_query_layer(s, layer_index);
    const MatF& m = kind == StateKind::Ssm ? s.layers[layer_index].ssm : s.layers[layer_index].conv;
    VecD v(m.size());
    for (Eigen::Index r = 0, i = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) v[i++] = static_cast<double>(m(r, c));
    }
    return v;
}

double cosine_similarity(const VecD& u, const VecD& v) {
    if (u.size() != v.size()) {
        throw ShapeError("cosine similarity of vectors with lengths " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (!(nu > 0.0) || !(nv > 0.0)) throw NumericError("cosine similarity of a zero-norm vector");
    const double s = u.dot(v) / (nu * nv);
    return std::clamp(s, -1.0, 1.0);
}

std::vector<double> similarities(const SkillLibrary& lib, const RetrievalQuery& q) {
    if (lib.empty()) throw RangeError("retrieval from an empty library");
    if (q.query.meta.model_hash != lib.model_hash) {
        throw HashMismatchError("query model hash " + hash_hex(q.query.meta.model_hash) + " does not match library " +
                                hash_hex(lib.model_hash));
    }
    const VecD qv = flatten_state(q.query, q.layer_index, q.state_kind);
    if (!(qv.norm() > 0.0)) throw NumericError("retrieval query has a zero-norm state");
    std::vector<double> out;
    out.reserve(lib.size());
    for (const auto& e : lib.entries) {
        const VecD ev = flatten_state(e, q.layer_index, q.state_kind);
        const double ne = ev.norm();
        out.push_back(ne > 0.0 ? cosine_similarity(qv, ev) : 0.0);
    }
    return out;
}

RetrievalResult retrieve_nearest(const SkillLibrary& lib, const RetrievalQuery& q) {
    const auto sims = similarities(lib, q);
    RetrievalResult best{0, sims[0]};
    for (std::size_t i = 1; i < sims.size(); ++i) {
        if (sims[i] > best.similarity) best = {i, sims[i]};
    }
    return best;
}

void save_library(const SkillLibrary& lib, const std::string& path) {
    binary::PayloadWriter w;
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < lib.entries.size(); ++i) {
        const auto& e = lib.entries[i];
        if (e.meta.model_hash != lib.model_hash) {
            throw HashMismatchError("library entry " + std::to_string(i) + " has a foreign model hash");
        }
        nlohmann::json layers = nlohmann::json::array();
        for (std::size_t l = 0; l < e.layers.size(); ++l) {
            const std::string p = "entries." + std::to_string(i) + ".layers." + std::to_string(l) + ".";
            layers.push_back({{"ssm", w.add(p + "ssm", e.layers[l].ssm)},
                              {"conv", w.add(p + "conv", e.layers[l].conv)},
                              {"log_decay", w.add(p + "log_decay", e.layers[l].log_decay)}});
        }
        entries.push_back({{"task_label", e.meta.task_label},
                           {"shots", e.meta.shots},
                           {"token_count", e.meta.token_count},
                           {"model_hash", hash_hex(e.meta.model_hash)},
                           {"layers", std::move(layers)}});
    }
    nlohmann::json header;
    header["format_version"] = lib.format_version;
    header["model_hash"] = hash_hex(lib.model_hash);
    header["entries"] = std::move(entries);
    binary::write_container(path, magic(), std::move(header), w.bytes());
}

SkillLibrary load_library(const std::string& path) {
    auto c = binary::read_container(path, magic());
    binary::PayloadReader r(c.payload);
    SkillLibrary lib;
    std::size_t total = 0;
    try {
        lib.format_version = c.header.at("format_version").get<int>();
        if (lib.format_version != kLibraryFormatVersion) {
            throw FormatError("unsupported library format version " + std::to_string(lib.format_version) + " in '" +
                              path + "'");
        }
        lib.model_hash = parse_hash(c.header.at("model_hash").get<std::string>());
        const auto& entries = c.header.at("entries");
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& je = entries[i];
            StateSnapshot s;
            s.meta.task_label = je.at("task_label").get<std::string>();
            s.meta.shots = je.at("shots").get<std::size_t>();
            s.meta.token_count = je.at("token_count").get<std::size_t>();
            s.meta.model_hash = parse_hash(je.at("model_hash").get<std::string>());
            const auto& layers = je.at("layers");
            for (std::size_t l = 0; l < layers.size(); ++l) {
                const std::string p = "entries." + std::to_string(i) + ".layers." + std::to_string(l) + ".";
                LayerState ls;
                ls.ssm = r.mat_f32(layers[l].at("ssm"), p + "ssm");
                ls.conv = r.mat_f32(layers[l].at("conv"), p + "conv");
                ls.log_decay = r.mat_f64(layers[l].at("log_decay"), p + "log_decay");
                total += static_cast<std::size_t>(ls.ssm.size() + ls.conv.size()) * sizeof(float) +
                         static_cast<std::size_t>(ls.log_decay.size()) * sizeof(double);
                s.layers.push_back(std::move(ls));
            }
            lib.add(std::move(s));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed library header in '" + path + "': " + e.what());
    }
    if (total != c.payload.size()) {
        throw FormatError("payload of '" + path + "' does not match its tensor manifest");
    }
    return lib;
}

std::size_t export_states_csv(const SkillLibrary& lib, std::size_t layer_index, StateKind kind,
                              const std::string& path) {
    std::size_t width = 0;
    if (!lib.empty()) {
        check_query_layer(lib.entries.front(), layer_index);
        width = static_cast<std::size_t>(flatten_state(lib.entries.front(), layer_index, kind).size());
    }
    std::ostringstream os;
    os << "task_label,shots,token_count";
    for (std::size_t i = 0; i < width; ++i) os << ",v" << i;
    os << '\n' << std::setprecision(9);
    for (const auto& e : lib.entries) {
        const VecD v = flatten_state(e, layer_index, kind);
        if (static_cast<std::size_t>(v.size()) != width) throw ShapeError("library entries differ in shape");
        os << csv_field(e.meta.task_label) << ',' << e.meta.shots << ',' << e.meta.token_count;
        for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << v[i];
        os << '\n';
    }
    binary::write_file_atomic(path, os.str());
    return lib.size();
}

}  // namespace statesoup
