#include "statesoup/binary_format.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "statesoup/error.hpp"

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace statesoup::binary {

namespace {

std::size_t elem_size(const std::string& dtype) {
    if (dtype == "f32") return 4;
    if (dtype == "f64") return 8;
    throw FormatError("unknown tensor dtype '" + dtype + "'");
}

std::uint64_t get_u64(const char* b) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

}  // namespace

nlohmann::json PayloadWriter::append(const std::string& name, const char* dtype, std::vector<std::size_t> shape,
                                     const void* data, std::size_t nbytes) {
    nlohmann::json rec;
    rec["name"] = name;
    rec["dtype"] = dtype;
    rec["shape"] = std::move(shape);
    rec["offset"] = bytes_.size();
    rec["bytes"] = nbytes;
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + nbytes);
    return rec;
}

nlohmann::json PayloadWriter::add(const std::string& name, const MatF& m) {
    return append(name, "f32", {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, m.data(),
                  static_cast<std::size_t>(m.size()) * sizeof(float));
}

nlohmann::json PayloadWriter::add(const std::string& name, const VecF& v) {
    return append(name, "f32", {static_cast<std::size_t>(v.size())}, v.data(),
                  static_cast<std::size_t>(v.size()) * sizeof(float));
}

nlohmann::json PayloadWriter::add(const std::string& name, const MatD& m) {
    return append(name, "f64", {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, m.data(),
                  static_cast<std::size_t>(m.size()) * sizeof(double));
}

const char* PayloadReader::locate(const nlohmann::json& record, const std::string& expected_name, const char* dtype,
                                  std::size_t rank, std::vector<std::size_t>& shape) const {
    try {
        const auto name = record.at("name").get<std::string>();
        if (name != expected_name) {
            throw FormatError("expected tensor '" + expected_name + "', found '" + name + "'");
        }
        const auto dt = record.at("dtype").get<std::string>();
        if (dt != dtype) throw FormatError("tensor '" + name + "' has dtype " + dt + ", expected " + dtype);
        shape = record.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != rank) throw FormatError("tensor '" + name + "' has wrong rank");
        std::size_t count = 1;
        for (auto s : shape) count *= s;
        const auto offset = record.at("offset").get<std::uint64_t>();
        const auto nbytes = record.at("bytes").get<std::uint64_t>();
        if (nbytes != count * elem_size(dt)) {
            throw FormatError("truncated tensor '" + name + "': header length disagrees with shape");
        }
        if (offset > bytes_.size() || nbytes > bytes_.size() - offset) {
            throw FormatError("truncated payload: tensor '" + name + "' extends past end of file");
        }
        return bytes_.data() + offset;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed tensor record: ") + e.what());
    }
}

MatF PayloadReader::mat_f32(const nlohmann::json& record, const std::string& expected_name) const {
    std::vector<std::size_t> shape;
    const char* p = locate(record, expected_name, "f32", 2, shape);
    MatF m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
    std::memcpy(m.data(), p, static_cast<std::size_t>(m.size()) * sizeof(float));
    return m;
}

VecF PayloadReader::vec_f32(const nlohmann::json& record, const std::string& expected_name) const {
    std::vector<std::size_t> shape;
    const char* p = locate(record, expected_name, "f32", 1, shape);
    VecF v(static_cast<Eigen::Index>(shape[0]));
    std::memcpy(v.data(), p, static_cast<std::size_t>(v.size()) * sizeof(float));
    return v;
}

MatD PayloadReader::mat_f64(const nlohmann::json& record, const std::string& expected_name) const {
    std::vector<std::size_t> shape;
    const char* p = locate(record, expected_name, "f64", 2, shape);
    MatD m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
    std::memcpy(m.data(), p, static_cast<std::size_t>(m.size()) * sizeof(double));
    return m;
}

void write_file_atomic(const std::string& path, std::string_view data) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open '" + path + "' for writing");
        os.write(data.data(), static_cast<std::streamsize>(data.size()));
        os.flush();
        if (!os) throw IoError("write failed for '" + path + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move file into place at '" + path + "'");
    }
}

void write_container(const std::string& path, std::string_view magic, nlohmann::json header,
                     const std::vector<char>& payload) {
    if (magic.size() != kMagicSize) throw FormatError("magic must be 8 bytes");
    header["payload_bytes"] = payload.size();
    const std::string text = header.dump();
    std::string out;
    out.reserve(kMagicSize + 8 + text.size() + payload.size());
    out.append(magic);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xff));
    out.append(text);
    out.append(payload.data(), payload.size());
    write_file_atomic(path, out);
}

Container read_container(const std::string& path, std::string_view magic) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::vector<char> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (is.bad()) throw IoError("read failed for '" + path + "'");

    if (raw.size() < kMagicSize || std::memcmp(raw.data(), magic.data(), kMagicSize) != 0) {
        throw FormatError("bad magic in '" + path + "'");
    }
    if (raw.size() < kMagicSize + 8) throw FormatError("truncated header in '" + path + "'");
    const std::uint64_t hlen = get_u64(raw.data() + kMagicSize);
    const std::size_t hstart = kMagicSize + 8;
    if (hlen > raw.size() - hstart) throw FormatError("truncated header in '" + path + "'");

    Container c;
    try {
        c.header = nlohmann::json::parse(raw.begin() + static_cast<std::ptrdiff_t>(hstart),
                                         raw.begin() + static_cast<std::ptrdiff_t>(hstart + hlen));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed header in '" + path + "': " + e.what());
    }
    if (!c.header.is_object() || !c.header.contains("payload_bytes") ||
        !c.header["payload_bytes"].is_number_unsigned()) {
        throw FormatError("header in '" + path + "' lacks payload_bytes");
    }
    const std::size_t pstart = hstart + hlen;
    const auto declared = c.header["payload_bytes"].get<std::uint64_t>();
    if (declared != raw.size() - pstart) {
        throw FormatError("truncated payload in '" + path + "': header declares " + std::to_string(declared) +
                          " bytes, file holds " + std::to_string(raw.size() - pstart));
    }
    c.payload.assign(raw.begin() + static_cast<std::ptrdiff_t>(pstart), raw.end());
    return c;
}

}  // namespace statesoup::binary
