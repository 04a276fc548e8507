#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "statesoup/types.hpp"

namespace statesoup::binary {

/// Container layout: 8-byte magic, u64 little-endian header length, UTF-8
/// JSON header, then the raw little-endian tensor payload. Tensors are
/// described in the header by {name, dtype, shape, offset, bytes}.
constexpr std::size_t kMagicSize = 8;

/// Accumulates tensors into a payload and their manifest records.
class PayloadWriter {
public:
    /// Returns the manifest record for the appended tensor.
    nlohmann::json add(const std::string& name, const MatF& m);
    nlohmann::json add(const std::string& name, const VecF& v);
    nlohmann::json add(const std::string& name, const MatD& m);

    const std::vector<char>& bytes() const noexcept { return bytes_; }

private:
    nlohmann::json append(const std::string& name, const char* dtype, std::vector<std::size_t> shape,
                          const void* data, std::size_t nbytes);

    std::vector<char> bytes_;
};

/// Bounds-checked reads of manifest records from a payload.
class PayloadReader {
public:
    explicit PayloadReader(const std::vector<char>& bytes) : bytes_(bytes) {}

    MatF mat_f32(const nlohmann::json& record, const std::string& expected_name) const;
    VecF vec_f32(const nlohmann::json& record, const std::string& expected_name) const;
    MatD mat_f64(const nlohmann::json& record, const std::string& expected_name) const;

private:
    const char* locate(const nlohmann::json& record, const std::string& expected_name, const char* dtype,
                       std::size_t rank, std::vector<std::size_t>& shape) const;

    const std::vector<char>& bytes_;
};

struct Container {
    nlohmann::json header;
    std::vector<char> payload;
};

/// Writes `data` to a temporary sibling file and renames it over `path`.
/// Throws IoError.
void write_file_atomic(const std::string& path, std::string_view data);

/// Writes through a temporary file renamed into place. The header gains a
/// "payload_bytes" field. Throws IoError.
void write_container(const std::string& path, std::string_view magic, nlohmann::json header,
                     const std::vector<char>& payload);

/// Throws IoError when unreadable and FormatError on bad magic, malformed
/// header, or a payload whose length disagrees with the header.
Container read_container(const std::string& path, std::string_view magic);

}  // namespace statesoup::binary
