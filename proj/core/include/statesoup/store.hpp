#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "statesoup/state.hpp"
#include "statesoup/types.hpp"

namespace statesoup {

enum class StateKind { Ssm, Conv };

std::string to_string(StateKind kind);
/// Accepts "ssm" or "conv"; throws ConfigError otherwise.
StateKind parse_state_kind(const std::string& name);

constexpr char kLibraryMagic[] = "SSOUPL1";  // with its terminator: 8 bytes
constexpr int kLibraryFormatVersion = 1;

/// Ordered, task-labeled collection of snapshots from one model. Entry order
/// is part of the value: retrieval ties resolve to the lowest index.
struct SkillLibrary {
    std::vector<StateSnapshot> entries;
    std::uint64_t model_hash = 0;
    int format_version = kLibraryFormatVersion;

    explicit SkillLibrary(std::uint64_t hash = 0) : model_hash(hash) {}

    /// Throws HashMismatchError if the snapshot comes from another model.
    void add(StateSnapshot s);

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }
};

struct RetrievalQuery {
    StateSnapshot query;
    std::size_t layer_index = 0;
    StateKind state_kind = StateKind::Ssm;
};

struct RetrievalResult {
    std::size_t index = 0;
    double similarity = 0.0;
};

/// Row-major flattening of one layer's ssm (D*N values, element (d, n) at
/// d*N + n) or conv window (W*D values).
VecD flatten_state(const StateSnapshot& s, std::size_t layer_index, StateKind kind);

/// u.v / (|u| |v|). Throws ShapeError on length mismatch and NumericError on a
/// zero-norm input.
double cosine_similarity(const VecD& u, const VecD& v);

/// Entry with the highest cosine similarity to the query, lowest index on
/// ties. Throws on an empty library, hash mismatch, or zero-norm query.
RetrievalResult retrieve_nearest(const SkillLibrary& lib, const RetrievalQuery& q);

/// Similarities of the query to every entry, in entry order.
std::vector<double> similarities(const SkillLibrary& lib, const RetrievalQuery& q);

/// Written atomically. Tensors are stored bit-exactly.
void save_library(const SkillLibrary& lib, const std::string& path);
SkillLibrary load_library(const std::string& path);

/// CSV with header task_label,shots,token_count,v0..v{M-1}; values carry 9
/// significant digits. Returns the number of data rows.
std::size_t export_states_csv(const SkillLibrary& lib, std::size_t layer_index, StateKind kind,
                              const std::string& path);

}  // namespace statesoup
