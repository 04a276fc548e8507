#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "statesoup/error.hpp"
#include "statesoup/store.hpp"
#include "support/stubs.hpp"

using namespace statesoup;
using namespace statesoup::testing;

namespace {

ModelConfig store_config() {
    ModelConfig c;
    c.embed_dim = 8;
    c.state_dim = 3;
    c.num_layers = 3;
    c.conv_width = 2;
    return c;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("statesoup_test_" + name)).string();
}

SkillLibrary random_library(std::size_t n, Rng& rng) {
    SkillLibrary lib(config_hash(store_config()));
    for (std::size_t i = 0; i < n; ++i) {
        auto s = random_snapshot(store_config(), rng);
        s.meta.task_label = "task-" + std::to_string(i % 3);
        lib.add(std::move(s));
    }
    return lib;
}

std::vector<char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("flatten_state indexing") {
    Rng rng(1);
    const auto zero = zero_state(store_config());
    CHECK(flatten_state(zero, 1, StateKind::Ssm) == VecD::Zero(24));
    CHECK(flatten_state(zero, 1, StateKind::Conv).size() == 16);

    const auto s = random_snapshot(store_config(), rng);
    const VecD v = flatten_state(s, 2, StateKind::Ssm);
    for (Eigen::Index d = 0; d < 8; ++d) {
        for (Eigen::Index n = 0; n < 3; ++n) CHECK(v[d * 3 + n] == static_cast<double>(s.layers[2].ssm(d, n)));
    }
    auto t = s;
    t.layers[2].ssm(5, 1) += 1.0f;
    CHECK(flatten_state(t, 2, StateKind::Ssm) != v);
    CHECK_THROWS_AS(flatten_state(s, 3, StateKind::Ssm), RangeError);
    CHECK(parse_state_kind("conv") == StateKind::Conv);
    CHECK_THROWS_AS(parse_state_kind("both"), ConfigError);
}

TEST_CASE("cosine similarity examples and errors") {
    VecD v(3);
    v << 0.3, -2.0, 5.0;
    CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-12));
    VecD e1(2), e2(2), d(2);
    e1 << 1, 0;
    e2 << 0, 1;
    d << 1, 1;
    CHECK(cosine_similarity(e1, e2) == 0.0);
    CHECK(std::abs(cosine_similarity(d, e1) - 0.70710678) <= 1e-7);
    CHECK_THROWS_AS(cosine_similarity(VecD::Zero(2), e1), NumericError);
    CHECK_THROWS_AS(cosine_similarity(v, e1), ShapeError);
}

TEST_CASE("property: cosine similarity is symmetric and scale invariant") {
    Rng rng(2);
    for (int i = 0; i < 50; ++i) {
        VecD u(10), w(10);
        for (Eigen::Index j = 0; j < 10; ++j) {
            u[j] = rng.normal();
            w[j] = rng.normal();
        }
        const double alpha = std::exp(rng.uniform(-5, 5));
        CHECK(std::abs(cosine_similarity(u, w) - cosine_similarity(w, u)) <= 1e-12);
        CHECK(std::abs(cosine_similarity(alpha * u, w) - cosine_similarity(u, w)) <= 1e-6);
    }
}

TEST_CASE("retrieve_nearest examples") {
    Rng rng(3);
    auto lib = random_library(5, rng);
    for (std::size_t i = 0; i < lib.size(); ++i) {
        const auto r = retrieve_nearest(lib, {lib.entries[i], 1, StateKind::Ssm});
        CHECK(r.index == i);
        CHECK(r.similarity == doctest::Approx(1.0).epsilon(1e-6));
    }

    // Mutually orthogonal flattened states.
    SkillLibrary ortho(config_hash(store_config()));
    for (int i = 0; i < 3; ++i) {
        auto s = zero_state(store_config());
        s.layers[0].ssm(i, i) = 1.0f + static_cast<float>(i);
        ortho.add(s);
    }
    auto q = zero_state(store_config());
    q.layers[0].ssm = 0.9f * ortho.entries[1].layers[0].ssm + 0.1f * ortho.entries[2].layers[0].ssm;
    const auto sims = similarities(ortho, {q, 0, StateKind::Ssm});
    const auto best = std::max_element(sims.begin(), sims.end()) - sims.begin();
    const auto r = retrieve_nearest(ortho, {q, 0, StateKind::Ssm});
    CHECK(r.index == 1);
    CHECK(static_cast<std::ptrdiff_t>(r.index) == best);

    CHECK_THROWS_AS(retrieve_nearest(SkillLibrary(lib.model_hash), {q, 0, StateKind::Ssm}), RangeError);
    CHECK_THROWS_AS(retrieve_nearest(lib, {zero_state(store_config()), 0, StateKind::Ssm}), NumericError);
    auto foreign = lib.entries[0];
    foreign.meta.model_hash ^= 1;
    CHECK_THROWS_AS(retrieve_nearest(lib, {foreign, 0, StateKind::Ssm}), HashMismatchError);
    CHECK_THROWS_AS(lib.add(foreign), HashMismatchError);
}

TEST_CASE("retrieval ties go to the lowest index") {
    Rng rng(4);
    auto lib = random_library(1, rng);
    lib.add(lib.entries[0]);
    lib.add(lib.entries[0]);
    CHECK(retrieve_nearest(lib, {lib.entries[0], 0, StateKind::Ssm}).index == 0);
}

TEST_CASE("property: retrieval is permutation invariant") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto lib = random_library(12, rng);
        const auto q = random_snapshot(store_config(), rng);
        std::vector<std::size_t> perm(lib.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);
        SkillLibrary shuffled(lib.model_hash);
        for (auto p : perm) shuffled.add(lib.entries[p]);
        const auto a = retrieve_nearest(lib, {q, 1, StateKind::Ssm});
        const auto b = retrieve_nearest(shuffled, {q, 1, StateKind::Ssm});
        CHECK(a.similarity == b.similarity);
        CHECK(perm[b.index] == a.index);
    }
}

TEST_CASE("library round trip is bit exact and keeps order") {
    Rng rng(6);
    const auto lib = random_library(10, rng);
    const auto path = temp_path("lib_roundtrip.ssl");
    save_library(lib, path);
    const auto back = load_library(path);
    REQUIRE(back.size() == lib.size());
    CHECK(back.model_hash == lib.model_hash);
    CHECK(back.format_version == kLibraryFormatVersion);
    for (std::size_t i = 0; i < lib.size(); ++i) CHECK(bit_equal(back.entries[i], lib.entries[i]));

    const auto path2 = temp_path("lib_roundtrip2.ssl");
    save_library(back, path2);
    CHECK(read_all(path) == read_all(path2));
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("library loader rejects bad magic, truncation and missing files") {
    Rng rng(7);
    const auto lib = random_library(3, rng);
    const auto path = temp_path("lib_corrupt.ssl");
    save_library(lib, path);
    const auto good = read_all(path);

    auto bad_magic = good;
    bad_magic[0] = 'X';
    write_all(path, bad_magic);
    CHECK_THROWS_AS(load_library(path), FormatError);

    auto truncated = good;
    truncated.resize(good.size() - 5);
    write_all(path, truncated);
    CHECK_THROWS_WITH_AS(load_library(path), doctest::Contains("truncated"), FormatError);

    auto header_only = good;
    header_only.resize(20);
    write_all(path, header_only);
    CHECK_THROWS_AS(load_library(path), FormatError);

    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_library(path), IoError);
}

TEST_CASE("states export to CSV") {
    Rng rng(8);
    const auto lib = random_library(12, rng);
    const auto path = temp_path("states.csv");
    CHECK(export_states_csv(lib, 1, StateKind::Ssm, path) == 12);
    std::ifstream in(path);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 13);
    CHECK(lines[0].rfind("task_label,shots,token_count,v0,v1,", 0) == 0);
    CHECK(lines[0].find(",v23") != std::string::npos);
    for (std::size_t r = 0; r < 12; ++r) {
        std::stringstream ss(lines[r + 1]);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() == 27);
        CHECK(cells[0] == lib.entries[r].meta.task_label);
        CHECK(std::stoul(cells[1]) == lib.entries[r].meta.shots);
        const VecD v = flatten_state(lib.entries[r], 1, StateKind::Ssm);
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            CHECK(static_cast<float>(std::stod(cells[3 + static_cast<std::size_t>(i)])) == static_cast<float>(v[i]));
        }
    }

    CHECK(export_states_csv(SkillLibrary(lib.model_hash), 1, StateKind::Conv, path) == 0);
    std::ifstream in2(path);
    std::size_t n = 0;
    while (std::getline(in2, line)) ++n;
    CHECK(n == 1);
    std::filesystem::remove(path);
}
