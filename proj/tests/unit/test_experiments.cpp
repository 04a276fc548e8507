#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "statesoup/error.hpp"
#include "statesoup/experiments.hpp"
#include "support/stubs.hpp"

using namespace statesoup;
using namespace statesoup::testing;

namespace {

ExperimentConfig quick_config() {
    ExperimentConfig c;
    c.n_test = 40;
    c.queries_per_cell = 5;
    c.query_shots = {1, 4, 32};
    return c;
}

ModelConfig tiny_lm() {
    ModelConfig c;
    c.embed_dim = 8;
    c.state_dim = 4;
    c.num_layers = 2;
    c.conv_width = 3;
    return c;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

}  // namespace

TEST_CASE("task split halves are disjoint and cover the task") {
    const auto t = make_task(TaskKind::Bijection, 2);
    const auto s = split_task(t, 9);
    CHECK(s.library.count() == 32);
    CHECK(s.query.count() == 32);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(s.library.contains(i) != s.query.contains(i));
    const auto again = split_task(t, 9);
    CHECK(again.library.complement() == s.library.complement());
}

TEST_CASE("library build: counts, labels and bit-identical rebuild") {
    const auto tasks = default_tasks();
    const GatedLinearModel model(init_model(tiny_lm(), 1));
    const auto cfg = quick_config();
    const auto lib = build_library(model, tasks, cfg);
    REQUIRE(lib.size() == 60);
    CHECK(lib.model_hash == model.model_hash());
    for (std::size_t i = 0; i < lib.size(); ++i) {
        CHECK(lib.entries[i].meta.shots == 32);
        CHECK(lib.entries[i].meta.token_count == 128);
        CHECK(lib.entries[i].meta.task_label == tasks[i / 10].task_id);
    }
    const auto again = build_library(model, tasks, cfg);
    for (std::size_t i = 0; i < lib.size(); ++i) CHECK(bit_equal(lib.entries[i], again.entries[i]));
    CHECK_FALSE(bit_equal(lib.entries[0], lib.entries[1]));
}

TEST_CASE("small bijections cannot fill a 32-shot library half") {
    ExperimentConfig cfg = quick_config();
    cfg.task_kind = TaskKind::SmallBijection;
    const OracleModel oracle(cfg.tasks().front());
    CHECK_THROWS_WITH_AS(build_library(oracle, cfg.tasks(), cfg), doctest::Contains("insufficient examples"),
                         RangeError);
    cfg.query_shots = {48};
    CHECK_THROWS_AS(run_icl_eval(oracle, cfg.tasks(), cfg), RangeError);
}

TEST_CASE("ICL eval rows: oracle solves every cell, controls have one row per k") {
    const std::vector<TaskSpec> tasks{make_task(TaskKind::Bijection, 1)};
    const OracleModel oracle(tasks.front());
    const auto cfg = quick_config();
    const auto rows = run_icl_eval(oracle, tasks, cfg);
    REQUIRE(rows.size() == tasks.size() * cfg.query_shots.size() * 2);
    for (const auto& r : rows) {
        CHECK(r.n_test == cfg.n_test);
        CHECK(r.chance == doctest::Approx(1.0 / 64.0));
        if (!r.randomized) CHECK(r.accuracy == 1.0);
    }
    CHECK(run_icl_eval(oracle, tasks, cfg, false).size() == tasks.size() * cfg.query_shots.size());
}

TEST_CASE("retrieval with uninformative states sits at chance") {
    const auto tasks = default_tasks();
    const RandomLogitsModel random(3);
    auto cfg = quick_config();
    cfg.query_shots = {1, 2, 4, 8, 16, 32};
    cfg.queries_per_cell = 10;
    cfg.layer = 0;
    const auto lib = build_library(random, tasks, cfg);
    const auto rows = run_retrieval_experiment(random, lib, tasks, cfg);
    REQUIRE(rows.size() == 36);
    std::size_t same = 0, shuffled = 0, total = 0;
    for (const auto& r : rows) {
        same += static_cast<std::size_t>(r.same_task_rate * static_cast<double>(r.queries) + 0.5);
        shuffled += static_cast<std::size_t>(r.shuffled_label_rate * static_cast<double>(r.queries) + 0.5);
        total += r.queries;
    }
    CHECK(binomial_two_sided_p(same, total, 1.0 / 6.0) > 0.01);
    CHECK(binomial_two_sided_p(shuffled, total, 1.0 / 6.0) > 0.01);
    CHECK(macro_average(rows).size() == 6);
}

TEST_CASE("a single 32-shot soup is the baseline") {
    const auto tasks = default_tasks(2);
    const GatedLinearModel model(init_model(tiny_lm(), 2));
    auto cfg = quick_config();
    cfg.query_shots = {32};
    for (auto strategy : {MixStrategy::Mean, MixStrategy::Weighted, MixStrategy::ADecay}) {
        for (const auto& r : run_mixing_experiment(model, tasks, cfg, strategy)) {
            CHECK(r.states == 1);
            CHECK(r.n_test == cfg.n_test);
            CHECK(r.soup_accuracy == r.baseline_accuracy);
        }
    }
    cfg.query_shots = {3};
    CHECK_THROWS_AS(run_mixing_experiment(model, tasks, cfg), ConfigError);
}

TEST_CASE("retrieve-and-mix rows") {
    const std::vector<TaskSpec> tasks{make_task(TaskKind::Bijection, 1)};
    const OracleModel oracle(tasks.front());
    auto cfg = quick_config();
    const auto lib = build_library(oracle, tasks, cfg);
    const auto rows = run_retrieve_and_mix_experiment(oracle, lib, tasks, cfg);
    REQUIRE(rows.size() == tasks.size() * cfg.query_shots.size() * 2);
    CHECK(rows[0].condition == "query_only");
    CHECK(rows[1].condition == "query_plus_retrieved");
    for (const auto& r : rows) {
        CHECK(r.accuracy == 1.0);
        CHECK(r.n_test == cfg.n_test);
    }
    cfg.randomized_partner = true;
    for (const auto& r : run_retrieve_and_mix_experiment(oracle, lib, tasks, cfg)) {
        CHECK(r.retrieved_same_task_rate == 0.0);
    }
}

TEST_CASE("sequential experiment: single-layer a-decay reproduces sequential processing") {
    ModelConfig c = tiny_lm();
    c.num_layers = 1;
    const GatedLinearModel model(init_model(c, 4));
    CorpusSource src;
    src.seed = 1;
    const auto corpus = make_sequential_corpus(src, 8, 40);
    const auto r = run_sequential_mixing_experiment(model, corpus);
    REQUIRE(r.rows.size() == 4);
    CHECK(to_string(r.rows[0].condition) == "sequential");
    CHECK(to_string(r.rows[3].condition) == "a_decay");
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(std::abs(r.losses[3][i] - r.losses[0][i]) <= 1e-4 * std::abs(r.losses[0][i]));
    }
    for (const auto& row : r.rows) CHECK(row.n == 8);
    CHECK_THROWS_AS(run_sequential_mixing_experiment(model, {}), RangeError);
}

TEST_CASE("paired standard error") {
    const std::vector<double> a{1, 2, 3, 4};
    const std::vector<double> b{0, 0, 0, 0};
    // Differences 1..4: sample sd sqrt(5/3), n = 4.
    CHECK(paired_stderr(a, b) == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(paired_stderr(a, a) == 0.0);
    CHECK_THROWS_AS(paired_stderr(a, {1.0}), ShapeError);
}

TEST_CASE("CSV outputs carry macro averages and a metadata sidecar") {
    const auto tasks = default_tasks(2);
    const OracleModel oracle(tasks.front());
    auto cfg = quick_config();
    const auto dir = std::filesystem::temp_directory_path() / "statesoup_test_csv";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "mixing.csv").string();
    const auto rows = run_mixing_experiment(oracle, tasks, cfg);
    write_mixing_csv(rows, output_metadata(oracle, cfg), path);
    const auto lines = read_lines(path);
    REQUIRE(lines.size() == 1 + rows.size() + cfg.query_shots.size());
    CHECK(lines.back().rfind("macro_avg,", 0) == 0);
    std::ifstream meta_in(path + ".meta.json");
    const auto meta = nlohmann::json::parse(meta_in);
    CHECK(meta.at("model_hash").get<std::string>() == hash_hex(oracle.model_hash()));
    std::filesystem::remove_all(dir);
}

TEST_CASE("experiment config JSON and validation") {
    ExperimentConfig c;
    c.query_shots = {2, 8};
    c.corpus.kind = CorpusKind::TextFile;
    c.corpus.path = "x.txt";
    const nlohmann::json j = c;
    const auto back = j.get<ExperimentConfig>();
    CHECK(back.query_shots == c.query_shots);
    CHECK(back.corpus.kind == CorpusKind::TextFile);
    CHECK(back.corpus.path == "x.txt");
    nlohmann::json bad = j;
    bad["shots"] = 3;
    CHECK_THROWS_AS(bad.get<ExperimentConfig>(), ConfigError);
    c.query_shots = {};
    CHECK_THROWS_AS(c.validate(), ConfigError);

    ExperimentConfig d;
    ModelConfig m;
    CHECK(d.retrieval_layer(m) == 2);
    m.num_layers = 1;
    CHECK(d.retrieval_layer(m) == 0);
    d.layer = 3;
    CHECK_THROWS_AS(d.retrieval_layer(m), RangeError);
}
