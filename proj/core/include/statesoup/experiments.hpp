#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "statesoup/corpus.hpp"
#include "statesoup/mixing.hpp"
#include "statesoup/model.hpp"
#include "statesoup/store.hpp"
#include "statesoup/tasks.hpp"

namespace statesoup {

inline constexpr std::size_t kDefaultLayer = std::numeric_limits<std::size_t>::max();

struct ExperimentConfig {
    std::string model_path;
    std::vector<std::uint64_t> task_seeds{0, 1, 2, 3, 4, 5};
    TaskKind task_kind = TaskKind::Bijection;
    std::size_t states_per_task = 10;
    std::size_t library_shots = 32;
    std::vector<std::size_t> query_shots{1, 2, 4, 8, 16, 32};
    std::size_t queries_per_cell = 10;  // retrieval queries per (task, k)
    std::size_t n_test = 500;           // clipped to what a task can supply
    std::size_t chunk_len = 100;
    std::size_t n_sequences = 1000;
    std::uint64_t seed = 0;
    CorpusSource corpus;
    std::string out_dir = ".";
    std::size_t layer = kDefaultLayer;  // kDefaultLayer selects ceil(L / 2)
    StateKind state_kind = StateKind::Ssm;
    /// Retrieve-and-mix control: mix with a state of the task's
    /// randomized-label variant instead of the retrieved entry.
    bool randomized_partner = false;

    std::size_t retrieval_layer(const ModelConfig& model) const;
    std::vector<TaskSpec> tasks() const;

    /// Throws ConfigError on empty schedules or zero counts.
    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Seeded half split of a task's pairs. The library half feeds library
/// states, the query half feeds retrieval queries and test queries.
struct TaskSplit {
    ExampleSet library;
    ExampleSet query;
};

TaskSplit split_task(const TaskSpec& task, std::uint64_t seed);

/// states_per_task snapshots per task, each from a fresh random ordering of
/// library_shots pairs of the library half, labeled with task_id and shots.
/// Throws RangeError when the library half is smaller than library_shots.
SkillLibrary build_library(const LanguageModel& model, const std::vector<TaskSpec>& tasks,
                           const ExperimentConfig& cfg);

struct IclEvalRow {
    std::string task_id;
    bool randomized = false;
    std::size_t k = 0;
    std::size_t n_test = 0;
    double accuracy = 0.0;
    double chance = 0.0;   // 1 / answer-set size
    double p_value = 1.0;  // two-sided exact binomial test against chance
};

/// Held-out k-shot accuracy per task and k. Each round processes a fresh
/// k-shot demonstration and scores test pairs outside it until n_test
/// queries are scored. With `randomized_controls`, every task also gets a
/// row per k from n_test independent trials, each with its own
/// randomized-label variant and one held-out query.
std::vector<IclEvalRow> run_icl_eval(const LanguageModel& model, const std::vector<TaskSpec>& tasks,
                                     const ExperimentConfig& cfg, bool randomized_controls = true);

void write_icl_csv(const std::vector<IclEvalRow>& rows, const nlohmann::json& meta, const std::string& path);

struct RetrievalRow {
    std::string task_id;
    std::size_t k = 0;
    std::size_t queries = 0;
    double same_task_rate = 0.0;
    double shuffled_label_rate = 0.0;  // same query, library labels permuted
    double mean_similarity = 0.0;
};

/// One row per (task, k) in schedule order.
std::vector<RetrievalRow> run_retrieval_experiment(const LanguageModel& model, const SkillLibrary& lib,
                                                   const std::vector<TaskSpec>& tasks, const ExperimentConfig& cfg);

struct MixingRow {
    std::string task_id;
    std::size_t k = 0;
    std::size_t states = 0;  // 32 / k
    std::size_t n_test = 0;
    double baseline_accuracy = 0.0;  // one k-shot state
    double soup_accuracy = 0.0;      // mean of 32 / k disjoint k-shot states
};

/// Every k must divide library_shots. Baseline and soup are scored on the
/// same test queries. The soup combines the k-shot states with `strategy`:
/// mean, equal weights, or a-decay over the states in order.
std::vector<MixingRow> run_mixing_experiment(const LanguageModel& model, const std::vector<TaskSpec>& tasks,
                                             const ExperimentConfig& cfg,
                                             MixStrategy strategy = MixStrategy::Mean);

struct RetrieveMixRow {
    std::string task_id;
    std::size_t k = 0;
    std::string condition;  // "query_only" or "query_plus_retrieved"
    std::size_t n_test = 0;
    double accuracy = 0.0;
    double retrieved_same_task_rate = 0.0;
};

std::vector<RetrieveMixRow> run_retrieve_and_mix_experiment(const LanguageModel& model, const SkillLibrary& lib,
                                                            const std::vector<TaskSpec>& tasks,
                                                            const ExperimentConfig& cfg);

enum class SeqCondition { Sequential, SecondOnly, MeanMix, ADecay };

std::string to_string(SeqCondition c);

struct SequentialRow {
    SeqCondition condition = SeqCondition::Sequential;
    std::size_t n = 0;
    double mean_nll = 0.0;
    double stderr_nll = 0.0;
};

struct SequentialResult {
    std::vector<SequentialRow> rows;          // fixed condition order
    std::vector<std::vector<double>> losses;  // per condition, per triple
};

/// Per triple: s1 from zero over c1; the c2 state is processed once from
/// suffix_start(s1) with a fresh decay accumulator. Conditions: c1 then
/// c2 in sequence, c2 state alone, mean of (s1, c2 state), and
/// a_decay_combine(s1, c2 state). Loss is the mean NLL of c_test[1..]
/// given the condition state and the preceding c_test tokens.
SequentialResult run_sequential_mixing_experiment(const LanguageModel& model,
                                                  const std::vector<ChunkTriple>& corpus);

/// Standard error of the mean of a - b over paired samples.
double paired_stderr(const std::vector<double>& a, const std::vector<double>& b);

/// Metadata block shared by every output: config hash, task seeds, schedule.
nlohmann::json output_metadata(const LanguageModel& model, const ExperimentConfig& cfg);

/// CSV writers. Metadata goes to a "<path>.meta.json" sidecar; macro
/// averages over tasks follow the per-task rows with task_id "macro_avg".
/// Both files are replaced atomically.
void write_retrieval_csv(const std::vector<RetrievalRow>& rows, const nlohmann::json& meta, const std::string& path);
void write_mixing_csv(const std::vector<MixingRow>& rows, const nlohmann::json& meta, const std::string& path);
void write_retrieve_mix_csv(const std::vector<RetrieveMixRow>& rows, const nlohmann::json& meta,
                            const std::string& path);
void write_sequential_csv(const SequentialResult& result, const nlohmann::json& meta, const std::string& path);

/// Macro averages over tasks, one entry per k in first-seen order.
std::vector<RetrievalRow> macro_average(const std::vector<RetrievalRow>& rows);
std::vector<MixingRow> macro_average(const std::vector<MixingRow>& rows);
std::vector<RetrieveMixRow> macro_average(const std::vector<RetrieveMixRow>& rows);

}  // namespace statesoup
