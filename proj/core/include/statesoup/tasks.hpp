#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "statesoup/model.hpp"
#include "statesoup/rng.hpp"
#include "statesoup/types.hpp"

namespace statesoup {

/// Reserved separator tokens of the "<q> -> <a>\n" demonstration format.
inline constexpr Token kArrow = 254;
inline constexpr Token kNewline = 255;
inline constexpr std::size_t kTaskVocab = 256;

/// Questions are shared by every task, so a query token alone never
/// identifies the task. Answers are drawn per task from the answer pool.
inline constexpr Token kQuestionPoolBegin = 0;
inline constexpr Token kQuestionPoolEnd = 64;
inline constexpr Token kAnswerPoolBegin = 64;
inline constexpr Token kAnswerPoolEnd = 254;

enum class TaskKind {
    Bijection,       // 64 pairs
    SmallBijection,  // 48 pairs
};

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

/// A synthetic in-context task: a bijection from question tokens onto an
/// answer token set. Pair i maps questions[i] to answers[i]; pair indices
/// are the example ids used for disjointness bookkeeping.
struct TaskSpec {
    std::string task_id;
    TaskKind kind = TaskKind::Bijection;
    std::uint64_t seed = 0;
    bool randomized = false;
    std::uint64_t randomized_seed = 0;
    std::vector<Token> questions;
    std::vector<Token> answers;

    std::size_t size() const noexcept { return questions.size(); }
};

TaskSpec make_task(TaskKind kind, std::uint64_t seed);

/// Randomized-label control: same question and answer sets, answers
/// reassigned by a uniformly random permutation.
TaskSpec randomize_labels(const TaskSpec& task, std::uint64_t seed);

/// The default held-in task family: `count` bijections seeded 0..count-1.
std::vector<TaskSpec> default_tasks(std::size_t count = 6, TaskKind kind = TaskKind::Bijection);

struct Demonstration {
    TokenSeq tokens;
    std::size_t k = 0;
    std::vector<std::size_t> example_ids;
};

/// Pair-membership mask over a task's example ids.
class ExampleSet {
public:
    explicit ExampleSet(std::size_t size = 0) : used_(size, false) {}

    void insert(std::size_t id) { used_.at(id) = true; }
    void insert(std::span<const std::size_t> ids) {
        for (auto id : ids) insert(id);
    }
    bool contains(std::size_t id) const { return used_.at(id); }
    std::size_t size() const noexcept { return used_.size(); }
    std::size_t count() const;
    std::vector<std::size_t> complement() const;

private:
    std::vector<bool> used_;
};

Demonstration format_demonstration(const TaskSpec& task, std::vector<std::size_t> example_ids);

/// k distinct pairs not in `exclude`, in random order.
Demonstration sample_demonstrations(const TaskSpec& task, std::size_t k, Rng& rng, const ExampleSet& exclude);

struct IclScore {
    std::size_t correct = 0;
    std::size_t total = 0;

    double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
    IclScore& operator+=(const IclScore& o) {
        correct += o.correct;
        total += o.total;
        return *this;
    }
};

/// Feeds [q, ARROW] from `init` for test pairs outside `exclude`; correct
/// iff the argmax logit (lowest id on ties) is the mapped answer. Uses
/// min(n_samples, available) distinct pairs.
IclScore eval_icl(const LanguageModel& model, const StateSnapshot& init, const TaskSpec& task,
                  std::size_t n_samples, Rng& rng, const ExampleSet& exclude);

double eval_icl_accuracy(const LanguageModel& model, const StateSnapshot& init, const TaskSpec& task,
                         std::size_t n_samples, Rng& rng, const ExampleSet& exclude);

/// Audit dump: task_id, seed, randomized flag and the mapping table.
nlohmann::json task_to_json(const TaskSpec& task);

/// Two-sided exact binomial test p-value for `successes` out of `n` at
/// success probability `p`.
double binomial_two_sided_p(std::size_t successes, std::size_t n, double p);

}  // namespace statesoup
