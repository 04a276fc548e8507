#include "statesoup/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "statesoup/error.hpp"

namespace statesoup {

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::Bijection: return "bijection";
        case TaskKind::SmallBijection: return "small-bijection";
    }
    return "unknown";
}

TaskKind task_kind_from_string(const std::string& s) {
    if (s == "bijection") return TaskKind::Bijection;
    if (s == "small-bijection") return TaskKind::SmallBijection;
    throw ConfigError("unknown task kind '" + s + "'");
}

namespace {

std::size_t pairs_for(TaskKind kind) { return kind == TaskKind::Bijection ? 64 : 48; }

}  // namespace

TaskSpec make_task(TaskKind kind, std::uint64_t seed) {
    TaskSpec t;
    t.kind = kind;
    t.seed = seed;
    t.task_id = to_string(kind) + "-s" + std::to_string(seed);
    const std::size_t n = pairs_for(kind);
    t.questions.resize(n);
    std::iota(t.questions.begin(), t.questions.end(), kQuestionPoolBegin);

    std::vector<Token> pool(kAnswerPoolEnd - kAnswerPoolBegin);
    std::iota(pool.begin(), pool.end(), kAnswerPoolBegin);
    Rng rng(derive_seed(seed, 0x7461736bULL, static_cast<std::uint64_t>(kind)));
    rng.shuffle(pool);
    t.answers.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
    return t;
}

TaskSpec randomize_labels(const TaskSpec& task, std::uint64_t seed) {
    TaskSpec r = task;
    r.randomized = true;
    r.randomized_seed = seed;
    r.task_id = task.task_id + "-rand" + std::to_string(seed);
    Rng rng(derive_seed(task.seed, 0x72616e64ULL, seed));
    rng.shuffle(r.answers);
    return r;
}

std::vector<TaskSpec> default_tasks(std::size_t count, TaskKind kind) {
    std::vector<TaskSpec> tasks;
    tasks.reserve(count);
    for (std::size_t i = 0; i < count; ++i) tasks.push_back(make_task(kind, i));
    return tasks;
}

std::size_t ExampleSet::count() const { return static_cast<std::size_t>(std::count(used_.begin(), used_.end(), true)); }

std::vector<std::size_t> ExampleSet::complement() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < used_.size(); ++i)
        if (!used_[i]) out.push_back(i);
    return out;
}

Demonstration format_demonstration(const TaskSpec& task, std::vector<std::size_t> example_ids) {
    Demonstration d;
    d.k = example_ids.size();
    d.tokens.reserve(4 * d.k);
    for (auto id : example_ids) {
        d.tokens.push_back(task.questions.at(id));
        d.tokens.push_back(kArrow);
        d.tokens.push_back(task.answers.at(id));
        d.tokens.push_back(kNewline);
    }
    d.example_ids = std::move(example_ids);
    return d;
}

Demonstration sample_demonstrations(const TaskSpec& task, std::size_t k, Rng& rng, const ExampleSet& exclude) {
    if (exclude.size() != task.size()) throw ShapeError("exclude set does not match task " + task.task_id);
    std::vector<std::size_t> avail = exclude.complement();
    if (k > avail.size()) {
        throw RangeError("task " + task.task_id + " has " + std::to_string(avail.size()) +
                         " examples available, " + std::to_string(k) + " requested");
    }
    rng.shuffle(avail);
    avail.resize(k);
    return format_demonstration(task, std::move(avail));
}

IclScore eval_icl(const LanguageModel& model, const StateSnapshot& init, const TaskSpec& task,
                  std::size_t n_samples, Rng& rng, const ExampleSet& exclude) {
    if (n_samples == 0) throw RangeError("eval_icl needs n_samples >= 1");
    if (exclude.size() != task.size()) throw ShapeError("exclude set does not match task " + task.task_id);
    check_snapshot(init, model.config());
    std::vector<std::size_t> avail = exclude.complement();
    if (avail.empty()) throw RangeError("exclusion exhausts task " + task.task_id);
    rng.shuffle(avail);
    avail.resize(std::min(n_samples, avail.size()));

    IclScore score;
    VecD logits;
    for (auto id : avail) {
        StateSnapshot s = init;
        model.step_inplace(s, task.questions[id], logits);
        model.step_inplace(s, kArrow, logits);
        score.correct += argmax_token(logits) == task.answers[id] ? 1 : 0;
        ++score.total;
    }
    return score;
}

double eval_icl_accuracy(const LanguageModel& model, const StateSnapshot& init, const TaskSpec& task,
                         std::size_t n_samples, Rng& rng, const ExampleSet& exclude) {
    return eval_icl(model, init, task, n_samples, rng, exclude).accuracy();
}

nlohmann::json task_to_json(const TaskSpec& task) {
    nlohmann::json mapping = nlohmann::json::array();
    for (std::size_t i = 0; i < task.size(); ++i) mapping.push_back({task.questions[i], task.answers[i]});
    return {{"task_id", task.task_id},     {"kind", to_string(task.kind)},
            {"seed", task.seed},           {"randomized", task.randomized},
            {"randomized_seed", task.randomized_seed}, {"mapping", mapping}};
}

double binomial_two_sided_p(std::size_t successes, std::size_t n, double p) {
    if (p <= 0.0 || p >= 1.0) throw RangeError("binomial probability must lie in (0, 1)");
    auto log_pmf = [&](std::size_t k) {
        const double kk = static_cast<double>(k);
        const double nn = static_cast<double>(n);
        return std::lgamma(nn + 1) - std::lgamma(kk + 1) - std::lgamma(nn - kk + 1) + kk * std::log(p) +
               (nn - kk) * std::log1p(-p);
    };
    const double observed = log_pmf(successes);
    double total = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        const double lp = log_pmf(k);
        if (lp <= observed + 1e-7) total += std::exp(lp);
    }
    return std::min(1.0, total);
}

}  // namespace statesoup
