#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "statesoup/corpus.hpp"
#include "statesoup/params.hpp"
#include "statesoup/tasks.hpp"

namespace statesoup {

struct TrainConfig {
    std::size_t steps = 20000;
    std::size_t batch = 32;
    std::size_t seq_len = 128;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double mixture = 0.7;  // fraction of batches drawn from ICL streams
    double clip_norm = 1.0;
    std::uint64_t seed = 0;
    /// Length of corpus-stream rows. Corpus batches hold
    /// max(1, batch * seq_len / corpus_seq_len) rows so every step sees a
    /// similar token count.
    std::size_t corpus_seq_len = 300;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Mean next-token NLL over every position of every row, plus its gradient.
/// Rows must share one length >= 2 and every token must be in vocab.
/// `grads` is resized and overwritten.
template <class Scalar>
double compute_gradients(const BasicParams<Scalar>& params, std::span<const TokenSeq> batch,
                         BasicParams<Scalar>& grads);

template <class Scalar>
struct GradientResult {
    double loss = 0.0;
    BasicParams<Scalar> gradients;
};

template <class Scalar>
GradientResult<Scalar> compute_gradients(const BasicParams<Scalar>& params, std::span<const TokenSeq> batch) {
    GradientResult<Scalar> r;
    r.loss = compute_gradients(params, batch, r.gradients);
    return r;
}

/// Loss only, through the same batched path as compute_gradients.
template <class Scalar>
double batch_loss(const BasicParams<Scalar>& params, std::span<const TokenSeq> batch);

/// Global L2 norm of a gradient set.
template <class Scalar>
double global_norm(const BasicParams<Scalar>& grads);

/// Adaptive-moment optimizer with bias correction.
class AdamOptimizer {
public:
    AdamOptimizer(const ModelParams& like, double lr, double beta1, double beta2, double eps);

    /// Applies one update in place. Gradients are not modified.
    void step(ModelParams& params, const ModelParams& grads);

    std::size_t steps_taken() const noexcept { return t_; }
    double lr() const noexcept { return lr_; }

private:
    ModelParams m_;
    ModelParams v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

struct StepMetrics {
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    bool icl_batch = false;
};

struct TrainResult {
    ModelParams params;
    std::vector<StepMetrics> log;
    double seconds = 0.0;
};

/// Produces the training rows. ICL rows are one task's demonstration of
/// distinct pairs filling the row; corpus rows come from the sequential
/// corpus source.
class TrainingStreams {
public:
    TrainingStreams(std::vector<TaskSpec> tasks, CorpusSource corpus);

    TokenSeq icl_row(std::size_t length, Rng& rng) const;
    TokenSeq corpus_row(std::size_t length, Rng& rng) const;

    const std::vector<TaskSpec>& tasks() const noexcept { return tasks_; }

private:
    std::vector<TaskSpec> tasks_;
    CorpusSource corpus_;
    std::unique_ptr<SyntheticChain> chain_;
    TokenSeq text_;
};

using StepCallback = std::function<void(const StepMetrics&)>;

/// Deterministic for fixed seeds. Throws NumericError on divergence.
TrainResult train(const ModelConfig& config, const TrainConfig& tconfig, const std::vector<TaskSpec>& tasks,
                  const CorpusSource& corpus, const StepCallback& on_step = {});

/// Continues training from given parameters (used by train()).
TrainResult train_from(ModelParams params, const TrainConfig& tconfig, const TrainingStreams& streams,
                       const StepCallback& on_step = {});

void write_metrics_jsonl(const std::vector<StepMetrics>& log, const std::string& path);

}  // namespace statesoup
