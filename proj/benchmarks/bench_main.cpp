#include <benchmark/benchmark.h>

#include <filesystem>

#include "statesoup/experiments.hpp"
#include "statesoup/mixing.hpp"
#include "statesoup/model.hpp"
#include "statesoup/store.hpp"
#include "statesoup/trainer.hpp"

using namespace statesoup;

namespace {

const GatedLinearModel& default_model() {
    static const GatedLinearModel m(init_model(ModelConfig{}, 0));
    return m;
}

TokenSeq demo_tokens(std::size_t k) {
    Rng rng(1);
    return sample_demonstrations(make_task(TaskKind::Bijection, 0), k, rng, ExampleSet(64)).tokens;
}

SkillLibrary make_library(std::size_t n) {
    const auto& m = default_model();
    SkillLibrary lib(m.model_hash());
    const auto tokens = demo_tokens(8);
    for (std::size_t i = 0; i < n; ++i) {
        auto s = advance(m, m.zero_state(), tokens);
        s.layers[0].ssm(0, 0) += static_cast<float>(i);
        lib.add(std::move(s));
    }
    return lib;
}

void BM_Step(benchmark::State& st) {
    const auto& m = default_model();
    auto s = m.zero_state();
    VecD logits;
    Token t = 0;
    for (auto _ : st) {
        m.step_inplace(s, t, logits);
        t = static_cast<Token>((t + 1) % 254);
        benchmark::DoNotOptimize(logits.data());
    }
}
BENCHMARK(BM_Step);

void BM_ProcessSequence(benchmark::State& st) {
    const auto& m = default_model();
    const auto tokens = demo_tokens(static_cast<std::size_t>(st.range(0)));
    for (auto _ : st) benchmark::DoNotOptimize(advance(m, m.zero_state(), tokens));
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(tokens.size()));
}
BENCHMARK(BM_ProcessSequence)->Arg(4)->Arg(32);

void BM_TrainGradient(benchmark::State& st) {
    const auto params = init_model(ModelConfig{}, 0);
    const TrainingStreams streams(default_tasks(), CorpusSource{});
    Rng rng(2);
    std::vector<TokenSeq> batch;
    for (int i = 0; i < 32; ++i) batch.push_back(streams.icl_row(128, rng));
    ModelParams grads;
    for (auto _ : st) benchmark::DoNotOptimize(compute_gradients(params, std::span<const TokenSeq>(batch), grads));
}
BENCHMARK(BM_TrainGradient)->Unit(benchmark::kMillisecond);

void BM_Retrieve(benchmark::State& st) {
    const auto lib = make_library(static_cast<std::size_t>(st.range(0)));
    const RetrievalQuery q{lib.entries.back(), 2, StateKind::Ssm};
    for (auto _ : st) benchmark::DoNotOptimize(retrieve_nearest(lib, q));
}
BENCHMARK(BM_Retrieve)->Arg(60)->Arg(600);

void BM_MeanMix(benchmark::State& st) {
    const auto lib = make_library(8);
    for (auto _ : st) benchmark::DoNotOptimize(mean_mix(lib.entries));
}
BENCHMARK(BM_MeanMix);

void BM_LibraryRoundTrip(benchmark::State& st) {
    const auto lib = make_library(60);
    const auto path = (std::filesystem::temp_directory_path() / "statesoup_bench.ssl").string();
    for (auto _ : st) {
        save_library(lib, path);
        benchmark::DoNotOptimize(load_library(path));
    }
    std::filesystem::remove(path);
}
BENCHMARK(BM_LibraryRoundTrip)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
