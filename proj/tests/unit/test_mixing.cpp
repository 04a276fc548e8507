#include <doctest.h>

#include "statesoup/error.hpp"
#include "statesoup/mixing.hpp"
#include "support/stubs.hpp"

using namespace statesoup;
using namespace statesoup::testing;

namespace {

ModelConfig mix_config() {
    ModelConfig c;
    c.embed_dim = 8;
    c.state_dim = 3;
    c.num_layers = 2;
    c.conv_width = 3;
    return c;
}

}  // namespace

TEST_CASE("strategy names parse") {
    CHECK(parse_mix_strategy("mean") == MixStrategy::Mean);
    CHECK(parse_mix_strategy("weighted") == MixStrategy::Weighted);
    CHECK(parse_mix_strategy("adecay") == MixStrategy::ADecay);
    CHECK(to_string(MixStrategy::ADecay) == "adecay");
    CHECK_THROWS_AS(parse_mix_strategy("median"), ConfigError);
}

TEST_CASE("mean of a single state is that state bit for bit, with decay reset") {
    Rng rng(1);
    const auto s = random_snapshot(mix_config(), rng);
    const std::vector<StateSnapshot> one{s};
    const auto m = mean_mix(one);
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
        CHECK(m.layers[l].ssm == s.layers[l].ssm);
        CHECK(m.layers[l].conv == s.layers[l].conv);
        CHECK(m.layers[l].log_decay.isZero(0));
    }
    CHECK(m.meta.shots == s.meta.shots);
    CHECK(m.meta.token_count == s.meta.token_count);
}

TEST_CASE("mean of copies is idempotent") {
    Rng rng(2);
    const auto s = random_snapshot(mix_config(), rng);
    for (std::size_t n : {2u, 3u, 7u}) {
        const std::vector<StateSnapshot> copies(n, s);
        const auto m = mean_mix(copies);
        for (std::size_t l = 0; l < s.layers.size(); ++l) {
            CHECK(rel_err(m.layers[l].ssm, s.layers[l].ssm) <= 1e-7);
            CHECK(rel_err(m.layers[l].conv, s.layers[l].conv) <= 1e-7);
        }
        CHECK(m.meta.shots == n * s.meta.shots);
    }
}

TEST_CASE("mean and weighted mixes match scalar oracles") {
    Rng rng(3);
    auto a = random_snapshot(mix_config(), rng);
    auto b = random_snapshot(mix_config(), rng);
    a.meta.token_count = 10;
    b.meta.token_count = 30;
    const std::vector<StateSnapshot> ab{a, b};
    const auto m = mean_mix(ab);
    const std::vector<double> w21{2.0, 1.0};
    const auto w = weighted_mix(ab, w21);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        for (Eigen::Index i = 0; i < a.layers[l].ssm.size(); ++i) {
            const double x = a.layers[l].ssm.data()[i], y = b.layers[l].ssm.data()[i];
            CHECK(m.layers[l].ssm.data()[i] == static_cast<float>((x + y) / 2.0));
            CHECK(w.layers[l].ssm.data()[i] == doctest::Approx((2.0 * x + y) / 3.0).epsilon(1e-6));
        }
        for (Eigen::Index i = 0; i < a.layers[l].conv.size(); ++i) {
            const double x = a.layers[l].conv.data()[i], y = b.layers[l].conv.data()[i];
            CHECK(m.layers[l].conv.data()[i] == static_cast<float>((x + y) / 2.0));
        }
    }
    CHECK(m.meta.shots == a.meta.shots + b.meta.shots);
    CHECK(m.meta.token_count == 30);
}

TEST_CASE("weighted mix degenerate weights and scale invariance") {
    Rng rng(4);
    const auto a = random_snapshot(mix_config(), rng);
    const auto b = random_snapshot(mix_config(), rng);
    const std::vector<StateSnapshot> ab{a, b};
    const std::vector<double> first{1.0, 0.0};
    const auto w10 = weighted_mix(ab, first);
    const std::vector<double> equal{0.5, 0.5};
    const auto weq = weighted_mix(ab, equal);
    const auto mean = mean_mix(ab);
    const std::vector<double> w1{0.3, 1.1};
    const std::vector<double> w2{3.0, 11.0};
    const auto s1 = weighted_mix(ab, w1);
    const auto s2 = weighted_mix(ab, w2);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        CHECK(w10.layers[l].ssm == a.layers[l].ssm);
        CHECK(w10.layers[l].conv == a.layers[l].conv);
        CHECK(rel_err(weq.layers[l].ssm, mean.layers[l].ssm) <= 1e-6);
        CHECK(rel_err(s1.layers[l].ssm, s2.layers[l].ssm) <= 1e-6);
    }
}

TEST_CASE("mixing errors") {
    Rng rng(5);
    const auto a = random_snapshot(mix_config(), rng);
    auto foreign = a;
    foreign.meta.model_hash ^= 1;
    const std::vector<StateSnapshot> none;
    const std::vector<StateSnapshot> mismatch{a, foreign};
    const std::vector<StateSnapshot> ab{a, a};
    CHECK_THROWS_AS(mean_mix(none), RangeError);
    CHECK_THROWS_AS(mean_mix(mismatch), HashMismatchError);
    const std::vector<double> one{1.0};
    const std::vector<double> zero_sum{1.0, -1.0};
    const std::vector<double> nan{1.0, std::nan("")};
    CHECK_THROWS_AS(weighted_mix(ab, one), ConfigError);
    CHECK_THROWS_AS(weighted_mix(ab, zero_sum), ConfigError);
    CHECK_THROWS_AS(weighted_mix(ab, nan), ConfigError);
    CHECK_THROWS_AS(a_decay_combine(a, foreign), HashMismatchError);
    auto bad = a;
    bad.layers[0].log_decay(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(a_decay_combine(a, bad), NumericError);
}

TEST_CASE("a-decay with a zero prefix returns the suffix recurrence exactly") {
    Rng rng(6);
    const auto cfg = mix_config();
    const auto suffix = random_snapshot(cfg, rng);
    const auto r = a_decay_combine(zero_state(cfg), suffix);
    for (std::size_t l = 0; l < suffix.layers.size(); ++l) {
        CHECK(r.layers[l].ssm == suffix.layers[l].ssm);
        CHECK(r.layers[l].conv == suffix.layers[l].conv);
        CHECK(r.layers[l].log_decay.isZero(0));
    }
}

TEST_CASE("a-decay with unit decay adds the states") {
    Rng rng(7);
    const auto cfg = mix_config();
    const auto prefix = random_snapshot(cfg, rng);
    auto suffix = random_snapshot(cfg, rng);
    for (auto& l : suffix.layers) l.log_decay.setZero();
    const auto r = a_decay_combine(prefix, suffix);
    for (std::size_t l = 0; l < suffix.layers.size(); ++l) {
        const MatF sum = suffix.layers[l].ssm + prefix.layers[l].ssm;
        CHECK(r.layers[l].ssm == sum);
    }
    CHECK(r.meta.token_count == prefix.meta.token_count + suffix.meta.token_count);
}

TEST_CASE("a-decay accumulate carry chains decays") {
    Rng rng(8);
    const auto cfg = mix_config();
    const auto p = random_snapshot(cfg, rng);
    const auto s = random_snapshot(cfg, rng);
    const auto r = a_decay_combine(p, s, DecayCarry::Accumulate);
    CHECK(r.layers[1].log_decay == p.layers[1].log_decay + s.layers[1].log_decay);
}

TEST_CASE("property: single-layer a-decay is associative over chunk partitions") {
    Rng rng(9);
    ModelConfig cfg;
    cfg.vocab_size = 40;
    cfg.embed_dim = 16;
    cfg.state_dim = 4;
    cfg.num_layers = 1;
    for (int trial = 0; trial < 10; ++trial) {
        const GatedLinearModel m(init_model(cfg, 50 + trial));
        const auto c1 = random_tokens(1 + rng.below(80), 40, rng);
        const auto c2 = random_tokens(1 + rng.below(80), 40, rng);
        const auto c3 = random_tokens(1 + rng.below(80), 40, rng);
        const auto s1 = advance(m, m.zero_state(), c1, true);
        const auto s2 = advance(m, suffix_start(s1), c2, true);
        const auto s3 = advance(m, suffix_start(s2), c3, true);
        const auto left = a_decay_combine(a_decay_combine(s1, s2), s3);
        const auto right = a_decay_combine(s1, a_decay_combine(s2, s3, DecayCarry::Accumulate));
        CHECK(rel_err(left.layers[0].ssm, right.layers[0].ssm) <= 1e-4);
        const std::vector<StateSnapshot> chunks{s1, s2, s3};
        const auto chained = a_decay_chain(chunks);
        CHECK(rel_err(chained.layers[0].ssm, left.layers[0].ssm) <= 1e-4);
        const MixRecipe recipe{MixStrategy::ADecay, {}};
        CHECK(mix(chunks, recipe).layers[0].ssm == chained.layers[0].ssm);
    }
}
