#include <doctest.h>

#include <nlohmann/json.hpp>

#include "statesoup/config.hpp"
#include "statesoup/error.hpp"
#include "statesoup/rng.hpp"

using namespace statesoup;

TEST_CASE("default config is valid and uses ceil(D/16) delta rank") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.effective_delta_rank() == 4);
    c.embed_dim = 17;
    CHECK(c.effective_delta_rank() == 2);
    c.delta_rank = 3;
    CHECK(c.effective_delta_rank() == 3);
}

TEST_CASE("zero dimensions are rejected") {
    for (int field = 0; field < 5; ++field) {
        ModelConfig c;
        std::size_t* f[] = {&c.vocab_size, &c.embed_dim, &c.state_dim, &c.num_layers, &c.conv_width};
        *f[field] = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
}

TEST_CASE("config hash is stable and sensitive to every dimension") {
    ModelConfig a;
    CHECK(config_hash(a) == config_hash(ModelConfig{}));
    CHECK(hash_hex(config_hash(a)).size() == 16);
    ModelConfig b = a;
    b.state_dim = 8;
    CHECK(config_hash(a) != config_hash(b));
    ModelConfig c = a;
    c.conv_width = 3;
    CHECK(config_hash(a) != config_hash(c));
    ModelConfig d = a;
    d.delta_rank = 4;  // same effective rank as the automatic choice
    CHECK(config_hash(a) == config_hash(d));
}

TEST_CASE("config json round trip and key checking") {
    ModelConfig c;
    c.embed_dim = 32;
    c.num_layers = 2;
    nlohmann::json j = c;
    CHECK(j.get<ModelConfig>() == c);

    nlohmann::json bad = j;
    bad["embed_dims"] = 3;
    CHECK_THROWS_AS(bad.get<ModelConfig>(), ConfigError);

    nlohmann::json dtype = j;
    dtype["dtype"] = "f16";
    CHECK_THROWS_AS(dtype.get<ModelConfig>(), ConfigError);
}

TEST_CASE("seed derivation and rng distributions") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r(11);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        const auto k = r.below(7);
        CHECK(k < 7);
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);

    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    r.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}
