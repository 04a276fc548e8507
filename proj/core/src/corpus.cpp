#include "statesoup/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "statesoup/error.hpp"

namespace statesoup {

namespace {

constexpr double kActiveWeights[SyntheticChain::kActivePerClass] = {12.0, 6.0, 4.0, 3.0};
// Next-class logits are prev1 and prev2 terms added together, each with this scale.
constexpr double kTransitionScale = 2.0;

std::size_t sample_cdf(const std::vector<double>& cdf, Rng& rng) {
    const double u = rng.uniform() * cdf.back();
    return static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
}

}  // namespace

SyntheticChain::SyntheticChain(std::uint64_t family_seed) {
    Rng rng(derive_seed(family_seed, 0x636861696eULL));
    std::vector<Token> symbols(kSymbols);
    std::iota(symbols.begin(), symbols.end(), Token{0});
    rng.shuffle(symbols);

    pools_.resize(kClasses);
    token_class_.assign(kSymbols, 0);
    for (std::size_t i = 0; i < kSymbols; ++i) {
        pools_[i % kClasses].push_back(symbols[i]);
        token_class_[symbols[i]] = i % kClasses;
    }

    std::vector<double> from_prev1(kClasses * kClasses);
    std::vector<double> from_prev2(kClasses * kClasses);
    for (auto& v : from_prev1) v = kTransitionScale * rng.normal();
    for (auto& v : from_prev2) v = kTransitionScale * rng.normal();
    transition_cdf_.resize(kClasses * kClasses);
    for (std::size_t p2 = 0; p2 < kClasses; ++p2) {
        for (std::size_t p1 = 0; p1 < kClasses; ++p1) {
            std::vector<double> w(kClasses);
            for (std::size_t c = 0; c < kClasses; ++c)
                w[c] = std::exp(from_prev1[p1 * kClasses + c] + from_prev2[p2 * kClasses + c]);
            auto& cdf = transition_cdf_[p2 * kClasses + p1];
            cdf.resize(kClasses);
            std::partial_sum(w.begin(), w.end(), cdf.begin());
        }
    }
}

TokenSeq SyntheticChain::sample(std::size_t length, Rng& rng) const {
    std::vector<std::vector<Token>> active(kClasses);
    std::vector<double> active_cdf(kActivePerClass);
    std::partial_sum(std::begin(kActiveWeights), std::end(kActiveWeights), active_cdf.begin());
    for (std::size_t c = 0; c < kClasses; ++c) {
        std::vector<Token> pool = pools_[c];
        rng.shuffle(pool);
        active[c].assign(pool.begin(), pool.begin() + kActivePerClass);
    }

    TokenSeq out;
    out.reserve(length);
    std::size_t prev2 = rng.below(kClasses);
    std::size_t prev1 = rng.below(kClasses);
    for (std::size_t i = 0; i < length; ++i) {
        const std::size_t cls = sample_cdf(transition_cdf_[prev2 * kClasses + prev1], rng);
        out.push_back(active[cls][sample_cdf(active_cdf, rng)]);
        prev2 = prev1;
        prev1 = cls;
    }
    return out;
}

TokenSeq read_text_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read text corpus " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    TokenSeq out(bytes.size());
    std::transform(bytes.begin(), bytes.end(), out.begin(),
                   [](char c) { return static_cast<Token>(static_cast<unsigned char>(c)); });
    return out;
}

std::vector<ChunkTriple> make_sequential_corpus(const CorpusSource& source, std::size_t n_sequences,
                                                std::size_t chunk_len) {
    if (chunk_len == 0) throw RangeError("chunk_len must be >= 1");
    const std::size_t span = 3 * chunk_len;
    std::vector<ChunkTriple> out;
    out.reserve(n_sequences);

    auto split = [&](TokenSeq::const_iterator it) {
        ChunkTriple t;
        t.c1.assign(it, it + static_cast<std::ptrdiff_t>(chunk_len));
        t.c2.assign(it + static_cast<std::ptrdiff_t>(chunk_len), it + static_cast<std::ptrdiff_t>(2 * chunk_len));
        t.test.assign(it + static_cast<std::ptrdiff_t>(2 * chunk_len), it + static_cast<std::ptrdiff_t>(span));
        return t;
    };

    if (source.kind == CorpusKind::Synthetic) {
        SyntheticChain chain(source.family_seed);
        for (std::size_t i = 0; i < n_sequences; ++i) {
            Rng rng(derive_seed(source.seed, 0x73657173ULL, i));
            const TokenSeq seq = chain.sample(span, rng);
            out.push_back(split(seq.begin()));
        }
        return out;
    }

    const TokenSeq bytes = read_text_bytes(source.path);
    if (bytes.size() < span) {
        throw RangeError("text corpus " + source.path + " has " + std::to_string(bytes.size()) +
                         " bytes, needs at least " + std::to_string(span));
    }
    // Consecutive windows first; seeded random windows once the file is used up.
    const std::size_t consecutive = bytes.size() / span;
    Rng rng(derive_seed(source.seed, 0x74657874ULL));
    for (std::size_t i = 0; i < n_sequences; ++i) {
        const std::size_t offset = i < consecutive ? i * span : rng.below(bytes.size() - span + 1);
        out.push_back(split(bytes.begin() + static_cast<std::ptrdiff_t>(offset)));
    }
    return out;
}

TokenSeq concat(const ChunkTriple& t) {
    TokenSeq s;
    s.reserve(t.c1.size() + t.c2.size() + t.test.size());
    s.insert(s.end(), t.c1.begin(), t.c1.end());
    s.insert(s.end(), t.c2.begin(), t.c2.end());
    s.insert(s.end(), t.test.begin(), t.test.end());
    return s;
}

}  // namespace statesoup
