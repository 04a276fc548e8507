#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "statesoup/rng.hpp"
#include "statesoup/types.hpp"

namespace statesoup {

enum class CorpusKind { Synthetic, TextFile };

struct CorpusSource {
    CorpusKind kind = CorpusKind::Synthetic;
    std::uint64_t seed = 0;         // sequence sampling seed
    std::uint64_t family_seed = 0;  // fixed structure of the synthetic chain
    std::string path;               // text-file source
};

struct ChunkTriple {
    TokenSeq c1;
    TokenSeq c2;
    TokenSeq test;
};

/// Synthetic sequences from a seeded order-2 chain.
///
/// The 254 non-separator tokens are split into classes. A fixed order-2
/// chain over classes, with additive prev1 and prev2 effects on the
/// next-class logits, gives local structure. Each sequence draws its own
/// small active subset of tokens per class with skewed weights, so earlier
/// context carries evidence about which tokens later positions emit.
class SyntheticChain {
public:
    static constexpr std::size_t kClasses = 8;
    static constexpr std::size_t kActivePerClass = 4;
    static constexpr std::size_t kSymbols = 254;

    explicit SyntheticChain(std::uint64_t family_seed = 0);

    TokenSeq sample(std::size_t length, Rng& rng) const;

    std::size_t class_of(Token t) const { return token_class_.at(t); }

private:
    std::vector<std::vector<Token>> pools_;
    std::vector<std::size_t> token_class_;
    // Cumulative next-class distributions indexed by (prev2 * kClasses + prev1).
    std::vector<std::vector<double>> transition_cdf_;
};

/// Raw bytes of a file. Throws IoError if unreadable.
TokenSeq read_text_bytes(const std::string& path);

/// n_sequences triples of exactly chunk_len tokens each.
std::vector<ChunkTriple> make_sequential_corpus(const CorpusSource& source, std::size_t n_sequences,
                                                std::size_t chunk_len);

TokenSeq concat(const ChunkTriple& t);

}  // namespace statesoup
