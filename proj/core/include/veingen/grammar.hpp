#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace veingen {

struct GrammarError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One stochastic production. Symbols are single printable characters.
struct Rule {
    char head = 0;
    std::string body;
    double probability = 1.0;
};

// Stochastic context-free rewriting system. A symbol is a variable exactly
// when it appears as the head of at least one rule; all other alphabet
// symbols are constants and are copied verbatim during expansion.
struct Grammar {
    std::string alphabet;
    std::string axiom;
    std::vector<Rule> rules;

    bool is_variable(char c) const;
};

// Throws GrammarError unless: alphabet symbols are distinct, the axiom and
// all rule bodies draw only from the alphabet, every rule head is in the
// alphabet, and each head's probabilities are in [0, 1] and sum to 1 within
// 1e-9.
void validate(const Grammar& g);

struct ExpandStats {
    std::uint64_t draws = 0;   // one per variable occurrence rewritten
    std::size_t length = 0;
};

// Runs `iterations` parallel rewriting passes from the axiom. Every variable
// occurrence is rewritten each pass using one uniform draw from a
// splitmix64 stream seeded with `seed`, scanning left to right. Throws
// GrammarError if an intermediate string would exceed max_length.
std::string expand(const Grammar& g, int iterations, std::uint64_t seed,
                   std::size_t max_length = 10'000'000,
                   ExpandStats* stats = nullptr);

// Plain-text grammar description:
//   # comment
//   alphabet: a b F + - [ ]
//   axiom: a
//   rule: a -> a b 1.0        (trailing probability optional, default 1)
// Body symbols may be written spaced or contiguous. Validation included.
Grammar parse_grammar(const std::string& text);
Grammar load_grammar(const std::filesystem::path& path);

} // namespace veingen
