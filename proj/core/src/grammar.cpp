#include "veingen/grammar.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "veingen/rng.hpp"

namespace veingen {

bool Grammar::is_variable(char c) const {
    return std::any_of(rules.begin(), rules.end(),
                       [c](const Rule& r) { return r.head == c; });
}

void validate(const Grammar& g) {
    if (g.alphabet.empty()) throw GrammarError("alphabet is empty");
    std::array<bool, 256> in_alpha{};
    for (char c : g.alphabet) {
        auto& seen = in_alpha[static_cast<unsigned char>(c)];
        if (seen)
            throw GrammarError(std::string("duplicate alphabet symbol '") + c +
                               "'");
        seen = true;
    }
    if (g.axiom.empty()) throw GrammarError("axiom is empty");
    auto check_symbols = [&](const std::string& s, const char* what) {
        for (char c : s)
            if (!in_alpha[static_cast<unsigned char>(c)])
                throw GrammarError(std::string(what) + " uses symbol '" + c +
                                   "' not in alphabet");
    };
    check_symbols(g.axiom, "axiom");

    std::map<char, double> prob_sum;
    for (const Rule& r : g.rules) {
        if (!in_alpha[static_cast<unsigned char>(r.head)])
            throw GrammarError(std::string("rule head '") + r.head +
                               "' not in alphabet");
        if (r.body.empty())
            throw GrammarError(std::string("rule for '") + r.head +
                               "' has empty body");
        check_symbols(r.body, "rule body");
        if (!(r.probability >= 0.0 && r.probability <= 1.0))
            throw GrammarError(std::string("rule for '") + r.head +
                               "' has probability outside [0, 1]");
        prob_sum[r.head] += r.probability;
    }
    for (const auto& [head, sum] : prob_sum)
        if (std::abs(sum - 1.0) > 1e-9)
            throw GrammarError(std::string("probabilities for '") + head +
                               "' sum to " + std::to_string(sum) +
                               ", expected 1");
}

std::string expand(const Grammar& g, int iterations, std::uint64_t seed,
                   std::size_t max_length, ExpandStats* stats) {
    if (iterations < 0) throw GrammarError("iteration count must be >= 0");

    // Cumulative-probability rule table per head symbol.
    struct Choice {
        double cum;
        const std::string* body;
    };
    std::array<std::vector<Choice>, 256> table;
    for (const Rule& r : g.rules) {
        auto& choices = table[static_cast<unsigned char>(r.head)];
        const double base = choices.empty() ? 0.0 : choices.back().cum;
        choices.push_back({base + r.probability, &r.body});
    }

    Rng rng(seed);
    std::uint64_t draws = 0;
    std::string cur = g.axiom;
    for (int it = 0; it < iterations; ++it) {
        std::string next;
        next.reserve(cur.size() * 2);
        for (char c : cur) {
            const auto& choices = table[static_cast<unsigned char>(c)];
            if (choices.empty()) {
                next.push_back(c);
                continue;
            }
            const double u = rng.next_double() * choices.back().cum;
            ++draws;
            const std::string* body = choices.back().body;
            for (const Choice& ch : choices)
                if (u < ch.cum) {
                    body = ch.body;
                    break;
                }
            next.append(*body);
            if (next.size() > max_length)
                throw GrammarError("expansion exceeded " +
                                   std::to_string(max_length) +
                                   " symbols at iteration " +
                                   std::to_string(it + 1));
        }
        cur = std::move(next);
    }
    if (stats) {
        stats->draws = draws;
        stats->length = cur.size();
    }
    return cur;
}

namespace {

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string collect_symbols(const std::string& s) {
    std::string out;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    return out;
}

} // namespace

Grammar parse_grammar(const std::string& text) {
    Grammar g;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool saw_alphabet = false, saw_axiom = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = strip(line);
        if (line.empty()) continue;
        const auto err = [lineno](const std::string& msg) {
            return GrammarError("line " + std::to_string(lineno) + ": " + msg);
        };
        const auto colon = line.find(':');
        if (colon == std::string::npos) throw err("expected 'key: value'");
        const std::string key = strip(line.substr(0, colon));
        const std::string value = strip(line.substr(colon + 1));
        if (key == "alphabet") {
            if (saw_alphabet) throw err("duplicate alphabet line");
            g.alphabet = collect_symbols(value);
            saw_alphabet = true;
        } else if (key == "axiom") {
            if (saw_axiom) throw err("duplicate axiom line");
            g.axiom = collect_symbols(value);
            saw_axiom = true;
        } else if (key == "rule") {
            const auto arrow = value.find("->");
            if (arrow == std::string::npos) throw err("rule missing '->'");
            const std::string head = collect_symbols(value.substr(0, arrow));
            if (head.size() != 1)
                throw err("rule head must be a single symbol");
            std::string rhs = strip(value.substr(arrow + 2));
            if (rhs.empty()) throw err("rule missing body");
            double prob = 1.0;
            const auto last_space = rhs.find_last_of(" \t");
            if (last_space != std::string::npos) {
                const std::string tail = rhs.substr(last_space + 1);
                char* end = nullptr;
                const double parsed = std::strtod(tail.c_str(), &end);
                if (end && *end == '\0' && end != tail.c_str()) {
                    prob = parsed;
                    rhs = strip(rhs.substr(0, last_space));
                }
            }
            const std::string body = collect_symbols(rhs);
            if (body.empty()) throw err("rule missing body");
            g.rules.push_back({head[0], body, prob});
        } else {
            throw err("unknown key '" + key + "'");
        }
    }
    if (!saw_alphabet) throw GrammarError("missing alphabet line");
    if (!saw_axiom) throw GrammarError("missing axiom line");
    validate(g);
    return g;
}

Grammar load_grammar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw GrammarError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_grammar(ss.str());
}

} // namespace veingen
