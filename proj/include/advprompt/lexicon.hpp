#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "advprompt/common.hpp"
#include "advprompt/errors.hpp"
#include "advprompt/rng.hpp"

namespace advprompt {

enum class PosTag { Noun, Verb, Prep, Adj, Adv, Other };

inline const char* to_string(PosTag t) {
    switch (t) {
        case PosTag::Noun: return "NOUN";
        case PosTag::Verb: return "VERB";
        case PosTag::Prep: return "PREP";
        case PosTag::Adj: return "ADJ";
        case PosTag::Adv: return "ADV";
        case PosTag::Other: return "OTHER";
    }
    return "OTHER";
}

inline PosTag parse_pos_tag(const std::string& s) {
    if (s == "NOUN") return PosTag::Noun;
    if (s == "VERB") return PosTag::Verb;
    if (s == "PREP") return PosTag::Prep;
    if (s == "ADJ") return PosTag::Adj;
    if (s == "ADV") return PosTag::Adv;
    if (s == "OTHER") return PosTag::Other;
    throw ConfigError("unknown part-of-speech tag: " + s);
}

// ASCII case-fold and strip ASCII punctuation. Bytes outside ASCII pass
// through untouched, so UTF-8 words survive as written.
inline std::string normalize_word(std::string_view w) {
    std::string out;
    out.reserve(w.size());
    for (char c : w) {
        const auto u = static_cast<unsigned char>(c);
        if (u < 0x80 && std::isupper(u)) {
            out.push_back(static_cast<char>(std::tolower(u)));
        } else if (u < 0x80 && std::ispunct(u)) {
            continue;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

// Lowercase, punctuation-stripped, whitespace-split surface words.
// Words that normalize to nothing (pure punctuation) are dropped.
inline std::vector<std::string> normalize_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            std::string w = normalize_word(current);
            if (!w.empty()) words.push_back(std::move(w));
            current.clear();
        }
    };
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (u < 0x80 && std::isspace(u)) {
            flush();
        } else {
            current.push_back(c);
        }
    }
    flush();
    return words;
}

inline bool is_english_token(std::string_view tok) {
    if (tok.empty()) return false;
    for (char c : tok) {
        if (c < 'a' || c > 'z') return false;
    }
    return true;
}

struct Vocabulary {
    std::vector<std::string> tokens; // tokens[0] is the UNK token
    Mat embeddings;                  // V x d, one row per token
    int dim = 0;

    static constexpr TokenId unk = 0;

    int size() const { return static_cast<int>(tokens.size()); }

    bool contains(const std::string& tok) const { return index_.count(tok) > 0; }

    TokenId id_of(const std::string& tok) const {
        auto it = index_.find(tok);
        return it == index_.end() ? unk : it->second;
    }

    void rebuild_index() {
        index_.clear();
        index_.reserve(tokens.size());
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            index_.emplace(tokens[i], static_cast<TokenId>(i));
        }
    }

private:
    std::unordered_map<std::string, TokenId> index_;
};

// Validates the vocabulary invariants and builds the lookup index.
// Token strings must be normalization fixed points (lowercase, no ASCII
// punctuation, no whitespace) so tokenize/detokenize round-trip exactly;
// the UNK token at index 0 is exempt.
inline Vocabulary make_vocabulary(std::vector<std::string> tokens, Mat embeddings) {
    if (tokens.empty()) throw ConfigError("vocabulary must contain at least the UNK token");
    if (embeddings.rows() != static_cast<Eigen::Index>(tokens.size()))
        throw ConfigError("vocabulary has " + std::to_string(tokens.size()) + " tokens but " +
                          std::to_string(embeddings.rows()) + " embedding rows");
    if (embeddings.cols() < 1) throw ConfigError("embedding dimension must be positive");
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& t = tokens[i];
        if (t.empty()) throw ConfigError("empty token at index " + std::to_string(i));
        if (!seen.insert(t).second) throw ConfigError("duplicate token: " + t);
        if (i > 0 && normalize_words(t) != std::vector<std::string>{t})
            throw ConfigError("token is not in normalized form: " + t);
        if (embeddings.row(static_cast<Eigen::Index>(i)).norm() == 0.0)
            throw ConfigError("all-zero embedding row for token: " + t);
    }
    Vocabulary v;
    v.tokens = std::move(tokens);
    v.embeddings = std::move(embeddings);
    v.dim = static_cast<int>(v.embeddings.cols());
    v.rebuild_index();
    return v;
}

// Seeded unit-norm random embedding table over a fixed word list. Row i is
// derived from (seed, i), so a given word keeps its vector as long as its
// position is stable.
inline Vocabulary random_vocabulary(const std::vector<std::string>& words, int dim,
                                    std::uint64_t seed) {
    Mat emb(static_cast<Eigen::Index>(words.size()), dim);
    for (std::size_t i = 0; i < words.size(); ++i) {
        emb.row(static_cast<Eigen::Index>(i)) =
            unit_gaussian_vector(dim, mix_seed(seed, i)).transpose();
    }
    return make_vocabulary(words, std::move(emb));
}

inline std::vector<TokenId> tokenize(const Vocabulary& vocab, std::string_view text) {
    std::vector<std::string> words = normalize_words(text);
    if (words.empty()) throw EmptyPromptError("prompt is empty after normalization");
    std::vector<TokenId> ids;
    ids.reserve(words.size());
    for (const std::string& w : words) ids.push_back(vocab.id_of(w));
    return ids;
}

inline std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
    if (ids.empty()) throw EmptyPromptError("cannot detokenize an empty id sequence");
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const TokenId id = ids[i];
        if (id < 0 || id >= vocab.size())
            throw InvalidTokenError("token index " + std::to_string(id) + " out of range [0, " +
                                    std::to_string(vocab.size()) + ")");
        if (i > 0) out.push_back(' ');
        out += vocab.tokens[static_cast<std::size_t>(id)];
    }
    return out;
}

inline Mat embed(const Vocabulary& vocab, std::span<const TokenId> ids) {
    Mat out(static_cast<Eigen::Index>(ids.size()), vocab.dim);
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const TokenId id = ids[k];
        if (id < 0 || id >= vocab.size())
            throw InvalidTokenError("token index " + std::to_string(id) + " out of range [0, " +
                                    std::to_string(vocab.size()) + ")");
        out.row(static_cast<Eigen::Index>(k)) = vocab.embeddings.row(id);
    }
    return out;
}

struct SynonymModel {
    std::unordered_map<std::string, Vec> entries;
    int dim = 0;

    bool contains(const std::string& w) const { return entries.count(w) > 0; }
};

inline SynonymModel make_synonym_model(std::unordered_map<std::string, Vec> entries) {
    SynonymModel m;
    for (const auto& [word, vec] : entries) {
        if (m.dim == 0) m.dim = static_cast<int>(vec.size());
        if (static_cast<int>(vec.size()) != m.dim)
            throw ConfigError("synonym vector dimension mismatch for word: " + word);
        if (vec.norm() == 0.0) throw ConfigError("zero-norm synonym vector for word: " + word);
    }
    m.entries = std::move(entries);
    return m;
}

struct NearestWords {
    std::vector<std::string> words;
    bool truncated = false; // H exceeded the number of available neighbors
};

// Top-H neighbors by cosine similarity, query excluded, ties broken by
// lexicographic word order.
inline NearestWords nearest_words(const SynonymModel& model, const std::string& word, int h) {
    if (h < 1) throw ConfigError("neighbor count must be at least 1");
    auto it = model.entries.find(word);
    if (it == model.entries.end()) throw UnknownWordError("word not in synonym model: " + word);
    const Vec& q = it->second;
    const double qn = q.norm();

    std::vector<std::pair<double, const std::string*>> scored;
    scored.reserve(model.entries.size());
    for (const auto& [w, v] : model.entries) {
        if (w == word) continue;
        scored.emplace_back(q.dot(v) / (qn * v.norm()), &w);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return *a.second < *b.second;
    });

    NearestWords out;
    out.truncated = static_cast<std::size_t>(h) > scored.size();
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(h), scored.size());
    out.words.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.words.push_back(*scored[i].second);
    return out;
}

struct SearchSpace {
    std::vector<TokenId> allowed;                  // sorted ascending
    std::unordered_set<std::string> forbidden_tokens;
    std::vector<std::string> forbidden_words;      // target first, then its neighbors
    bool degraded = false;                         // target missing from the synonym model

    bool is_allowed(TokenId id) const {
        return std::binary_search(allowed.begin(), allowed.end(), id);
    }
};

inline SearchSpace build_search_space(const Vocabulary& vocab, const SynonymModel& model,
                                      const std::string& target, int h) {
    const std::string t = normalize_word(target);
    if (t.empty()) throw EmptyPromptError("target is empty after normalization");

    SearchSpace space;
    space.forbidden_words.push_back(t);
    if (model.contains(t)) {
        NearestWords nn = nearest_words(model, t, h);
        for (std::string& w : nn.words) space.forbidden_words.push_back(std::move(w));
    } else {
        space.degraded = true;
    }

    for (const std::string& fw : space.forbidden_words) {
        for (const std::string& w : normalize_words(fw)) {
            const TokenId id = vocab.id_of(w);
            if (id != Vocabulary::unk) space.forbidden_tokens.insert(vocab.tokens[id]);
        }
    }

    for (TokenId id = 1; id < vocab.size(); ++id) {
        const std::string& tok = vocab.tokens[static_cast<std::size_t>(id)];
        if (!is_english_token(tok)) continue;
        if (space.forbidden_tokens.count(tok)) continue;
        space.allowed.push_back(id);
    }
    return space;
}

struct PosLexicon {
    std::unordered_map<std::string, PosTag> entries;
};

inline std::vector<PosTag> pos_tag(std::span<const std::string> words, const PosLexicon& lex) {
    std::vector<PosTag> tags;
    tags.reserve(words.size());
    for (const std::string& w : words) {
        auto it = lex.entries.find(normalize_word(w));
        tags.push_back(it == lex.entries.end() ? PosTag::Other : it->second);
    }
    return tags;
}

// ---------------------------------------------------------------------------
// File formats (UTF-8 text, one entry per line):
//   vocabulary / synonyms:  token<TAB>v1 v2 ... vd
//   pos lexicon:            word<TAB>TAG
// Line 1 of a vocabulary file must be the UNK token.
// ---------------------------------------------------------------------------

namespace detail {

inline std::pair<std::string, Vec> parse_embedding_line(const std::string& line,
                                                        const std::string& path, int lineno) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
        throw IoError(path + ":" + std::to_string(lineno) + ": expected token<TAB>values");
    std::string tok = line.substr(0, tab);
    std::istringstream values(line.substr(tab + 1));
    std::vector<double> xs;
    double x = 0.0;
    while (values >> x) xs.push_back(x);
    if (!values.eof())
        throw IoError(path + ":" + std::to_string(lineno) + ": malformed number");
    if (xs.empty())
        throw IoError(path + ":" + std::to_string(lineno) + ": no embedding values");
    Vec v(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) v(static_cast<Eigen::Index>(i)) = xs[i];
    return {std::move(tok), std::move(v)};
}

} // namespace detail

inline Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file: " + path);
    std::vector<std::string> tokens;
    std::vector<Vec> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto [tok, v] = detail::parse_embedding_line(line, path, lineno);
        if (!rows.empty() && v.size() != rows.front().size())
            throw IoError(path + ":" + std::to_string(lineno) + ": embedding dimension mismatch");
        tokens.push_back(std::move(tok));
        rows.push_back(std::move(v));
    }
    if (tokens.empty()) throw IoError(path + ": empty vocabulary file");
    Mat emb(static_cast<Eigen::Index>(rows.size()), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) emb.row(static_cast<Eigen::Index>(i)) = rows[i];
    return make_vocabulary(std::move(tokens), std::move(emb));
}

inline void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write vocabulary file: " + path);
    out.precision(17);
    for (int i = 0; i < vocab.size(); ++i) {
        out << vocab.tokens[static_cast<std::size_t>(i)] << '\t';
        for (int j = 0; j < vocab.dim; ++j) {
            if (j > 0) out << ' ';
            out << vocab.embeddings(i, j);
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing vocabulary file: " + path);
}

inline SynonymModel load_synonyms(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open synonym file: " + path);
    std::unordered_map<std::string, Vec> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto [word, v] = detail::parse_embedding_line(line, path, lineno);
        if (!entries.emplace(std::move(word), std::move(v)).second)
            throw IoError(path + ":" + std::to_string(lineno) + ": duplicate word");
    }
    return make_synonym_model(std::move(entries));
}

inline void save_synonyms(const SynonymModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write synonym file: " + path);
    out.precision(17);
    std::vector<const std::string*> words;
    words.reserve(model.entries.size());
    for (const auto& [w, v] : model.entries) words.push_back(&w);
    std::sort(words.begin(), words.end(), [](const auto* a, const auto* b) { return *a < *b; });
    for (const std::string* w : words) {
        const Vec& v = model.entries.at(*w);
        out << *w << '\t';
        for (Eigen::Index j = 0; j < v.size(); ++j) {
            if (j > 0) out << ' ';
            out << v(j);
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing synonym file: " + path);
}

inline PosLexicon load_pos_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open pos lexicon file: " + path);
    PosLexicon lex;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw IoError(path + ":" + std::to_string(lineno) + ": expected word<TAB>TAG");
        std::string word = normalize_word(line.substr(0, tab));
        std::string tag = line.substr(tab + 1);
        try {
            lex.entries[word] = parse_pos_tag(tag);
        } catch (const ConfigError& e) {
            throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return lex;
}

inline void save_pos_lexicon(const PosLexicon& lex, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write pos lexicon file: " + path);
    std::vector<const std::string*> words;
    words.reserve(lex.entries.size());
    for (const auto& [w, t] : lex.entries) words.push_back(&w);
    std::sort(words.begin(), words.end(), [](const auto* a, const auto* b) { return *a < *b; });
    for (const std::string* w : words) {
        out << *w << '\t' << to_string(lex.entries.at(*w)) << '\n';
    }
    if (!out) throw IoError("failed writing pos lexicon file: " + path);
}

} // namespace advprompt
