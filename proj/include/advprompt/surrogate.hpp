#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "advprompt/common.hpp"
#include "advprompt/encoder.hpp"
#include "advprompt/errors.hpp"
#include "advprompt/lexicon.hpp"
#include "advprompt/rng.hpp"

namespace advprompt {

// Stochastic stand-in for the image generator: a prompt feature maps to
// jittered unit-norm "image" features, deterministic per (feature, index).
struct GenerationOracle {
    double sigma_gen = 0.1;
    std::uint64_t seed = 0;
};

inline Vec sample_image_feature(const GenerationOracle& oracle, const Vec& f_prompt, int index) {
    if (!f_prompt.allFinite()) throw NumericalError("prompt feature is not finite");
    if (f_prompt.norm() == 0.0) throw NumericalError("prompt feature has zero norm");
    Vec noisy = f_prompt;
    if (oracle.sigma_gen > 0.0) {
        const std::uint64_t s =
            mix_seed(oracle.seed, hash_vector(f_prompt), static_cast<std::uint64_t>(index));
        noisy += oracle.sigma_gen * gaussian_vector(static_cast<int>(f_prompt.size()), s);
    }
    const double n = noisy.norm();
    if (n == 0.0) throw NumericalError("sampled image feature has zero norm");
    return noisy / n;
}

struct ZeroShotClassifier {
    std::vector<Prototype> prototypes; // sorted by category name
};

inline ZeroShotClassifier make_classifier(std::vector<Prototype> prototypes) {
    if (prototypes.size() < 2)
        throw ConfigError("classifier needs at least two categories");
    std::sort(prototypes.begin(), prototypes.end(),
              [](const Prototype& a, const Prototype& b) { return a.category < b.category; });
    for (std::size_t i = 0; i < prototypes.size(); ++i) {
        if (i > 0 && prototypes[i].category == prototypes[i - 1].category)
            throw ConfigError("duplicate classifier category: " + prototypes[i].category);
        if (prototypes[i].feature.norm() == 0.0)
            throw ConfigError("zero-norm prototype for category: " + prototypes[i].category);
    }
    ZeroShotClassifier clf;
    clf.prototypes = std::move(prototypes);
    return clf;
}

// Cosine argmax over prototypes; ties go to the lexicographically first
// category (the prototype list is kept sorted by name).
inline const std::string& classify(const ZeroShotClassifier& clf, const Vec& f_image) {
    if (!f_image.allFinite()) throw NumericalError("image feature is not finite");
    const double fn = f_image.norm();
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t i = 0; i < clf.prototypes.size(); ++i) {
        const Vec& p = clf.prototypes[i].feature;
        const double denom = p.norm() * fn;
        const double score = denom == 0.0 ? 0.0 : p.dot(f_image) / denom;
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return clf.prototypes[best].category;
}

// Keyword detector Q: flags a prompt whose surface words hit the forbidden
// token set. Substring mode also flags words that merely contain a forbidden
// token ("pizzas" hits "pizza").
inline bool keyword_detect(std::string_view prompt, const SearchSpace& space,
                           bool substring_mode = false) {
    for (const std::string& w : normalize_words(prompt)) {
        if (space.forbidden_tokens.count(w)) return true;
        if (substring_mode) {
            for (const std::string& f : space.forbidden_tokens) {
                if (w.find(f) != std::string::npos) return true;
            }
        }
    }
    return false;
}

// Surface-form similarity: multiset word overlap over the larger word count.
inline double prompt_similarity(std::string_view x, std::string_view x_adv) {
    std::vector<std::string> a = normalize_words(x);
    std::vector<std::string> b = normalize_words(x_adv);
    if (a.empty() || b.empty())
        throw EmptyPromptError("cannot compare an empty prompt");
    std::unordered_map<std::string, int> counts;
    for (const std::string& w : a) ++counts[w];
    std::size_t shared = 0;
    for (const std::string& w : b) {
        auto it = counts.find(w);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++shared;
        }
    }
    return static_cast<double>(shared) / static_cast<double>(std::max(a.size(), b.size()));
}

} // namespace advprompt
