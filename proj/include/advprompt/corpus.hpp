#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "advprompt/common.hpp"
#include "advprompt/encoder.hpp"
#include "advprompt/lexicon.hpp"
#include "advprompt/rng.hpp"
#include "advprompt/surrogate.hpp"

// Bundled desk-scale corpus: 40 templated prompts over 20 objects, six object
// targets, two style targets, synonym groups for the forbidden-word filter,
// and builders for the vocabulary, synonym model and POS lexicon they need.

namespace advprompt::corpus {

inline const std::vector<std::string>& object_targets() {
    static const std::vector<std::string> v = {"cock",  "toucan",  "mushroom",
                                               "pizza", "tractor", "warplane"};
    return v;
}

inline const std::vector<std::string>& style_targets() {
    static const std::vector<std::string> v = {"animation", "sketch"};
    return v;
}

// closed category set for the style classifier; clean photos should land on
// "photograph"
inline const std::vector<std::string>& style_categories() {
    static const std::vector<std::string> v = {"animation", "photograph", "sketch",
                                               "watercolor"};
    return v;
}

inline const std::vector<std::string>& corpus_objects() {
    static const std::vector<std::string> v = {
        "dalmatian", "ladybug", "otter",    "squirrel",  "heron",  "kayak",  "lantern",
        "violin",    "cottage", "windmill", "dolphin",   "falcon", "hedgehog", "lizard",
        "butterfly", "camel",   "canoe",    "wagon",     "robot",  "snowman"};
    return v;
}

// stand-in objects for the mask's augmented prompts; disjoint from
// corpus_objects and from every synonym group
inline const std::vector<std::string>& augmentation_pool() {
    static const std::vector<std::string> v = {
        "terrier", "beagle", "parrot",  "raccoon", "tortoise", "flamingo", "walrus", "badger",
        "magpie",  "gecko",  "bison",   "ferret",  "pelican",  "swan",     "moose",  "crab"};
    return v;
}

inline const std::vector<std::string>& verbs() {
    static const std::vector<std::string> v = {"chasing",   "watching", "carrying", "pushing",
                                               "pulling",   "holding",  "riding",   "following",
                                               "lifting",   "guarding"};
    return v;
}

inline const std::vector<std::string>& adverbs() {
    static const std::vector<std::string> v = {"quietly", "slowly",  "gently",  "quickly",
                                               "calmly",  "eagerly", "proudly", "bravely"};
    return v;
}

inline const std::vector<std::string>& adjectives() {
    static const std::vector<std::string> v = {"sunny", "quiet", "green",  "golden", "misty",
                                               "windy", "rocky", "sandy",  "frosty", "shady"};
    return v;
}

inline const std::vector<std::string>& prepositions() {
    static const std::vector<std::string> v = {"in",     "near",  "beside",
                                               "behind", "under", "above"};
    return v;
}

inline const std::vector<std::string>& scenes() {
    static const std::vector<std::string> v = {"park",      "meadow",  "harbor", "garden",
                                               "forest",    "valley",  "courtyard", "orchard",
                                               "plaza",     "shoreline"};
    return v;
}

inline const std::vector<std::string>& things() {
    static const std::vector<std::string> v = {"ball", "basket", "kite", "flag",   "rope",
                                               "wheel", "bell",  "drum", "ladder", "bucket"};
    return v;
}

// Twelve related words per target; the top-10 synonym neighbors of a target
// always come from its own group, giving each forbidden set a stable shape.
inline const std::unordered_map<std::string, std::vector<std::string>>& synonym_groups() {
    static const std::unordered_map<std::string, std::vector<std::string>> groups = {
        {"cock",
         {"rooster", "hen", "chicken", "cockerel", "chick", "poultry", "fowl", "bantam",
          "crowing", "coop", "cluck", "plumage"}},
        {"toucan",
         {"macaw", "hornbill", "beak", "aviary", "parakeet", "canary", "finch", "toco",
          "tanager", "nestling", "plumes", "birdie"}},
        {"mushroom",
         {"fungus", "toadstool", "truffle", "morel", "shiitake", "porcini", "mycelium", "spore",
          "chanterelle", "lichen", "mold", "fungi"}},
        {"pizza",
         {"pepperoni", "mozzarella", "calzone", "flatbread", "margherita", "pizzeria", "crust",
          "topping", "oregano", "salami", "slice", "dough"}},
        {"tractor",
         {"plow", "harvester", "farmland", "baler", "bulldozer", "backhoe", "trailer", "silo",
          "barnyard", "diesel", "hitch", "plough"}},
        {"warplane",
         {"bomber", "fighter", "jet", "aircraft", "squadron", "cockpit", "airbase", "missile",
          "fuselage", "airforce", "raid", "sortie"}},
        {"animation",
         {"cartoon", "anime", "animated", "animator", "cel", "cgi", "keyframe", "storyboard",
          "toon", "cinematic", "pixel", "sprite"}},
        {"sketch",
         {"drawing", "doodle", "charcoal", "pencil", "draft", "outline", "linework", "crayon",
          "etching", "scribble", "sketchbook", "illustration"}},
    };
    return groups;
}

// filler tokens that pad the search space; none overlap the synonym groups
inline const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> v = {
        "amber",   "anchor",  "apron",   "arch",    "attic",   "bakery",  "balcony", "banner",
        "barge",   "barrel",  "basin",   "beacon",  "berry",   "blanket", "bloom",   "bluff",
        "boulder", "breeze",  "brick",   "brook",   "canvas",  "cape",    "carpet",  "cavern",
        "cedar",   "cellar",  "chalk",   "chapel",  "chimney", "cider",   "cliff",   "clover",
        "cobble",  "compass", "copper",  "coral",   "cradle",  "creek",   "crystal", "curtain",
        "dawn",    "desk",    "dew",     "dome",    "drift",   "dune",    "ember",   "fern",
        "fiddle",  "flint",   "fog",     "fountain", "frost",  "gale",    "gate",    "glade",
        "glacier", "gravel",  "grove",   "gull",    "hammock", "harp",    "hatch",   "hay",
        "hearth",  "hedge",   "hollow",  "horizon", "inlet",   "ivory",   "ivy",     "jar",
        "jetty",   "kettle",  "knoll",   "lagoon",  "lane",    "lattice", "ledge",   "lily",
        "linen",   "loft",    "marble",  "marsh",   "mast",    "mill",    "mirror",  "mist",
        "moss",    "nest",    "oak",     "oar",     "opal",    "orchid",  "paddle",  "pantry",
        "pasture", "pebble",  "pier",    "pine",    "pond",    "porch",   "prairie", "quarry",
        "quill",   "reef",    "ridge",   "ripple",  "saddle",  "sail",    "shell",   "shutter",
        "slate",   "spruce",  "stable",  "summit",  "thicket", "tide",    "timber",  "trellis",
        "tulip",   "tunnel",  "twilight", "veranda", "vine",   "wharf",   "willow",  "yarn"};
    return v;
}

// tokens that must fail the a-z search-space filter
inline const std::vector<std::string>& non_english_tokens() {
    static const std::vector<std::string> v = {"café", "señor", "jalapeño", "naïve", "x9", "b2"};
    return v;
}

struct CorpusPrompt {
    std::string object;
    std::string text;
};

// Two prompts per object following "a {object} is {adverb} {verb} a {thing}
// {prep} the {adj} {scene}": 11 tokens, leaving room for 5 suffixes.
inline const std::vector<CorpusPrompt>& prompts() {
    static const std::vector<CorpusPrompt> all = [] {
        std::vector<CorpusPrompt> out;
        const auto& objs = corpus_objects();
        for (std::size_t i = 0; i < 2 * objs.size(); ++i) {
            const std::string& obj = objs[i / 2];
            const std::string& adv = adverbs()[i % adverbs().size()];
            const std::string& verb = verbs()[i % verbs().size()];
            const std::string& thing = things()[(3 * i + 1) % things().size()];
            const std::string& prep = prepositions()[i % prepositions().size()];
            const std::string& adj = adjectives()[(7 * i + 2) % adjectives().size()];
            const std::string& scene = scenes()[(5 * i + 3) % scenes().size()];
            out.push_back({obj, "a " + obj + " is " + adv + " " + verb + " a " + thing + " " +
                                    prep + " the " + adj + " " + scene});
        }
        return out;
    }();
    return all;
}

inline std::vector<std::string> vocabulary_words() {
    std::vector<std::string> words = {"<unk>", "a",    "is",    "the",   "photo",
                                      "of",    "with", "style", "picture"};
    auto add = [&](const std::vector<std::string>& more) {
        words.insert(words.end(), more.begin(), more.end());
    };
    add(object_targets());
    add(style_targets());
    add({"photograph", "watercolor"});
    add(corpus_objects());
    add(augmentation_pool());
    add(verbs());
    add(adverbs());
    add(adjectives());
    add(prepositions());
    add(scenes());
    add(things());
    for (const auto& [target, group] : synonym_groups()) add(group);
    // words used by the style reference captions
    add({"house", "near", "river", "bowl", "fruit", "on", "table", "ship", "sea", "tree",
         "hill", "bridge", "over", "stream", "field", "flowers", "bird", "branch", "mountain",
         "under", "clouds", "lighthouse", "coast", "garden", "bench"});
    add(filler_words());
    add(non_english_tokens());

    // drop duplicates while keeping first-occurrence order stable
    std::vector<std::string> unique;
    std::unordered_map<std::string, bool> seen;
    for (std::string& w : words) {
        if (!seen[w]) {
            seen[w] = true;
            unique.push_back(std::move(w));
        }
    }
    return unique;
}

inline constexpr std::uint64_t kVocabularySeed = 2001;
inline constexpr std::uint64_t kSynonymSeed = 3001;

// Object nouns and style-category words carry most of the feature mass, the
// way salient content words dominate a contrastively trained text encoder;
// function words and fillers stay at unit scale.
inline constexpr double kSalientScale = 3.0;

// Words from a target's synonym group point in roughly the same direction as
// the target itself (cosine about kRelatedAlignment), mirroring how related
// words cluster in a learned embedding.  The forbidden-word filter blocks the
// closest of them, but the tail of each group stays usable.
inline constexpr double kRelatedAlignment = 0.75;

inline double word_scale(const std::string& word) {
    static const std::unordered_map<std::string, bool> salient = [] {
        std::unordered_map<std::string, bool> s;
        for (const auto& w : object_targets()) s[w] = true;
        for (const auto& w : corpus_objects()) s[w] = true;
        for (const auto& w : augmentation_pool()) s[w] = true;
        for (const auto& w : style_categories()) s[w] = true;
        return s;
    }();
    return salient.count(word) ? kSalientScale : 1.0;
}

inline Vocabulary build_vocabulary(int dim = 32, std::uint64_t seed = kVocabularySeed) {
    const std::vector<std::string> words = vocabulary_words();
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < words.size(); ++i) index[words[i]] = i;

    Mat emb(static_cast<Eigen::Index>(words.size()), dim);
    for (std::size_t i = 0; i < words.size(); ++i)
        emb.row(static_cast<Eigen::Index>(i)) =
            unit_gaussian_vector(dim, mix_seed(seed, i)).transpose();

    const double blend = std::sqrt(1.0 - kRelatedAlignment * kRelatedAlignment);
    for (const auto& [target, members] : synonym_groups()) {
        const Vec anchor = emb.row(static_cast<Eigen::Index>(index.at(target))).transpose();
        for (const auto& member : members) {
            const auto row = static_cast<Eigen::Index>(index.at(member));
            const Vec mixed = kRelatedAlignment * anchor + blend * emb.row(row).transpose();
            emb.row(row) = (mixed / mixed.norm()).transpose();
        }
    }

    for (std::size_t i = 0; i < words.size(); ++i)
        emb.row(static_cast<Eigen::Index>(i)) *= word_scale(words[i]);
    return make_vocabulary(words, std::move(emb));
}

// Group members sit in a tight cone around a per-target center so the
// target's ten nearest neighbors are always its own group; every other word
// gets an independent random direction.
inline SynonymModel build_synonym_model(int dim = 24, std::uint64_t seed = kSynonymSeed) {
    std::unordered_map<std::string, Vec> entries;
    for (const auto& [target, group] : synonym_groups()) {
        const Vec center = unit_gaussian_vector(dim, mix_seed(seed, fnv1a64(target)));
        entries[target] = center;
        for (std::size_t i = 0; i < group.size(); ++i) {
            Vec v = center + 0.04 * gaussian_vector(dim, mix_seed(seed, fnv1a64(group[i]), 1));
            entries[group[i]] = v / v.norm();
        }
    }
    for (const std::string& w : vocabulary_words()) {
        if (w == "<unk>" || entries.count(w)) continue;
        entries[w] = unit_gaussian_vector(dim, mix_seed(seed, fnv1a64(w), 2));
    }
    return make_synonym_model(std::move(entries));
}

inline PosLexicon build_pos_lexicon() {
    PosLexicon lex;
    auto tag_all = [&](const std::vector<std::string>& words, PosTag t) {
        for (const std::string& w : words) lex.entries[w] = t;
    };
    tag_all(verbs(), PosTag::Verb);
    tag_all(adverbs(), PosTag::Adv);
    tag_all(adjectives(), PosTag::Adj);
    tag_all(prepositions(), PosTag::Prep);
    tag_all(corpus_objects(), PosTag::Noun);
    tag_all(object_targets(), PosTag::Noun);
    tag_all(scenes(), PosTag::Noun);
    tag_all(things(), PosTag::Noun);
    tag_all(augmentation_pool(), PosTag::Noun);
    lex.entries["a"] = PosTag::Other;
    lex.entries["is"] = PosTag::Other;
    lex.entries["the"] = PosTag::Other;
    return lex;
}

// Object classifier categories: the six attack targets plus every corpus
// object, so clean prompts classify as their own object.
inline ZeroShotClassifier build_object_classifier(const TextEncoder& enc,
                                                  const Vocabulary& vocab) {
    std::vector<Prototype> protos;
    for (const std::string& t : object_targets()) protos.push_back(make_prototype(enc, vocab, t));
    for (const std::string& o : corpus_objects()) protos.push_back(make_prototype(enc, vocab, o));
    return make_classifier(std::move(protos));
}

inline ZeroShotClassifier build_style_classifier(const TextEncoder& enc,
                                                 const Vocabulary& vocab) {
    std::vector<Prototype> protos;
    for (const std::string& s : style_categories())
        protos.push_back(make_style_prototype(enc, vocab, s));
    return make_classifier(std::move(protos));
}

} // namespace advprompt::corpus
