#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "advprompt/corpus.hpp"

using namespace advprompt;

TEST_CASE("bundled vocabulary covers the corpus without collisions") {
    Vocabulary v = corpus::build_vocabulary();
    REQUIRE(v.size() >= 200);
    REQUIRE(v.size() <= 2000);
    REQUIRE(v.tokens[0] == "<unk>");
    REQUIRE(v.dim == 32);

    SECTION("every prompt tokenizes cleanly to eleven tokens") {
        REQUIRE(corpus::prompts().size() == 40);
        for (const auto& p : corpus::prompts()) {
            auto ids = tokenize(v, p.text);
            REQUIRE(ids.size() == 11);
            for (TokenId id : ids) REQUIRE(id != Vocabulary::unk);
            REQUIRE(detokenize(ids, v) == p.text);
        }
    }
    SECTION("two prompts per object, in object order") {
        for (std::size_t i = 0; i < corpus::prompts().size(); ++i) {
            REQUIRE(corpus::prompts()[i].object == corpus::corpus_objects()[i / 2]);
            REQUIRE(corpus::prompts()[i].text.find(corpus::prompts()[i].object) !=
                    std::string::npos);
        }
    }
    SECTION("reference captions and prototypes tokenize cleanly") {
        for (const std::string& content : style_reference_contents()) {
            for (TokenId id : tokenize(v, content)) REQUIRE(id != Vocabulary::unk);
        }
        for (const std::string& t : corpus::object_targets()) {
            for (TokenId id : tokenize(v, "a photo of " + t)) REQUIRE(id != Vocabulary::unk);
        }
        for (const std::string& s : corpus::style_categories()) {
            for (TokenId id : tokenize(v, "a picture with the " + s + " style"))
                REQUIRE(id != Vocabulary::unk);
        }
    }
    SECTION("augmentation pool is usable for every prompt") {
        for (const std::string& w : corpus::augmentation_pool()) {
            REQUIRE(v.contains(w));
        }
        REQUIRE(corpus::augmentation_pool().size() >= 10);
    }
}

TEST_CASE("synonym groups are disjoint from the rest of the corpus") {
    std::set<std::string> group_words;
    for (const auto& [target, group] : corpus::synonym_groups()) {
        REQUIRE(group.size() == 12);
        for (const std::string& w : group) {
            REQUIRE(group_words.insert(w).second); // groups pairwise disjoint
            REQUIRE(w != target);
        }
    }

    auto check_clear = [&](const std::vector<std::string>& words) {
        for (const std::string& w : words) {
            REQUIRE(group_words.count(w) == 0);
        }
    };
    check_clear(corpus::corpus_objects());
    check_clear(corpus::augmentation_pool());
    check_clear(corpus::filler_words());
    check_clear(corpus::verbs());
    check_clear(corpus::adverbs());
    check_clear(corpus::adjectives());
    check_clear(corpus::prepositions());
    check_clear(corpus::scenes());
    check_clear(corpus::things());
}

TEST_CASE("every target's ten nearest synonyms are its own group") {
    SynonymModel m = corpus::build_synonym_model();
    std::vector<std::string> all_targets = corpus::object_targets();
    for (const std::string& s : corpus::style_targets()) all_targets.push_back(s);

    for (const std::string& target : all_targets) {
        NearestWords nn = nearest_words(m, target, 10);
        REQUIRE(nn.words.size() == 10);
        REQUIRE_FALSE(nn.truncated);
        const auto& group = corpus::synonym_groups().at(target);
        for (const std::string& w : nn.words) {
            REQUIRE(std::find(group.begin(), group.end(), w) != group.end());
        }
    }
}

TEST_CASE("search spaces for all targets are sound and non-degraded") {
    Vocabulary v = corpus::build_vocabulary();
    SynonymModel m = corpus::build_synonym_model();
    std::vector<std::string> all_targets = corpus::object_targets();
    for (const std::string& s : corpus::style_targets()) all_targets.push_back(s);

    for (const std::string& target : all_targets) {
        SearchSpace s = build_search_space(v, m, target, 10);
        REQUIRE_FALSE(s.degraded);
        REQUIRE(s.forbidden_words.size() == 11); // target + ten neighbors
        REQUIRE(s.forbidden_words.front() == target);
        REQUIRE(s.allowed.size() > 100);
        for (TokenId id : s.allowed) {
            const std::string& tok = v.tokens[static_cast<std::size_t>(id)];
            REQUIRE(is_english_token(tok));
            REQUIRE(s.forbidden_tokens.count(tok) == 0);
        }
        // the target and each of its ten nearest synonyms are out of reach;
        // the two group members past the H=10 cutoff legitimately remain
        REQUIRE_FALSE(s.is_allowed(v.id_of(target)));
        int escaped = 0;
        for (const std::string& w : corpus::synonym_groups().at(target)) {
            if (s.is_allowed(v.id_of(w))) ++escaped;
        }
        REQUIRE(escaped == 2);
        // non-English tokens never enter the space
        for (const std::string& w : corpus::non_english_tokens()) {
            REQUIRE_FALSE(s.is_allowed(v.id_of(w)));
        }
    }
}

TEST_CASE("pos lexicon tags the template positions") {
    PosLexicon lex = corpus::build_pos_lexicon();
    Vocabulary v = corpus::build_vocabulary();
    for (const auto& p : corpus::prompts()) {
        auto words = normalize_words(p.text);
        auto tags = pos_tag(words, lex);
        REQUIRE(tags.size() == 11);
        REQUIRE(tags[1] == PosTag::Noun);  // the object
        REQUIRE(tags[3] == PosTag::Adv);
        REQUIRE(tags[4] == PosTag::Verb);
        REQUIRE(tags[7] == PosTag::Prep);
        REQUIRE(tags[9] == PosTag::Adj);
        REQUIRE(tags[10] == PosTag::Noun); // the scene
    }
}

TEST_CASE("classifiers cover the object and style category sets") {
    Vocabulary v = corpus::build_vocabulary();
    EncoderConfig cfg;
    TextEncoder enc(cfg);

    ZeroShotClassifier obj = corpus::build_object_classifier(enc, v);
    REQUIRE(obj.prototypes.size() ==
            corpus::object_targets().size() + corpus::corpus_objects().size());
    ZeroShotClassifier sty = corpus::build_style_classifier(enc, v);
    REQUIRE(sty.prototypes.size() == corpus::style_categories().size());
}

TEST_CASE("clean prompts classify as their own object without noise") {
    Vocabulary v = corpus::build_vocabulary();
    EncoderConfig cfg;
    TextEncoder enc(cfg);
    ZeroShotClassifier obj = corpus::build_object_classifier(enc, v);

    int correct = 0;
    for (const auto& p : corpus::prompts()) {
        if (classify(obj, encode_text(enc, v, p.text)) == p.object) ++correct;
    }
    REQUIRE(correct == 40);
}

TEST_CASE("no attack-target style dominates the clean prompts") {
    // Clean prompts carry no style words, so the style axis should start out
    // roughly balanced; otherwise style-attack gains would not be measurable.
    Vocabulary v = corpus::build_vocabulary();
    EncoderConfig cfg;
    TextEncoder enc(cfg);
    ZeroShotClassifier sty = corpus::build_style_classifier(enc, v);

    std::map<std::string, int> hist;
    for (const auto& p : corpus::prompts()) {
        ++hist[classify(sty, encode_text(enc, v, p.text))];
    }
    for (const auto& target : corpus::style_targets()) {
        REQUIRE(hist[target] < 20);
    }
}
