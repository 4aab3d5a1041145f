#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "advprompt/corpus.hpp"
#include "advprompt/eval.hpp"

using namespace advprompt;

namespace {

EvalOutcome outcome_with(std::vector<std::string> labels, const std::string& target,
                         double sim = 1.0, bool q = false) {
    EvalOutcome o;
    o.prompt = "p";
    o.target = target;
    o.labels = std::move(labels);
    o.sim = sim;
    o.q_verdict = q;
    return o;
}

// One shared experiment world; building classifiers is cheap but not free.
struct World {
    Vocabulary vocab = corpus::build_vocabulary();
    TextEncoder enc{EncoderConfig{}};
    SynonymModel synonyms = corpus::build_synonym_model();
    PosLexicon pos = corpus::build_pos_lexicon();
    ZeroShotClassifier object_clf;
    ZeroShotClassifier style_clf;

    World()
        : object_clf(corpus::build_object_classifier(enc, vocab)),
          style_clf(corpus::build_style_classifier(enc, vocab)) {}

    ExperimentSetup setup() const {
        ExperimentSetup s;
        s.vocab = &vocab;
        s.enc = &enc;
        s.synonyms = &synonyms;
        s.pos = &pos;
        s.object_clf = &object_clf;
        s.style_clf = &style_clf;
        s.augmentation_pool = corpus::augmentation_pool();
        return s;
    }
};

const World& world() {
    static World w;
    return w;
}

AttackConfig quick_config() {
    AttackConfig cfg;
    cfg.iterations = 60;
    cfg.seed = 9;
    return cfg;
}

std::vector<EvalOutcome> random_outcomes(std::mt19937& gen, int count) {
    std::uniform_int_distribution<int> coin(0, 3);
    std::vector<EvalOutcome> outcomes;
    for (int i = 0; i < count; ++i) {
        std::vector<std::string> labels;
        for (int j = 0; j < 10; ++j) labels.push_back(coin(gen) == 0 ? "t" : "other");
        outcomes.push_back(outcome_with(std::move(labels), "t"));
    }
    return outcomes;
}

} // namespace

TEST_CASE("acc_k counts at-least-one hit within the first K labels") {
    std::vector<EvalOutcome> outcomes;
    outcomes.push_back(outcome_with({"t", "x", "x"}, "t"));
    outcomes.push_back(outcome_with({"x", "t", "x"}, "t"));

    // every outcome's first label a hit → 1.0
    std::vector<EvalOutcome> saturated{outcome_with({"t", "x"}, "t"),
                                       outcome_with({"t", "t"}, "t")};
    REQUIRE(acc_k(saturated, "t", 1) == 1.0);

    // [miss, hit] counts 0 at K=1 and 1 at K=2
    std::vector<EvalOutcome> miss_hit{outcome_with({"x", "t"}, "t")};
    REQUIRE(acc_k(miss_hit, "t", 1) == 0.0);
    REQUIRE(acc_k(miss_hit, "t", 2) == 1.0);

    REQUIRE(acc_k(outcomes, "t", 1) == 0.5);
    REQUIRE(acc_k(outcomes, "t", 2) == 1.0);
}

TEST_CASE("acc_k validates its inputs") {
    std::vector<EvalOutcome> outcomes{outcome_with({"t", "x"}, "t")};
    REQUIRE_THROWS_AS(acc_k(outcomes, "t", 0), ConfigError);
    REQUIRE_THROWS_AS(acc_k(outcomes, "t", 3), InsufficientSamplesError);
    REQUIRE_THROWS_AS(acc_k(std::vector<EvalOutcome>{}, "t", 1), EmptyEvaluationError);
}

TEST_CASE("acc_k is monotone non-decreasing in K") {
    std::mt19937 gen(42);
    for (int trial = 0; trial < 100; ++trial) {
        auto outcomes = random_outcomes(gen, 8);
        double prev = 0.0;
        for (int k = 1; k <= 10; ++k) {
            const double rate = acc_k(outcomes, "t", k);
            REQUIRE(rate >= prev);
            prev = rate;
        }
    }
}

TEST_CASE("acc_avg pools hits over all labels") {
    // one hit among 10 images, one prompt → 0.1
    std::vector<EvalOutcome> one_hit{outcome_with(
        {"x", "x", "x", "t", "x", "x", "x", "x", "x", "x"}, "t")};
    REQUIRE(acc_avg(one_hit, "t") == Catch::Approx(0.1));

    std::vector<EvalOutcome> all_hits{outcome_with({"t", "t"}, "t"),
                                      outcome_with({"t", "t"}, "t")};
    REQUIRE(acc_avg(all_hits, "t") == 1.0);

    REQUIRE_THROWS_AS(acc_avg(std::vector<EvalOutcome>{}, "t"), EmptyEvaluationError);
    std::vector<EvalOutcome> empty_labels{outcome_with({}, "t")};
    REQUIRE_THROWS_AS(acc_avg(empty_labels, "t"), EmptyEvaluationError);
}

TEST_CASE("acc_avg equals the mean of per-outcome hit rates at equal N") {
    std::mt19937 gen(7);
    for (int trial = 0; trial < 50; ++trial) {
        auto outcomes = random_outcomes(gen, 6);
        double mean = 0.0;
        for (const auto& o : outcomes) {
            double hits = 0.0;
            for (const auto& l : o.labels) hits += l == "t";
            mean += hits / static_cast<double>(o.labels.size());
        }
        mean /= static_cast<double>(outcomes.size());
        REQUIRE(acc_avg(outcomes, "t") == Catch::Approx(mean));
    }
}

TEST_CASE("metrics are invariant under permutation of the outcomes") {
    std::mt19937 gen(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto outcomes = random_outcomes(gen, 7);
        auto shuffled = outcomes;
        std::shuffle(shuffled.begin(), shuffled.end(), gen);
        REQUIRE(acc_avg(outcomes, "t") == acc_avg(shuffled, "t"));
        for (int k : {1, 5, 10})
            REQUIRE(acc_k(outcomes, "t", k) == acc_k(shuffled, "t", k));
    }
}

TEST_CASE("acc_avg never exceeds the at-least-one rate at K = N") {
    std::mt19937 gen(23);
    for (int trial = 0; trial < 50; ++trial) {
        auto outcomes = random_outcomes(gen, 5);
        REQUIRE(acc_avg(outcomes, "t") <= acc_k(outcomes, "t", 10));
    }
}

TEST_CASE("semantic consistency is acc_avg against the original object") {
    std::vector<EvalOutcome> outcomes{
        outcome_with({"dalmatian", "otter", "dalmatian", "kayak"}, "cock")};
    REQUIRE(semantic_consistency(outcomes, "dalmatian") == Catch::Approx(0.5));
    REQUIRE(semantic_consistency(outcomes, "dalmatian") ==
            acc_avg(outcomes, "dalmatian"));
}

TEST_CASE("a feature exactly on the target prototype saturates acc_avg at zero noise") {
    const World& w = world();
    Vec proto;
    for (const auto& p : w.object_clf.prototypes)
        if (p.category == "cock") proto = p.feature;
    REQUIRE(proto.size() > 0);

    GenerationOracle noiseless{0.0, 3};
    EvalOutcome o;
    o.target = "cock";
    for (int i = 0; i < 10; ++i)
        o.labels.push_back(classify(w.object_clf, sample_image_feature(noiseless, proto, i)));
    std::vector<EvalOutcome> outcomes{o};
    REQUIRE(acc_avg(outcomes, "cock") == 1.0);
}

TEST_CASE("prompt semantic check classifies the prompt's own feature") {
    const World& w = world();
    REQUIRE(prompt_semantic_check("a photo of cock", w.object_clf, "cock", w.enc, w.vocab));
    REQUIRE_FALSE(
        prompt_semantic_check("a photo of dalmatian", w.object_clf, "cock", w.enc, w.vocab));
    REQUIRE_THROWS_AS(prompt_semantic_check("", w.object_clf, "cock", w.enc, w.vocab),
                      EmptyPromptError);
}

TEST_CASE("run_pair produces labeled outcomes for both sides") {
    const World& w = world();
    ExperimentSetup setup = w.setup();
    AttackConfig cfg = quick_config();
    PairSpec spec{corpus::prompts()[0].text, corpus::prompts()[0].object, "cock",
                  TargetKind::Object};
    TargetAssets assets =
        build_target_assets(setup, spec.target, spec.kind, cfg.reference_count, cfg.seed);

    PairOutcome out = run_pair(setup, spec, Strategy::Suffix, cfg, assets);
    REQUIRE(out.ok);
    REQUIRE(out.status == "ok");
    REQUIRE(out.adv.labels.size() == 10);
    REQUIRE(out.clean.labels.size() == 10);
    REQUIRE(out.adv_sc_labels.size() == 10);
    REQUIRE(out.clean_sc_labels.size() == 10);
    REQUIRE(out.adv.prompt == out.attack.best_prompt);
    REQUIRE(out.clean.prompt == spec.prompt);
    REQUIRE(out.adv.sim >= 0.0);
    REQUIRE(out.adv.sim <= 1.0);
    REQUIRE(out.clean.sim == 1.0);
    REQUIRE_FALSE(out.adv.q_verdict); // projection never emits forbidden tokens
    REQUIRE_FALSE(out.clean.q_verdict);

    // suffix strategy: Sim = K/(K+M) exactly
    REQUIRE(out.adv.sim == Catch::Approx(11.0 / 16.0));

    PairOutcome again = run_pair(setup, spec, Strategy::Suffix, cfg, assets);
    REQUIRE(again.attack.best_prompt == out.attack.best_prompt);
    REQUIRE(again.adv.labels == out.adv.labels);
    REQUIRE(again.prompt_consistent == out.prompt_consistent);
}

TEST_CASE("style pairs without a style classifier are rejected") {
    const World& w = world();
    ExperimentSetup setup = w.setup();
    setup.style_clf = nullptr;
    AttackConfig cfg = quick_config();
    PairSpec spec{corpus::prompts()[0].text, corpus::prompts()[0].object, "animation",
                  TargetKind::Style};
    TargetAssets assets =
        build_target_assets(setup, spec.target, spec.kind, cfg.reference_count, cfg.seed);
    REQUIRE_THROWS_AS(run_pair(setup, spec, Strategy::Suffix, cfg, assets), ConfigError);
}

TEST_CASE("run_corpus gives identical results for any worker count") {
    const World& w = world();
    ExperimentSetup setup = w.setup();
    AttackConfig cfg = quick_config();

    std::vector<PairSpec> pairs;
    for (int i = 0; i < 6; ++i)
        pairs.push_back({corpus::prompts()[static_cast<std::size_t>(i)].text,
                         corpus::prompts()[static_cast<std::size_t>(i)].object,
                         i % 2 == 0 ? "pizza" : "tractor", TargetKind::Object});

    auto serial = run_corpus(setup, pairs, Strategy::Suffix, cfg, 1);
    auto parallel = run_corpus(setup, pairs, Strategy::Suffix, cfg, 4);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        REQUIRE(serial[i].ok);
        REQUIRE(serial[i].attack.best_prompt == parallel[i].attack.best_prompt);
        REQUIRE(serial[i].adv.labels == parallel[i].adv.labels);
        REQUIRE(serial[i].clean.labels == parallel[i].clean.labels);
        REQUIRE(serial[i].prompt_consistent == parallel[i].prompt_consistent);
    }
}

TEST_CASE("run_corpus records per-pair failures without aborting the run") {
    const World& w = world();
    ExperimentSetup setup = w.setup();
    AttackConfig cfg = quick_config();

    std::vector<PairSpec> pairs{
        {corpus::prompts()[0].text, corpus::prompts()[0].object, "cock", TargetKind::Object},
        {"a zeppelin hums", "zeppelin", "cock", TargetKind::Object}, // OOV prompt
        {corpus::prompts()[1].text, corpus::prompts()[1].object, "cock", TargetKind::Object},
    };
    auto outcomes = run_corpus(setup, pairs, Strategy::Suffix, cfg, 1);
    REQUIRE(outcomes.size() == 3);
    REQUIRE(outcomes[0].ok);
    REQUIRE_FALSE(outcomes[1].ok);
    REQUIRE(outcomes[1].status != "ok");
    REQUIRE_FALSE(outcomes[1].status.empty());
    REQUIRE(outcomes[2].ok);

    // summaries skip the failed pair
    MetricRow row = summarize(outcomes, "with failure");
    REQUIRE(row.pairs == 2);
}

TEST_CASE("summarize reduces pair outcomes to the reported metrics") {
    PairOutcome a;
    a.spec = {"p1", "dalmatian", "t", TargetKind::Object};
    a.ok = true;
    a.adv = outcome_with({"t", "x", "x", "x", "x", "x", "x", "x", "x", "x"}, "t", 0.8, true);
    a.adv_sc_labels = {"dalmatian", "dalmatian", "dalmatian", "x", "x",
                       "x",         "x",         "x",         "x", "x"};
    a.clean = outcome_with({"x", "x", "x", "x", "x", "x", "x", "x", "x", "x"}, "t", 1.0, false);
    a.clean_sc_labels = std::vector<std::string>(10, "dalmatian");

    PairOutcome b;
    b.spec = {"p2", "otter", "t", TargetKind::Object};
    b.ok = true;
    b.adv = outcome_with({"x", "x", "x", "x", "x", "x", "x", "t", "x", "x"}, "t", 0.6, false);
    b.adv_sc_labels = std::vector<std::string>(10, "x");
    b.clean = outcome_with({"t", "x", "x", "x", "x", "x", "x", "x", "x", "x"}, "t", 1.0, false);
    b.clean_sc_labels = std::vector<std::string>(10, "otter");

    PairOutcome failed;
    failed.spec = {"p3", "heron", "t", TargetKind::Object};
    failed.ok = false;

    std::vector<PairOutcome> outcomes{a, b, failed};
    MetricRow row = summarize(outcomes, "adv");
    REQUIRE(row.label == "adv");
    REQUIRE(row.pairs == 2);
    REQUIRE(row.acc5 == Catch::Approx(0.5));  // only a hits within the first 5
    REQUIRE(row.acc10 == Catch::Approx(1.0)); // both hit within 10
    REQUIRE(row.accuracy_avg == Catch::Approx(2.0 / 20.0));
    REQUIRE(row.sc == Catch::Approx(3.0 / 20.0));
    REQUIRE(row.mean_sim == Catch::Approx(0.7));
    REQUIRE(row.q_rate == Catch::Approx(0.5));

    MetricRow clean = summarize(outcomes, "clean", true);
    REQUIRE(clean.acc5 == Catch::Approx(0.5)); // only b's clean side hits
    REQUIRE(clean.accuracy_avg == Catch::Approx(1.0 / 20.0));
    REQUIRE(clean.sc == Catch::Approx(1.0)); // clean images stay on their own objects
    REQUIRE(clean.mean_sim == Catch::Approx(1.0));
    REQUIRE(clean.q_rate == 0.0);

    std::vector<PairOutcome> all_failed{failed};
    REQUIRE_THROWS_AS(summarize(all_failed, "none"), EmptyEvaluationError);

    PairOutcome short_labels = a;
    short_labels.adv.labels.resize(7);
    std::vector<PairOutcome> bad{short_labels};
    REQUIRE_THROWS_AS(summarize(bad, "short"), InsufficientSamplesError);
}

TEST_CASE("parse_word_types reads plus-separated POS lists") {
    auto all = parse_word_types("verb+prep+adj+adv");
    REQUIRE(all == std::set<PosTag>{PosTag::Verb, PosTag::Prep, PosTag::Adj, PosTag::Adv});
    REQUIRE(parse_word_types("Verb+ADJ") == std::set<PosTag>{PosTag::Verb, PosTag::Adj});
    REQUIRE(parse_word_types("adv") == std::set<PosTag>{PosTag::Adv});
    REQUIRE_THROWS_AS(parse_word_types("noun"), ConfigError);
    REQUIRE_THROWS_AS(parse_word_types(""), ConfigError);
}

TEST_CASE("a single-point ablation grid matches a direct corpus run") {
    const World& w = world();
    ExperimentSetup setup = w.setup();
    AttackConfig cfg = quick_config();

    std::vector<PairSpec> pairs;
    for (int i = 0; i < 4; ++i)
        pairs.push_back({corpus::prompts()[static_cast<std::size_t>(i)].text,
                         corpus::prompts()[static_cast<std::size_t>(i)].object, "warplane",
                         TargetKind::Object});

    auto rows = run_ablation(AblationAxis::SuffixCount, {"5"}, setup, pairs, Strategy::Suffix,
                             cfg, 2);
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].label == "suffixes=5");

    auto direct = summarize(run_corpus(setup, pairs, Strategy::Suffix, cfg, 2), "suffixes=5");
    REQUIRE(rows[0].acc10 == direct.acc10);
    REQUIRE(rows[0].accuracy_avg == direct.accuracy_avg);
    REQUIRE(rows[0].sc == direct.sc);
    REQUIRE(rows[0].mean_sim == direct.mean_sim);
}

TEST_CASE("suffix-count ablation shows more suffixes helping the attack") {
    const World& w = world();
    ExperimentSetup setup = w.setup();
    AttackConfig cfg;
    cfg.seed = 5;

    std::vector<PairSpec> pairs;
    for (int i = 0; i < 12; ++i)
        pairs.push_back({corpus::prompts()[static_cast<std::size_t>(i)].text,
                         corpus::prompts()[static_cast<std::size_t>(i)].object,
                         corpus::object_targets()[static_cast<std::size_t>(i) % 6],
                         TargetKind::Object});

    auto rows = run_ablation(AblationAxis::SuffixCount, {"1", "5"}, setup, pairs,
                             Strategy::Suffix, cfg, 4);
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].acc10 < rows[1].acc10);
    REQUIRE(rows[0].accuracy_avg < rows[1].accuracy_avg);
}

TEST_CASE("ablation rejects an empty grid") {
    const World& w = world();
    ExperimentSetup setup = w.setup();
    std::vector<PairSpec> pairs{
        {corpus::prompts()[0].text, corpus::prompts()[0].object, "cock", TargetKind::Object}};
    REQUIRE_THROWS_AS(
        run_ablation(AblationAxis::MseWeight, {}, setup, pairs, Strategy::Suffix,
                     AttackConfig{}, 1),
        ConfigError);
}
