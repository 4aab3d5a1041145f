#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "advprompt/attack.hpp"
#include "advprompt/common.hpp"
#include "advprompt/encoder.hpp"
#include "advprompt/errors.hpp"
#include "advprompt/lexicon.hpp"
#include "advprompt/rng.hpp"
#include "advprompt/surrogate.hpp"

namespace advprompt {

struct EvalOutcome {
    std::string prompt;
    std::string target;
    std::vector<std::string> labels; // one classifier label per generated image
    double sim = 1.0;
    bool q_verdict = false;
};

// Fraction of outcomes whose first K labels contain the target at least once.
inline double acc_k(std::span<const EvalOutcome> outcomes, const std::string& target, int k) {
    if (k < 1) throw ConfigError("K must be at least 1");
    if (outcomes.empty()) throw EmptyEvaluationError("no outcomes to evaluate");
    int hits = 0;
    for (const EvalOutcome& o : outcomes) {
        if (static_cast<int>(o.labels.size()) < k)
            throw InsufficientSamplesError("outcome has " + std::to_string(o.labels.size()) +
                                           " labels, need K=" + std::to_string(k));
        for (int i = 0; i < k; ++i) {
            if (o.labels[static_cast<std::size_t>(i)] == target) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

// Pooled per-image rate of the target label across all outcomes.
inline double acc_avg(std::span<const EvalOutcome> outcomes, const std::string& target) {
    if (outcomes.empty()) throw EmptyEvaluationError("no outcomes to evaluate");
    std::size_t hits = 0;
    std::size_t total = 0;
    for (const EvalOutcome& o : outcomes) {
        if (o.labels.empty()) throw EmptyEvaluationError("outcome has no labels");
        total += o.labels.size();
        for (const std::string& l : o.labels) {
            if (l == target) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

// Same per-image rate, but against the clean prompt's original object; the
// labels are expected to come from the object classifier.
inline double semantic_consistency(std::span<const EvalOutcome> outcomes,
                                   const std::string& original_object) {
    return acc_avg(outcomes, original_object);
}

// Observation-2 probe: does the adversarial prompt's own text feature already
// classify as the target?
inline bool prompt_semantic_check(const std::string& prompt, const ZeroShotClassifier& clf,
                                  const std::string& target, const TextEncoder& enc,
                                  const Vocabulary& vocab) {
    return classify(clf, encode_text(enc, vocab, prompt)) == target;
}

// ---------------------------------------------------------------------------
// Corpus runner
// ---------------------------------------------------------------------------

// Everything one experiment shares across its (prompt, target) pairs.
struct ExperimentSetup {
    const Vocabulary* vocab = nullptr;
    const TextEncoder* enc = nullptr;
    const SynonymModel* synonyms = nullptr;
    const PosLexicon* pos = nullptr;
    const ZeroShotClassifier* object_clf = nullptr;
    const ZeroShotClassifier* style_clf = nullptr;
    GenerationOracle oracle;                    // sigma_gen and sampling seed
    int images = 10;                            // N generated images per prompt
    int neighbors = 10;                         // H forbidden-word neighbors
    double sigma_ref = 0.1;                     // reference-set jitter
    std::vector<std::string> augmentation_pool; // object stand-ins (style mode)

    void validate() const {
        if (!vocab || !enc || !synonyms || !object_clf)
            throw ConfigError("experiment setup is missing a collaborator");
        if (images < 1) throw ConfigError("need at least one image per prompt");
        if (neighbors < 1) throw ConfigError("need at least one forbidden neighbor");
        if (sigma_ref < 0.0) throw ConfigError("reference jitter must be non-negative");
    }
};

struct PairSpec {
    std::string prompt;
    std::string object; // the clean prompt's original object
    std::string target;
    TargetKind kind = TargetKind::Object;
};

// Search space and reference set for one target, shared by all its pairs.
struct TargetAssets {
    SearchSpace space;
    ReferenceSet refs;
};

inline TargetAssets build_target_assets(const ExperimentSetup& setup, const std::string& target,
                                        TargetKind kind, int reference_count,
                                        std::uint64_t seed) {
    TargetAssets assets;
    assets.space = build_search_space(*setup.vocab, *setup.synonyms, target, setup.neighbors);
    assets.refs = make_reference_set(*setup.enc, *setup.vocab, target, kind, reference_count,
                                     setup.sigma_ref, mix_seed(seed, fnv1a64(target)));
    return assets;
}

struct PairOutcome {
    PairSpec spec;
    bool ok = false;
    std::string status = "ok"; // or the error message for failed pairs
    bool aborted = false;      // failure was a numerical abort, not a config/input problem
    AttackResult attack;
    EvalOutcome adv;                          // labels from the mode's classifier
    EvalOutcome clean;                        // same classifier, clean prompt
    std::vector<std::string> adv_sc_labels;   // object-classifier labels
    std::vector<std::string> clean_sc_labels;
    bool prompt_consistent = false;           // Observation-2 text-side check
};

namespace detail {

inline std::vector<std::string> label_samples(const ExperimentSetup& setup,
                                              const ZeroShotClassifier& clf, const Vec& feature) {
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(setup.images));
    for (int i = 0; i < setup.images; ++i) {
        labels.push_back(classify(clf, sample_image_feature(setup.oracle, feature, i)));
    }
    return labels;
}

} // namespace detail

// One full pair: run the attack, then generate and label N images for both
// the adversarial and clean prompts.
inline PairOutcome run_pair(const ExperimentSetup& setup, const PairSpec& spec,
                            Strategy strategy, const AttackConfig& cfg,
                            const TargetAssets& assets, double mse_weight = 1.0) {
    setup.validate();
    if (spec.kind == TargetKind::Style && setup.style_clf == nullptr)
        throw ConfigError("style pairs need a style classifier");
    const ZeroShotClassifier& mode_clf =
        spec.kind == TargetKind::Style ? *setup.style_clf : *setup.object_clf;

    PairOutcome out;
    out.spec = spec;

    StyleContext style;
    const StyleContext* style_ptr = nullptr;
    if (spec.kind == TargetKind::Style) {
        style.original_object = spec.object;
        style.augmentation_pool = setup.augmentation_pool;
        style.mse_weight = mse_weight;
        style_ptr = &style;
    }

    out.attack = optimize(spec.prompt, spec.target, spec.kind, strategy, cfg, *setup.vocab,
                          *setup.enc, assets.space, assets.refs, setup.pos, style_ptr);

    const Vec f_adv = encode_text(*setup.enc, *setup.vocab, out.attack.best_prompt);
    const Vec f_clean = encode_text(*setup.enc, *setup.vocab, spec.prompt);

    out.adv.prompt = out.attack.best_prompt;
    out.adv.target = spec.target;
    out.adv.labels = detail::label_samples(setup, mode_clf, f_adv);
    out.adv.sim = prompt_similarity(spec.prompt, out.attack.best_prompt);
    out.adv.q_verdict = out.attack.q_verdict;

    out.clean.prompt = spec.prompt;
    out.clean.target = spec.target;
    out.clean.labels = detail::label_samples(setup, mode_clf, f_clean);
    out.clean.sim = 1.0;
    out.clean.q_verdict = keyword_detect(spec.prompt, assets.space);

    out.adv_sc_labels = detail::label_samples(setup, *setup.object_clf, f_adv);
    out.clean_sc_labels = detail::label_samples(setup, *setup.object_clf, f_clean);
    out.prompt_consistent = prompt_semantic_check(out.attack.best_prompt, mode_clf, spec.target,
                                                  *setup.enc, *setup.vocab);
    out.ok = true;
    return out;
}

// Runs every pair with a deterministic per-pair seed; identical results for
// any worker count. Per-pair errors are recorded, not rethrown.
inline std::vector<PairOutcome> run_corpus(const ExperimentSetup& setup,
                                           const std::vector<PairSpec>& pairs, Strategy strategy,
                                           const AttackConfig& cfg, int workers = 1,
                                           double mse_weight = 1.0) {
    setup.validate();
    cfg.validate();
    if (workers < 1) throw ConfigError("worker count must be at least 1");

    // target assets are shared and must exist before the parallel section
    std::vector<std::pair<std::string, TargetKind>> keys;
    std::vector<TargetAssets> assets;
    auto asset_index = [&](const PairSpec& spec) {
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (keys[i].first == spec.target && keys[i].second == spec.kind)
                return i;
        }
        keys.emplace_back(spec.target, spec.kind);
        assets.push_back(
            build_target_assets(setup, spec.target, spec.kind, cfg.reference_count, cfg.seed));
        return keys.size() - 1;
    };
    std::vector<std::size_t> pair_assets;
    pair_assets.reserve(pairs.size());
    for (const PairSpec& spec : pairs) pair_assets.push_back(asset_index(spec));

    std::vector<PairOutcome> results(pairs.size());
    auto run_one = [&](std::size_t i) {
        AttackConfig pair_cfg = cfg;
        pair_cfg.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i));
        try {
            results[i] = run_pair(setup, pairs[i], strategy, pair_cfg, assets[pair_assets[i]],
                                  mse_weight);
        } catch (const Error& e) {
            results[i].spec = pairs[i];
            results[i].ok = false;
            results[i].status = e.what();
            results[i].aborted = dynamic_cast<const NumericalError*>(&e) != nullptr;
        }
    };

    if (workers == 1 || pairs.size() <= 1) {
        for (std::size_t i = 0; i < pairs.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next.fetch_add(1); i < pairs.size(); i = next.fetch_add(1))
                run_one(i);
        };
        std::vector<std::thread> threads;
        const int n = std::min<int>(workers, static_cast<int>(pairs.size()));
        threads.reserve(static_cast<std::size_t>(n));
        for (int t = 0; t < n; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return results;
}

// ---------------------------------------------------------------------------
// Metric summaries and ablation sweeps
// ---------------------------------------------------------------------------

struct MetricRow {
    std::string label;
    int pairs = 0;
    double acc5 = 0.0;
    double acc10 = 0.0;
    double accuracy_avg = 0.0;
    double sc = 0.0;
    double mean_sim = 0.0;
    double q_rate = 0.0;
};

// Aggregates completed pairs; adversarial accuracy against each pair's own
// target, SC against each pair's original object.
inline MetricRow summarize(std::span<const PairOutcome> outcomes, const std::string& label,
                           bool clean_side = false) {
    MetricRow row;
    row.label = label;
    std::size_t total_labels = 0, hits = 0, hits5 = 0, hits10 = 0, sc_hits = 0, sc_total = 0,
                q_fires = 0;
    double sim_sum = 0.0;
    for (const PairOutcome& o : outcomes) {
        if (!o.ok) continue;
        const EvalOutcome& e = clean_side ? o.clean : o.adv;
        const std::vector<std::string>& sc_labels =
            clean_side ? o.clean_sc_labels : o.adv_sc_labels;
        if (static_cast<int>(e.labels.size()) < 10)
            throw InsufficientSamplesError("summary needs at least 10 labels per outcome");
        ++row.pairs;
        bool hit5 = false, hit10 = false;
        for (std::size_t i = 0; i < e.labels.size(); ++i) {
            const bool hit = e.labels[i] == e.target;
            hits += hit;
            if (hit && i < 5) hit5 = true;
            if (hit && i < 10) hit10 = true;
        }
        total_labels += e.labels.size();
        hits5 += hit5;
        hits10 += hit10;
        for (const std::string& l : sc_labels) sc_hits += (l == o.spec.object);
        sc_total += sc_labels.size();
        sim_sum += e.sim;
        q_fires += e.q_verdict;
    }
    if (row.pairs == 0) throw EmptyEvaluationError("no completed pairs to summarize");
    row.acc5 = static_cast<double>(hits5) / row.pairs;
    row.acc10 = static_cast<double>(hits10) / row.pairs;
    row.accuracy_avg = static_cast<double>(hits) / static_cast<double>(total_labels);
    row.sc = static_cast<double>(sc_hits) / static_cast<double>(sc_total);
    row.mean_sim = sim_sum / row.pairs;
    row.q_rate = static_cast<double>(q_fires) / row.pairs;
    return row;
}

enum class AblationAxis { MseWeight, WordTypes, SuffixCount };

inline std::set<PosTag> parse_word_types(const std::string& spec) {
    std::set<PosTag> types;
    std::string current;
    auto flush = [&] {
        if (current.empty()) return;
        if (current == "verb") types.insert(PosTag::Verb);
        else if (current == "prep") types.insert(PosTag::Prep);
        else if (current == "adj") types.insert(PosTag::Adj);
        else if (current == "adv") types.insert(PosTag::Adv);
        else throw ConfigError("unknown word type: " + current);
        current.clear();
    };
    for (char c : spec) {
        if (c == '+') flush();
        else current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    flush();
    if (types.empty()) throw ConfigError("empty word-type list: " + spec);
    return types;
}

// One metric row per grid point, all points sharing the same per-pair seeds
// so the swept axis is the only difference.
inline std::vector<MetricRow> run_ablation(AblationAxis axis,
                                           const std::vector<std::string>& grid,
                                           const ExperimentSetup& setup,
                                           const std::vector<PairSpec>& pairs,
                                           Strategy strategy, const AttackConfig& base,
                                           int workers = 1) {
    if (grid.empty()) throw ConfigError("ablation grid is empty");
    std::vector<MetricRow> rows;
    rows.reserve(grid.size());
    for (const std::string& point : grid) {
        AttackConfig cfg = base;
        Strategy strat = strategy;
        double mse_weight = 1.0;
        std::string label;
        switch (axis) {
            case AblationAxis::MseWeight:
                mse_weight = std::stod(point);
                label = "mse_weight=" + point;
                break;
            case AblationAxis::SuffixCount:
                cfg.suffix_count = std::stoi(point);
                strat = Strategy::Suffix;
                label = "suffixes=" + point;
                break;
            case AblationAxis::WordTypes:
                cfg.word_types = parse_word_types(point);
                strat = Strategy::Substitute;
                label = "word_types=" + point;
                break;
        }
        cfg.validate();
        auto outcomes = run_corpus(setup, pairs, strat, cfg, workers, mse_weight);
        rows.push_back(summarize(outcomes, label));
    }
    return rows;
}

} // namespace advprompt
