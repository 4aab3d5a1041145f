#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "advprompt/common.hpp"
#include "advprompt/encoder.hpp"
#include "advprompt/errors.hpp"
#include "advprompt/lexicon.hpp"
#include "advprompt/rng.hpp"
#include "advprompt/surrogate.hpp"

namespace advprompt {

enum class Strategy { Suffix, Substitute };

struct AttackConfig {
    int suffix_count = 5;        // M, optimizable suffix tokens
    int iterations = 500;        // I
    double learning_rate = 0.1;  // eta
    int mask_threshold = 9;      // tau, sign-vote cutoff for the object mask
    int augment_count = 10;      // L, augmented prompts voting on the mask
    int reference_count = 10;    // U, reference features per target
    std::set<PosTag> word_types = {PosTag::Verb, PosTag::Prep, PosTag::Adj, PosTag::Adv};
    std::uint64_t seed = 0;

    void validate() const {
        if (suffix_count < 1) throw ConfigError("suffix count must be at least 1");
        if (iterations < 1) throw ConfigError("iteration count must be at least 1");
        if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
        if (mask_threshold < 0 || mask_threshold > augment_count)
            throw ConfigError("mask threshold must lie in [0, augment count]");
        if (reference_count < 1) throw ConfigError("reference count must be at least 1");
        if (word_types.empty()) throw ConfigError("at least one substitutable word type required");
        for (PosTag t : word_types) {
            if (t == PosTag::Noun || t == PosTag::Other)
                throw ConfigError("only VERB, PREP, ADJ and ADV positions may be substituted");
        }
    }
};

// Which positions of the working sequence are optimizable. Non-slot positions
// always carry the clean prompt's tokens.
struct PerturbationPlan {
    std::vector<TokenId> base_ids; // the clean token sequence
    std::vector<int> slots;        // strictly increasing, within [0, total_len)
    int total_len = 0;

    bool is_slot(int pos) const {
        return std::binary_search(slots.begin(), slots.end(), pos);
    }
};

inline PerturbationPlan plan_word_substitution(std::span<const TokenId> ids,
                                               std::span<const PosTag> tags,
                                               const std::set<PosTag>& word_types) {
    if (ids.size() != tags.size())
        throw ConfigError("token and tag sequences differ in length");
    PerturbationPlan plan;
    plan.base_ids.assign(ids.begin(), ids.end());
    plan.total_len = static_cast<int>(ids.size());
    for (std::size_t p = 0; p < tags.size(); ++p) {
        const PosTag t = tags[p];
        if (t == PosTag::Noun || t == PosTag::Other) continue; // nouns are never replaced
        if (word_types.count(t)) plan.slots.push_back(static_cast<int>(p));
    }
    if (plan.slots.empty())
        throw NoPerturbableWordsError("prompt has no word of a substitutable type");
    return plan;
}

inline PerturbationPlan plan_suffix_addition(std::span<const TokenId> ids, int suffix_count,
                                             int max_len) {
    if (suffix_count < 1) throw ConfigError("suffix count must be at least 1");
    const int k = static_cast<int>(ids.size());
    if (k + suffix_count > max_len)
        throw SequenceLengthError("prompt of " + std::to_string(k) + " tokens plus " +
                                  std::to_string(suffix_count) + " suffixes exceeds limit " +
                                  std::to_string(max_len));
    PerturbationPlan plan;
    plan.base_ids.assign(ids.begin(), ids.end());
    plan.total_len = k + suffix_count;
    for (int p = k; p < plan.total_len; ++p) plan.slots.push_back(p);
    return plan;
}

// Slot rows start as embeddings of tokens drawn uniformly from the allowed
// set; non-slot rows carry the clean embeddings.
inline Mat init_noise(const PerturbationPlan& plan, const SearchSpace& space,
                      const Vocabulary& vocab, std::uint64_t seed) {
    if (space.allowed.empty())
        throw EmptySearchSpaceError("search space has no allowed tokens");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, space.allowed.size() - 1);
    Mat adv(plan.total_len, vocab.dim);
    for (int p = 0; p < plan.total_len; ++p) {
        const TokenId id = plan.is_slot(p) ? space.allowed[pick(rng)]
                                           : plan.base_ids[static_cast<std::size_t>(p)];
        adv.row(p) = vocab.embeddings.row(id);
    }
    return adv;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean cosine distance to the reference rows; 0 when aligned with every
// reference, up to 2 when anti-aligned.
inline double match_loss(const Vec& f_adv, const ReferenceSet& refs) {
    if (refs.count() < 1) throw ConfigError("reference set is empty");
    const double fn = f_adv.norm();
    if (fn == 0.0) throw NumericalError("cannot match a zero-norm feature");
    double total = 0.0;
    for (int u = 0; u < refs.count(); ++u) {
        const Vec r = refs.rows.row(u).transpose();
        total += 1.0 - r.dot(f_adv) / (r.norm() * fn);
    }
    return total / refs.count();
}

struct MatchObjective final : FeatureObjective {
    const ReferenceSet& refs;
    explicit MatchObjective(const ReferenceSet& r) : refs(r) {}

    double value(const Vec& f) const override { return match_loss(f, refs); }

    Vec gradient(const Vec& f) const override {
        const double fn = f.norm();
        if (fn == 0.0) throw NumericalError("cannot match a zero-norm feature");
        Vec g = Vec::Zero(f.size());
        for (int u = 0; u < refs.count(); ++u) {
            const Vec r = refs.rows.row(u).transpose();
            const double rn = r.norm();
            g -= r / (rn * fn) - r.dot(f) * f / (rn * fn * fn * fn);
        }
        return g / refs.count();
    }
};

struct ObjectMask {
    Vec bits; // length d_f, entries in {0,1}
    int active() const { return static_cast<int>(bits.sum()); }
};

// Sign vote across augmented-prompt features: a coordinate belongs to the
// original object iff the clean feature exceeds the augmented one in more
// than tau of the L comparisons (net of opposite votes; sign(0) counts 0).
inline ObjectMask compute_object_mask(const Vec& f_clean, const Mat& f_augs, int tau) {
    if (f_augs.rows() < 1) throw ConfigError("need at least one augmented feature");
    if (f_augs.cols() != f_clean.size())
        throw ConfigError("augmented feature width does not match the clean feature");
    if (tau < 0 || tau > f_augs.rows())
        throw ConfigError("mask threshold must lie in [0, augment count]");
    ObjectMask mask;
    mask.bits = Vec::Zero(f_clean.size());
    for (Eigen::Index j = 0; j < f_clean.size(); ++j) {
        int vote = 0;
        for (Eigen::Index l = 0; l < f_augs.rows(); ++l) {
            const double diff = f_clean(j) - f_augs(l, j);
            if (diff > 0.0) ++vote;
            else if (diff < 0.0) --vote;
        }
        if (vote > tau) mask.bits(j) = 1.0;
    }
    return mask;
}

inline double mse_loss(const Vec& f_clean, const Vec& f_adv, const ObjectMask& mask) {
    if (f_clean.size() != f_adv.size() || f_clean.size() != mask.bits.size())
        throw ConfigError("feature/mask dimensions disagree");
    return (f_clean - f_adv).cwiseProduct(mask.bits).squaredNorm() /
           static_cast<double>(f_clean.size());
}

inline double style_loss(const Vec& f_adv, const ReferenceSet& refs, const Vec& f_clean,
                         const ObjectMask& mask) {
    return match_loss(f_adv, refs) + mse_loss(f_clean, f_adv, mask);
}

// Style objective: push toward the style references while pinning the masked
// (object-salient) feature coordinates to the clean prompt. mse_weight 0
// recovers the pure matching objective for the ablation.
struct StyleObjective final : FeatureObjective {
    const ReferenceSet& refs;
    Vec f_clean;
    ObjectMask mask;
    double mse_weight = 1.0;

    StyleObjective(const ReferenceSet& r, Vec clean, ObjectMask m, double w)
        : refs(r), f_clean(std::move(clean)), mask(std::move(m)), mse_weight(w) {}

    double value(const Vec& f) const override {
        return match_loss(f, refs) + mse_weight * mse_loss(f_clean, f, mask);
    }

    Vec gradient(const Vec& f) const override {
        Vec g = MatchObjective(refs).gradient(f);
        g += mse_weight * 2.0 / static_cast<double>(f.size()) *
             (f - f_clean).cwiseProduct(mask.bits);
        return g;
    }
};

// L copies of ids with the object position replaced by distinct pool words.
// Pool words that are out-of-vocabulary or equal to the original object are
// unusable and do not count toward L.
inline std::vector<std::vector<TokenId>> augment_prompts(const Vocabulary& vocab,
                                                         std::span<const TokenId> ids,
                                                         int object_pos,
                                                         const std::vector<std::string>& pool,
                                                         int count, std::uint64_t seed) {
    if (count < 1) throw ConfigError("augmentation count must be at least 1");
    if (object_pos < 0 || object_pos >= static_cast<int>(ids.size()))
        throw ConfigError("object position out of range");
    const TokenId original = ids[static_cast<std::size_t>(object_pos)];

    std::vector<TokenId> candidates;
    std::set<TokenId> seen;
    for (const std::string& raw : pool) {
        const std::string w = normalize_word(raw);
        const TokenId id = vocab.id_of(w);
        if (id == Vocabulary::unk || id == original) continue;
        if (seen.insert(id).second) candidates.push_back(id);
    }
    if (static_cast<int>(candidates.size()) < count)
        throw PoolExhaustedError("augmentation pool has " + std::to_string(candidates.size()) +
                                 " usable words, need " + std::to_string(count));

    std::mt19937_64 rng(seed);
    for (int i = 0; i < count; ++i) { // partial Fisher-Yates
        std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i),
                                                        candidates.size() - 1);
        std::swap(candidates[static_cast<std::size_t>(i)], candidates[pick(rng)]);
    }

    std::vector<std::vector<TokenId>> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        std::vector<TokenId> aug(ids.begin(), ids.end());
        aug[static_cast<std::size_t>(object_pos)] = candidates[static_cast<std::size_t>(i)];
        out.push_back(std::move(aug));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Proxy projection
// ---------------------------------------------------------------------------

// Allowed tokens ordered by string so that a first-strict-max scan over the
// scores lands on the lexicographically smallest among cosine ties.
struct ProjectionIndex {
    std::vector<TokenId> ids;
    Mat units; // one unit-norm embedding row per allowed token
};

inline ProjectionIndex make_projection_index(const SearchSpace& space, const Vocabulary& vocab) {
    if (space.allowed.empty())
        throw EmptySearchSpaceError("search space has no allowed tokens");
    ProjectionIndex idx;
    idx.ids = space.allowed;
    std::sort(idx.ids.begin(), idx.ids.end(), [&](TokenId a, TokenId b) {
        return vocab.tokens[static_cast<std::size_t>(a)] <
               vocab.tokens[static_cast<std::size_t>(b)];
    });
    idx.units.resize(static_cast<Eigen::Index>(idx.ids.size()), vocab.dim);
    for (std::size_t i = 0; i < idx.ids.size(); ++i) {
        const auto row = vocab.embeddings.row(idx.ids[i]);
        idx.units.row(static_cast<Eigen::Index>(i)) = row / row.norm();
    }
    return idx;
}

inline TokenId project_row(const ProjectionIndex& idx, const Vec& row) {
    const double n = row.norm();
    if (n == 0.0) throw NumericalError("cannot project a zero-norm embedding row");
    const Vec scores = idx.units * (row / n);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i) {
        if (scores(i) > scores(best)) best = i;
    }
    return idx.ids[static_cast<std::size_t>(best)];
}

inline std::vector<TokenId> project_with_index(const Mat& adv_emb, const PerturbationPlan& plan,
                                               const ProjectionIndex& idx) {
    if (adv_emb.rows() != plan.total_len)
        throw ConfigError("embedding rows do not match the plan length");
    std::vector<TokenId> proxy(static_cast<std::size_t>(plan.total_len));
    for (int p = 0; p < plan.total_len; ++p) {
        proxy[static_cast<std::size_t>(p)] =
            plan.is_slot(p) ? project_row(idx, adv_emb.row(p).transpose())
                            : plan.base_ids[static_cast<std::size_t>(p)];
    }
    return proxy;
}

inline std::vector<TokenId> project_to_proxy(const Mat& adv_emb, const PerturbationPlan& plan,
                                             const SearchSpace& space, const Vocabulary& vocab) {
    return project_with_index(adv_emb, plan, make_projection_index(space, vocab));
}

// ---------------------------------------------------------------------------
// Optimization loop
// ---------------------------------------------------------------------------

struct AttackState {
    Mat adv_emb;
    std::vector<TokenId> proxy_ids;
    int iteration = 0;
    std::vector<double> loss_trace;
    PerturbationPlan plan;
};

// Thrown when the loop hits a non-finite loss or gradient; carries whatever
// part of the loss trace was recorded before the abort.
struct OptimizationAborted : NumericalError {
    std::vector<double> partial_trace;
    OptimizationAborted(const std::string& msg, std::vector<double> trace)
        : NumericalError(msg), partial_trace(std::move(trace)) {}
};

// Extra inputs for style-mode attacks: which word the clean prompt is about
// and which words may stand in for it when voting on the object mask.
struct StyleContext {
    std::string original_object;
    std::vector<std::string> augmentation_pool;
    double mse_weight = 1.0;
};

struct AttackResult {
    std::string best_prompt;
    std::string final_prompt;
    std::vector<TokenId> best_ids;
    std::vector<TokenId> final_ids;
    double loss_initial = 0.0;
    double loss_best = 0.0;
    double loss_final = 0.0;
    int best_iteration = 0;
    bool q_verdict = false;
    AttackState state;
};

// The straight-through loop: project the continuous state onto the nearest
// allowed tokens, evaluate loss and gradient at that proxy, then apply the
// gradient step to the continuous slot rows. The reported prompt is the
// best-loss proxy seen across all iterations (earliest on ties).
inline AttackResult optimize(const std::string& prompt, const std::string& target,
                             TargetKind mode, Strategy strategy, const AttackConfig& cfg,
                             const Vocabulary& vocab, const TextEncoder& enc,
                             const SearchSpace& space, const ReferenceSet& refs,
                             const PosLexicon* pos_lex = nullptr,
                             const StyleContext* style = nullptr) {
    cfg.validate();
    (void)target;

    const std::vector<std::string> words = normalize_words(prompt);
    const std::vector<TokenId> ids = tokenize(vocab, prompt);
    for (std::size_t p = 0; p < ids.size(); ++p) {
        if (ids[p] == Vocabulary::unk)
            throw UnknownWordError("prompt word is out of vocabulary: " + words[p]);
    }

    PerturbationPlan plan;
    if (strategy == Strategy::Suffix) {
        plan = plan_suffix_addition(ids, cfg.suffix_count, enc.cfg.max_len);
    } else {
        if (pos_lex == nullptr)
            throw ConfigError("word substitution requires a part-of-speech lexicon");
        plan = plan_word_substitution(ids, pos_tag(words, *pos_lex), cfg.word_types);
    }

    std::unique_ptr<FeatureObjective> objective;
    if (mode == TargetKind::Object) {
        objective = std::make_unique<MatchObjective>(refs);
    } else {
        if (style == nullptr)
            throw ConfigError("style attacks require a style context");
        const TokenId obj_id = vocab.id_of(normalize_word(style->original_object));
        if (obj_id == Vocabulary::unk)
            throw UnknownWordError("original object is out of vocabulary: " +
                                   style->original_object);
        int object_pos = -1;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            if (ids[p] == obj_id) {
                object_pos = static_cast<int>(p);
                break;
            }
        }
        if (object_pos < 0)
            throw ConfigError("original object does not occur in the prompt: " +
                              style->original_object);
        const Vec f_clean = encode_ids(enc, vocab, ids);
        const auto augmented =
            augment_prompts(vocab, ids, object_pos, style->augmentation_pool, cfg.augment_count,
                            mix_seed(cfg.seed, 0xA09));
        Mat f_augs(static_cast<Eigen::Index>(augmented.size()), enc.cfg.feature_dim);
        for (std::size_t l = 0; l < augmented.size(); ++l)
            f_augs.row(static_cast<Eigen::Index>(l)) =
                encode_ids(enc, vocab, augmented[l]).transpose();
        ObjectMask mask = compute_object_mask(f_clean, f_augs, cfg.mask_threshold);
        objective = std::make_unique<StyleObjective>(refs, f_clean, std::move(mask),
                                                     style->mse_weight);
    }

    const ProjectionIndex idx = make_projection_index(space, vocab);

    AttackResult result;
    AttackState& state = result.state;
    state.plan = plan;
    state.adv_emb = init_noise(plan, space, vocab, mix_seed(cfg.seed, 0x1A17));
    state.loss_trace.reserve(static_cast<std::size_t>(cfg.iterations));

    double best_loss = std::numeric_limits<double>::infinity();
    for (int i = 0; i < cfg.iterations; ++i) {
        state.proxy_ids = project_with_index(state.adv_emb, plan, idx);
        const Mat proxy_emb = embed(vocab, state.proxy_ids);
        InputGradient ig;
        try {
            ig = grad_wrt_inputs(enc, proxy_emb, *objective);
        } catch (const NumericalError& e) {
            throw OptimizationAborted(std::string(e.what()) + " at iteration " +
                                          std::to_string(i),
                                      state.loss_trace);
        }
        state.loss_trace.push_back(ig.loss);
        if (ig.loss < best_loss) {
            best_loss = ig.loss;
            result.best_iteration = i;
            result.best_ids = state.proxy_ids;
        }
        for (int s : plan.slots) {
            state.adv_emb.row(s) -= cfg.learning_rate * ig.grad.row(s);
        }
        state.iteration = i + 1;
    }

    result.final_ids = state.proxy_ids;
    result.best_prompt = detokenize(result.best_ids, vocab);
    result.final_prompt = detokenize(result.final_ids, vocab);
    result.loss_initial = state.loss_trace.front();
    result.loss_best = best_loss;
    result.loss_final = state.loss_trace.back();
    result.q_verdict = keyword_detect(result.best_prompt, space);
    return result;
}

} // namespace advprompt
