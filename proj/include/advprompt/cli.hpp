#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "advprompt/corpus.hpp"
#include "advprompt/eval.hpp"
#include "advprompt/report.hpp"

// Command-line front end: `attack` runs the corpus and writes line-delimited
// JSON records; `eval` and `probe` read them back; `build-space` and
// `make-corpus` export the filtered search space and the bundled corpus.

namespace advprompt::cli {

struct PromptEntry {
    std::string object;
    std::string text;
};

inline std::vector<PromptEntry> load_prompts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open prompts file: " + path);
    std::vector<PromptEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw IoError(path + ":" + std::to_string(lineno) +
                          ": expected 'object<TAB>prompt'");
        PromptEntry e{line.substr(0, tab), line.substr(tab + 1)};
        if (e.object.empty() || e.text.empty())
            throw IoError(path + ":" + std::to_string(lineno) + ": empty object or prompt");
        entries.push_back(std::move(e));
    }
    if (entries.empty()) throw IoError(path + ": no prompts found");
    return entries;
}

inline void save_prompts(const std::vector<PromptEntry>& entries, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write prompts file: " + path);
    for (const PromptEntry& e : entries) out << e.object << '\t' << e.text << '\n';
    if (!out) throw IoError("failed while writing " + path);
}

// Everything the attack command needs, loaded from configured paths or built
// from the bundled corpus when a path is left empty.
struct World {
    Vocabulary vocab;
    SynonymModel synonyms;
    PosLexicon pos;
    TextEncoder enc;
    ZeroShotClassifier object_clf;
    ZeroShotClassifier style_clf;
    std::vector<PromptEntry> prompts;
};

inline World load_world(const RunConfig& cfg) {
    World w;
    w.vocab =
        cfg.vocab_path.empty() ? corpus::build_vocabulary() : load_vocabulary(cfg.vocab_path);
    w.synonyms = cfg.synonyms_path.empty() ? corpus::build_synonym_model()
                                           : load_synonyms(cfg.synonyms_path);
    w.pos = cfg.pos_path.empty() ? corpus::build_pos_lexicon() : load_pos_lexicon(cfg.pos_path);
    w.enc = TextEncoder(EncoderConfig{});
    w.object_clf = corpus::build_object_classifier(w.enc, w.vocab);
    w.style_clf = corpus::build_style_classifier(w.enc, w.vocab);
    if (cfg.prompts_path.empty()) {
        for (const auto& p : corpus::prompts()) w.prompts.push_back({p.object, p.text});
    } else {
        w.prompts = load_prompts(cfg.prompts_path);
    }
    return w;
}

inline constexpr std::uint64_t kOracleSeedSalt = 0x6F7261636C65ULL;

inline ExperimentSetup make_setup(const World& w, const RunConfig& cfg) {
    ExperimentSetup setup;
    setup.vocab = &w.vocab;
    setup.enc = &w.enc;
    setup.synonyms = &w.synonyms;
    setup.pos = &w.pos;
    setup.object_clf = &w.object_clf;
    setup.style_clf = &w.style_clf;
    setup.oracle = GenerationOracle{cfg.sigma_gen, mix_seed(cfg.seed, kOracleSeedSalt)};
    setup.images = cfg.images;
    setup.neighbors = cfg.neighbors;
    setup.sigma_ref = cfg.sigma_ref;
    setup.augmentation_pool = corpus::augmentation_pool();
    setup.validate();
    return setup;
}

inline std::vector<PairSpec> make_pairs(const World& w, const RunConfig& cfg) {
    const TargetKind kind = cfg.mode == "style" ? TargetKind::Style : TargetKind::Object;
    std::vector<std::string> targets = cfg.targets;
    if (targets.empty())
        targets = kind == TargetKind::Style ? corpus::style_targets() : corpus::object_targets();
    std::vector<PairSpec> pairs;
    for (const std::string& target : targets)
        for (const PromptEntry& p : w.prompts) pairs.push_back({p.text, p.object, target, kind});
    return pairs;
}

namespace detail {

// Single appender for all record output: stdout by default, a file with --out.
struct RecordWriter {
    std::ofstream file;
    std::ostream* out = &std::cout;

    explicit RecordWriter(const std::string& path) {
        if (path.empty() || path == "-") return;
        file.open(path);
        if (!file) throw IoError("cannot write output file: " + path);
        out = &file;
    }

    void line(const std::string& s) {
        (*out) << s << '\n';
        if (out->fail()) throw IoError("failed while writing records");
    }
};

inline std::string format_row(const std::string& label, int pairs, double acc5, double acc10,
                              double acc_avg, double sc, double sim, double q) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-22s %6d %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f",
                  label.c_str(), pairs, acc5, acc10, acc_avg, sc, sim, q);
    return buf;
}

inline std::vector<PairOutcome> outcomes_from_reports(const std::vector<std::string>& paths) {
    std::vector<PairOutcome> outcomes;
    for (const std::string& path : paths) {
        ReportFile report = load_report(path);
        for (const json& j : report.pairs) outcomes.push_back(outcome_from_record(j));
    }
    if (outcomes.empty())
        throw InsufficientSamplesError("no pair records found in the given reports");
    return outcomes;
}

} // namespace detail

inline int cmd_attack(const RunConfig& cfg) {
    const World w = load_world(cfg);
    const ExperimentSetup setup = make_setup(w, cfg);
    const AttackConfig attack_cfg = make_attack_config(cfg);
    const Strategy strategy =
        cfg.strategy == "substitute" ? Strategy::Substitute : Strategy::Suffix;
    const std::vector<PairSpec> pairs = make_pairs(w, cfg);

    const auto outcomes =
        run_corpus(setup, pairs, strategy, attack_cfg, cfg.workers, cfg.mse_weight);

    detail::RecordWriter writer(cfg.out_path);
    const std::string hash = config_hash(cfg);
    writer.line(header_record(cfg, "attack").dump());
    int failed = 0, aborted = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        writer.line(pair_record(outcomes[i], i, cfg, hash).dump());
        failed += !outcomes[i].ok;
        aborted += outcomes[i].aborted;
    }
    std::cerr << "attack: " << outcomes.size() << " pairs, " << (outcomes.size() - failed)
              << " ok, " << failed << " failed, " << aborted << " aborted\n";
    return aborted > 0 ? 2 : 0;
}

inline int cmd_eval(const std::vector<std::string>& report_paths,
                    const std::vector<std::string>& target_filter, const std::string& out_path) {
    std::vector<PairOutcome> outcomes = detail::outcomes_from_reports(report_paths);
    if (!target_filter.empty()) {
        std::vector<PairOutcome> kept;
        for (PairOutcome& o : outcomes)
            if (std::find(target_filter.begin(), target_filter.end(), o.spec.target) !=
                target_filter.end())
                kept.push_back(std::move(o));
        outcomes = std::move(kept);
        if (outcomes.empty())
            throw InsufficientSamplesError("no records match the target filter");
    }

    std::set<std::string> targets;
    for (const PairOutcome& o : outcomes) targets.insert(o.spec.target);

    std::vector<MetricRow> rows;
    for (const std::string& target : targets) {
        std::vector<PairOutcome> slice;
        for (const PairOutcome& o : outcomes)
            if (o.spec.target == target) slice.push_back(o);
        rows.push_back(summarize(slice, target));
    }
    rows.push_back(summarize(outcomes, "overall"));
    rows.push_back(summarize(outcomes, "clean", true));

    char head[160];
    std::snprintf(head, sizeof(head), "%-22s %6s %8s %8s %8s %8s %8s %8s", "target", "pairs",
                  "acc-5", "acc-10", "acc-avg", "SC", "Sim", "Q-rate");
    std::cout << head << '\n';
    for (const MetricRow& r : rows)
        std::cout << detail::format_row(r.label, r.pairs, r.acc5, r.acc10, r.accuracy_avg, r.sc,
                                        r.mean_sim, r.q_rate)
                  << '\n';

    if (!out_path.empty()) {
        detail::RecordWriter writer(out_path);
        for (const MetricRow& r : rows) {
            json j;
            j["record"] = "metrics";
            j["label"] = r.label;
            j["pairs"] = r.pairs;
            j["acc_5"] = r.acc5;
            j["acc_10"] = r.acc10;
            j["acc_avg"] = r.accuracy_avg;
            j["sc"] = r.sc;
            j["sim"] = r.mean_sim;
            j["q_rate"] = r.q_rate;
            writer.line(j.dump());
        }
    }
    return 0;
}

inline int cmd_probe(const std::vector<std::string>& report_paths, const std::string& out_path) {
    std::vector<PairOutcome> outcomes;
    std::vector<int> suffix_counts;
    for (const std::string& path : report_paths) {
        ReportFile report = load_report(path);
        for (const json& j : report.pairs) {
            outcomes.push_back(outcome_from_record(j));
            suffix_counts.push_back(j.value("suffixes", 0));
        }
    }
    if (outcomes.empty())
        throw InsufficientSamplesError("no pair records found in the given reports");

    std::map<int, std::vector<std::size_t>> by_m;
    for (std::size_t i = 0; i < outcomes.size(); ++i) by_m[suffix_counts[i]].push_back(i);

    struct ProbeRow {
        std::string suffixes;
        std::string stratum;
        int pairs = 0;
        double acc10 = 0.0;
    };
    std::vector<ProbeRow> rows;
    auto add_strata = [&](const std::string& label, const std::vector<std::size_t>& idx) {
        std::vector<PairOutcome> all, consistent;
        for (std::size_t i : idx) {
            if (!outcomes[i].ok) continue;
            all.push_back(outcomes[i]);
            if (outcomes[i].prompt_consistent) consistent.push_back(outcomes[i]);
        }
        if (!all.empty())
            rows.push_back({label, "all", static_cast<int>(all.size()),
                            summarize(all, label).acc10});
        if (!consistent.empty()) // empty stratum: row omitted
            rows.push_back({label, "consistent", static_cast<int>(consistent.size()),
                            summarize(consistent, label).acc10});
    };
    for (const auto& [m, idx] : by_m) add_strata(std::to_string(m), idx);
    if (by_m.size() > 1) {
        std::vector<std::size_t> everything(outcomes.size());
        for (std::size_t i = 0; i < everything.size(); ++i) everything[i] = i;
        add_strata("avg", everything);
    }

    char head[120];
    std::snprintf(head, sizeof(head), "%-10s %-12s %6s %8s", "suffixes", "stratum", "pairs",
                  "acc-10");
    std::cout << head << '\n';
    for (const ProbeRow& r : rows) {
        char buf[120];
        std::snprintf(buf, sizeof(buf), "%-10s %-12s %6d %8.4f", r.suffixes.c_str(),
                      r.stratum.c_str(), r.pairs, r.acc10);
        std::cout << buf << '\n';
    }

    if (!out_path.empty()) {
        detail::RecordWriter writer(out_path);
        for (const ProbeRow& r : rows) {
            json j;
            j["record"] = "probe";
            j["suffixes"] = r.suffixes;
            j["stratum"] = r.stratum;
            j["pairs"] = r.pairs;
            j["acc_10"] = r.acc10;
            writer.line(j.dump());
        }
    }
    return 0;
}

inline int cmd_build_space(const RunConfig& cfg, const std::string& target) {
    const Vocabulary vocab =
        cfg.vocab_path.empty() ? corpus::build_vocabulary() : load_vocabulary(cfg.vocab_path);
    const SynonymModel synonyms = cfg.synonyms_path.empty() ? corpus::build_synonym_model()
                                                            : load_synonyms(cfg.synonyms_path);
    const SearchSpace space = build_search_space(vocab, synonyms, target, cfg.neighbors);

    json j;
    j["record"] = "search_space";
    j["target"] = target;
    j["neighbors"] = cfg.neighbors;
    j["degraded"] = space.degraded;
    j["vocab_size"] = vocab.tokens.size();
    j["forbidden_words"] = space.forbidden_words;
    j["forbidden_tokens"] = space.forbidden_tokens.size();
    j["allowed_count"] = space.allowed.size();
    json allowed = json::array();
    for (TokenId id : space.allowed) allowed.push_back(vocab.tokens[static_cast<std::size_t>(id)]);
    j["allowed"] = std::move(allowed);

    detail::RecordWriter writer(cfg.out_path);
    writer.line(j.dump());
    std::cerr << "build-space: " << space.allowed.size() << " allowed tokens, "
              << space.forbidden_words.size() << " forbidden words\n";
    return 0;
}

inline int cmd_make_corpus(const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());

    const Vocabulary vocab = corpus::build_vocabulary();
    save_vocabulary(vocab, out_dir + "/vocab.tsv");
    save_synonyms(corpus::build_synonym_model(), out_dir + "/synonyms.tsv");
    save_pos_lexicon(corpus::build_pos_lexicon(), out_dir + "/pos_lexicon.tsv");
    std::vector<PromptEntry> prompts;
    for (const auto& p : corpus::prompts()) prompts.push_back({p.object, p.text});
    save_prompts(prompts, out_dir + "/prompts.tsv");

    json j;
    j["record"] = "corpus";
    j["directory"] = out_dir;
    j["vocab_size"] = vocab.tokens.size();
    j["prompts"] = prompts.size();
    j["object_targets"] = corpus::object_targets();
    j["style_targets"] = corpus::style_targets();
    j["files"] = {"vocab.tsv", "synonyms.tsv", "pos_lexicon.tsv", "prompts.tsv"};
    std::cout << j.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// Argument wiring
// ---------------------------------------------------------------------------

namespace detail {

// All tuning flags route through apply_config_entry as strings so the flag,
// environment, and file forms share one parser and one error format.
struct FlagSet {
    std::map<std::string, std::string> values;

    void add(CLI::App* cmd, const std::string& key, const std::string& flag,
             const std::string& help) {
        cmd->add_option_function<std::string>(
            flag, [this, key](const std::string& v) { values[key] = v; }, help);
    }
};

inline RunConfig resolve_config(const std::string& config_path, const FlagSet& flags) {
    RunConfig cfg; // defaults
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    apply_env_overrides(cfg);
    for (const auto& [key, value] : flags.values)
        apply_config_entry(cfg, key, value, "flag --" + key);
    return cfg;
}

} // namespace detail

inline int run(int argc, char** argv) {
    CLI::App app{"targeted adversarial prompt generation against a desk-scale "
                 "text-to-image surrogate"};
    app.require_subcommand(1);

    std::string config_path;
    detail::FlagSet flags;

    auto* attack = app.add_subcommand("attack", "run attacks over the corpus, write records");
    attack->add_option("--config", config_path, "key = value settings file");
    flags.add(attack, "mode", "--mode", "object|style");
    flags.add(attack, "strategy", "--strategy", "suffix|substitute");
    flags.add(attack, "suffixes", "--suffixes", "number of appended tokens M");
    flags.add(attack, "iters", "--iters", "optimization iterations I");
    flags.add(attack, "lr", "--lr", "learning rate eta");
    flags.add(attack, "tau", "--tau", "decoupling-mask vote threshold");
    flags.add(attack, "seed", "--seed", "global seed");
    flags.add(attack, "workers", "--workers", "parallel pair workers");
    flags.add(attack, "out", "--out", "report output path (default stdout)");
    flags.add(attack, "targets", "--targets", "comma-separated target list");

    auto* eval = app.add_subcommand("eval", "summarize attack reports into a metric table");
    std::vector<std::string> eval_reports, eval_targets;
    std::string eval_out;
    eval->add_option("reports", eval_reports, "report files to read")->required();
    eval->add_option("--targets", eval_targets, "only summarize these targets");
    eval->add_option("--out", eval_out, "also write metric rows as records");

    auto* probe = app.add_subcommand("probe", "stratify acc-10 by prompt-level consistency");
    std::vector<std::string> probe_reports;
    std::string probe_out;
    probe->add_option("reports", probe_reports, "report files to read")->required();
    probe->add_option("--out", probe_out, "also write probe rows as records");

    auto* build_space =
        app.add_subcommand("build-space", "export the filtered token search space for a target");
    std::string space_target;
    build_space->add_option("--config", config_path, "key = value settings file");
    build_space->add_option("--target", space_target, "attack target word")->required();
    flags.add(build_space, "out", "--out", "output path (default stdout)");
    flags.add(build_space, "neighbors", "--neighbors", "forbidden-neighbor count H");

    auto* make_corpus =
        app.add_subcommand("make-corpus", "write the bundled corpus as TSV files");
    std::string corpus_dir = "corpus";
    make_corpus->add_option("--out", corpus_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (attack->parsed()) return cmd_attack(detail::resolve_config(config_path, flags));
        if (eval->parsed()) return cmd_eval(eval_reports, eval_targets, eval_out);
        if (probe->parsed()) return cmd_probe(probe_reports, probe_out);
        if (build_space->parsed())
            return cmd_build_space(detail::resolve_config(config_path, flags), space_target);
        if (make_corpus->parsed()) return cmd_make_corpus(corpus_dir);
    } catch (const Error& e) {
        std::cerr << "advprompt: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

} // namespace advprompt::cli
