#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "advprompt/attack.hpp"
#include "advprompt/errors.hpp"
#include "advprompt/eval.hpp"
#include "advprompt/lexicon.hpp"
#include "advprompt/rng.hpp"

// Run configuration (defaults < config file < environment < flags) and the
// line-delimited JSON report format written by the attack command and read
// back by eval/probe.

namespace advprompt {

using nlohmann::json;

inline constexpr int kReportFormatVersion = 1;
inline constexpr const char* kAccKReading = "at-least-one-in-first-K";
inline constexpr const char* kEnvPrefix = "ADVPROMPT_";

struct RunConfig {
    // input/output paths; empty string = use the bundled desk corpus
    std::string vocab_path;
    std::string synonyms_path;
    std::string pos_path;
    std::string prompts_path;
    std::string out_path;

    std::string mode = "object";     // object | style
    std::string strategy = "suffix"; // suffix | substitute
    std::vector<std::string> targets; // empty = all bundled targets for the mode

    // attack parameters (AttackConfig mirrors)
    int suffixes = 5;
    int iters = 500;
    double lr = 0.1;
    int tau = 9;
    int augments = 10;
    int references = 10;
    std::string word_types = "verb+prep+adj+adv";
    std::uint64_t seed = 0;

    // evaluation parameters
    int images = 10;
    int neighbors = 10;
    double sigma_ref = 0.1;
    double sigma_gen = 0.1;
    double mse_weight = 1.0;
    int workers = 1;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string current;
    for (char c : s) {
        if (c == sep) {
            parts.push_back(trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    parts.push_back(trim(current));
    return parts;
}

template <typename T>
inline T parse_number(const std::string& value, const std::string& context) {
    std::istringstream in(value);
    T parsed{};
    in >> parsed;
    if (in.fail() || !in.eof())
        throw ConfigError(context + ": expected a number, got '" + value + "'");
    return parsed;
}

} // namespace detail

// Applies one key=value setting; context prefixes error messages (file:line,
// "environment", or "flag").
inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value,
                               const std::string& context) {
    if (key == "vocab") cfg.vocab_path = value;
    else if (key == "synonyms") cfg.synonyms_path = value;
    else if (key == "pos_lexicon") cfg.pos_path = value;
    else if (key == "prompts") cfg.prompts_path = value;
    else if (key == "out") cfg.out_path = value;
    else if (key == "mode") {
        if (value != "object" && value != "style")
            throw ConfigError(context + ": mode must be 'object' or 'style', got '" + value + "'");
        cfg.mode = value;
    } else if (key == "strategy") {
        if (value != "suffix" && value != "substitute")
            throw ConfigError(context + ": strategy must be 'suffix' or 'substitute', got '" +
                              value + "'");
        cfg.strategy = value;
    } else if (key == "targets") {
        cfg.targets.clear();
        for (const std::string& t : detail::split(value, ',')) {
            if (!t.empty()) cfg.targets.push_back(t);
        }
    } else if (key == "suffixes") cfg.suffixes = detail::parse_number<int>(value, context);
    else if (key == "iters") cfg.iters = detail::parse_number<int>(value, context);
    else if (key == "lr") cfg.lr = detail::parse_number<double>(value, context);
    else if (key == "tau") cfg.tau = detail::parse_number<int>(value, context);
    else if (key == "augments") cfg.augments = detail::parse_number<int>(value, context);
    else if (key == "references") cfg.references = detail::parse_number<int>(value, context);
    else if (key == "word_types") cfg.word_types = value;
    else if (key == "seed") cfg.seed = detail::parse_number<std::uint64_t>(value, context);
    else if (key == "images") cfg.images = detail::parse_number<int>(value, context);
    else if (key == "neighbors") cfg.neighbors = detail::parse_number<int>(value, context);
    else if (key == "sigma_ref") cfg.sigma_ref = detail::parse_number<double>(value, context);
    else if (key == "sigma_gen") cfg.sigma_gen = detail::parse_number<double>(value, context);
    else if (key == "mse_weight") cfg.mse_weight = detail::parse_number<double>(value, context);
    else if (key == "workers") cfg.workers = detail::parse_number<int>(value, context);
    else throw ConfigError(context + ": unknown setting '" + key + "'");
}

// Key-value config file: `key = value` lines, '#' comments, blank lines.
inline void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        const std::string context = path + ":" + std::to_string(lineno);
        if (eq == std::string::npos)
            throw ConfigError(context + ": expected 'key = value', got '" + stripped + "'");
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        if (key.empty()) throw ConfigError(context + ": empty setting name");
        apply_config_entry(cfg, key, value, context);
    }
}

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "vocab",     "synonyms",   "pos_lexicon", "prompts",   "out",       "mode",
        "strategy",  "targets",    "suffixes",    "iters",     "lr",        "tau",
        "augments",  "references", "word_types",  "seed",      "images",    "neighbors",
        "sigma_ref", "sigma_gen",  "mse_weight",  "workers"};
    return keys;
}

// Environment overrides: ADVPROMPT_<KEY> for every config key.
inline void apply_env_overrides(RunConfig& cfg) {
    for (const std::string& key : config_keys()) {
        std::string name = kEnvPrefix;
        for (char c : key) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
        if (const char* value = std::getenv(name.c_str()))
            apply_config_entry(cfg, key, value, "environment " + name);
    }
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// Canonical serialization of the effective config; hashing it gives a stable
// fingerprint independent of where each setting came from.
inline json config_to_json(const RunConfig& cfg) {
    json j;
    j["vocab"] = cfg.vocab_path;
    j["synonyms"] = cfg.synonyms_path;
    j["pos_lexicon"] = cfg.pos_path;
    j["prompts"] = cfg.prompts_path;
    j["mode"] = cfg.mode;
    j["strategy"] = cfg.strategy;
    j["targets"] = cfg.targets;
    j["suffixes"] = cfg.suffixes;
    j["iters"] = cfg.iters;
    j["lr"] = cfg.lr;
    j["tau"] = cfg.tau;
    j["augments"] = cfg.augments;
    j["references"] = cfg.references;
    j["word_types"] = cfg.word_types;
    j["seed"] = cfg.seed;
    j["images"] = cfg.images;
    j["neighbors"] = cfg.neighbors;
    j["sigma_ref"] = cfg.sigma_ref;
    j["sigma_gen"] = cfg.sigma_gen;
    j["mse_weight"] = cfg.mse_weight;
    j["workers"] = cfg.workers;
    return j;
}

inline std::string config_hash(const RunConfig& cfg) {
    json j = config_to_json(cfg);
    j.erase("workers"); // parallelism never changes results
    const std::string canonical = j.dump();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical)));
    return buf;
}

inline AttackConfig make_attack_config(const RunConfig& cfg) {
    AttackConfig a;
    a.suffix_count = cfg.suffixes;
    a.iterations = cfg.iters;
    a.learning_rate = cfg.lr;
    a.mask_threshold = cfg.tau;
    a.augment_count = cfg.augments;
    a.reference_count = cfg.references;
    a.word_types = parse_word_types(cfg.word_types);
    a.seed = cfg.seed;
    a.validate();
    return a;
}

// ---------------------------------------------------------------------------
// Report records
// ---------------------------------------------------------------------------

inline std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Header: the only record carrying a timestamp, so reruns differ in exactly
// one line. Also records the acc-K reading used throughout.
inline json header_record(const RunConfig& cfg, const std::string& command) {
    json j;
    j["record"] = "header";
    j["tool"] = "advprompt";
    j["format_version"] = kReportFormatVersion;
    j["command"] = command;
    j["acc_k_reading"] = kAccKReading;
    j["config"] = config_to_json(cfg);
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["timestamp"] = utc_timestamp();
    return j;
}

inline json pair_record(const PairOutcome& out, std::size_t index, const RunConfig& cfg,
                        const std::string& hash) {
    json j;
    j["record"] = "pair";
    j["index"] = index;
    j["ok"] = out.ok;
    j["status"] = out.status;
    j["aborted"] = out.aborted;
    j["mode"] = cfg.mode;
    j["strategy"] = cfg.strategy;
    j["suffixes"] = cfg.suffixes;
    j["clean_prompt"] = out.spec.prompt;
    j["object"] = out.spec.object;
    j["target"] = out.spec.target;
    j["seed"] = mix_seed(cfg.seed, static_cast<std::uint64_t>(index));
    j["config_hash"] = hash;
    if (!out.ok) return j;

    j["adversarial_prompt"] = out.attack.best_prompt;
    j["final_prompt"] = out.attack.final_prompt;
    j["loss_initial"] = out.attack.loss_initial;
    j["loss_best"] = out.attack.loss_best;
    j["loss_final"] = out.attack.loss_final;
    j["best_iteration"] = out.attack.best_iteration;
    j["sim"] = out.adv.sim;
    j["q_verdict"] = out.adv.q_verdict ? 1 : 0;
    j["labels"] = out.adv.labels;
    j["clean_labels"] = out.clean.labels;
    j["sc_labels"] = out.adv_sc_labels;
    j["clean_sc_labels"] = out.clean_sc_labels;
    j["prompt_consistent"] = out.prompt_consistent;

    auto hit_within = [&](int k) {
        const int n = std::min<int>(k, static_cast<int>(out.adv.labels.size()));
        for (int i = 0; i < n; ++i)
            if (out.adv.labels[static_cast<std::size_t>(i)] == out.spec.target) return 1;
        return 0;
    };
    j["acc_hit_5"] = hit_within(5);
    j["acc_hit_10"] = hit_within(10);
    return j;
}

struct ReportFile {
    json header;
    std::vector<json> pairs;
};

inline ReportFile load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report file: " + path);
    ReportFile report;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError(path + ":" + std::to_string(lineno) + ": bad record: " + e.what());
        }
        const std::string kind = j.value("record", "");
        if (kind == "header") {
            if (j.value("format_version", 0) != kReportFormatVersion)
                throw IoError(path + ":" + std::to_string(lineno) +
                              ": unsupported report format version");
            report.header = std::move(j);
        } else if (kind == "pair") {
            report.pairs.push_back(std::move(j));
        } else {
            throw IoError(path + ":" + std::to_string(lineno) + ": unknown record kind '" +
                          kind + "'");
        }
    }
    return report;
}

// Rebuilds the metric-relevant slice of a PairOutcome from its record so
// eval/probe share the same summarize() the in-process runner uses.
inline PairOutcome outcome_from_record(const json& j) {
    PairOutcome out;
    out.spec.prompt = j.value("clean_prompt", "");
    out.spec.object = j.value("object", "");
    out.spec.target = j.value("target", "");
    out.spec.kind = j.value("mode", "object") == "style" ? TargetKind::Style : TargetKind::Object;
    out.ok = j.value("ok", false);
    out.status = j.value("status", "");
    out.aborted = j.value("aborted", false);
    if (!out.ok) return out;
    out.attack.best_prompt = j.value("adversarial_prompt", "");
    out.adv.prompt = out.attack.best_prompt;
    out.adv.target = out.spec.target;
    out.adv.labels = j.value("labels", std::vector<std::string>{});
    out.adv.sim = j.value("sim", 1.0);
    out.adv.q_verdict = j.value("q_verdict", 0) != 0;
    out.clean.prompt = out.spec.prompt;
    out.clean.target = out.spec.target;
    out.clean.labels = j.value("clean_labels", std::vector<std::string>{});
    out.clean.sim = 1.0;
    out.clean.q_verdict = false;
    out.adv_sc_labels = j.value("sc_labels", std::vector<std::string>{});
    out.clean_sc_labels = j.value("clean_sc_labels", std::vector<std::string>{});
    out.prompt_consistent = j.value("prompt_consistent", false);
    return out;
}

} // namespace advprompt
