// cda: counterfactual gender augmentation and evaluation for fairytale QA
// corpora. Subcommands cover the full pipeline: augment, mix, score,
// compare, flag, audit, casestudy.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cda/casestudy.hpp"
#include "cda/corpus.hpp"
#include "cda/harness.hpp"
#include "cda/lexicon.hpp"
#include "cda/lexing.hpp"
#include "cda/llm_http.hpp"
#include "cda/llmclient.hpp"
#include "cda/manifest.hpp"
#include "cda/metrics.hpp"
#include "cda/perturb.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

struct ClientOptions {
    std::string endpoint = "https://api.openai.com/v1";
    std::string model = "gpt-3.5-turbo";
    std::string api_key_env = "CDA_API_KEY";
    std::string cache;
    bool offline = false;
    int max_retries = 3;
    double timeout_s = 60.0;
    int max_concurrent = 4;
};

void add_client_options(CLI::App* cmd, ClientOptions& opts) {
    cmd->add_option("--endpoint", opts.endpoint, "Chat-completions endpoint base URL")
        ->envname("CDA_ENDPOINT")
        ->capture_default_str();
    cmd->add_option("--model", opts.model, "Model name sent with every request")
        ->capture_default_str();
    cmd->add_option("--api-key-env", opts.api_key_env,
                    "Environment variable holding the API key")
        ->capture_default_str();
    cmd->add_option("--cache", opts.cache,
                    "Response cache file (JSONL, append-only); created if missing");
    cmd->add_flag("--offline", opts.offline,
                  "Serve completions exclusively from the cache; any miss is an error");
    cmd->add_option("--max-retries", opts.max_retries, "Retries for transient failures")
        ->capture_default_str();
    cmd->add_option("--timeout", opts.timeout_s, "Request timeout in seconds")
        ->capture_default_str();
    cmd->add_option("--max-concurrent", opts.max_concurrent,
                    "Upper bound on in-flight requests")
        ->capture_default_str();
}

std::shared_ptr<cda::ChatClient> build_client(const ClientOptions& opts) {
    std::string cache = opts.cache;
    if (cache.empty()) {
        if (const char* dir = std::getenv("CDA_CACHE_DIR"); dir && *dir)
            cache = std::string(dir) + "/cache.jsonl";
    }
    if (opts.offline) {
        if (cache.empty())
            throw cda::PreconditionError("--offline requires --cache (or CDA_CACHE_DIR)");
        return std::make_shared<cda::CachingClient>(nullptr, cache);
    }
    cda::ClientConfig config;
    config.endpoint_url = opts.endpoint;
    config.model = opts.model;
    config.api_key_env = opts.api_key_env;
    config.max_retries = opts.max_retries;
    config.request_timeout_s = opts.timeout_s;
    config.max_concurrent = opts.max_concurrent;
    if (!cache.empty()) config.cache_path = cache;
    return cda::make_chat_client(config);
}

std::string command_line_of(int argc, char** argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) {
        if (i) out += ' ';
        out += argv[i];
    }
    return out;
}

// Manifest next to the primary output, or an explicit --manifest path.
std::string manifest_path_for(const std::string& output, const std::string& explicit_path) {
    if (!explicit_path.empty()) return explicit_path;
    if (!output.empty() && output != "-") return output + ".manifest.json";
    return "cda.manifest.json";
}

void write_table(const std::string& output, const std::string& content) {
    if (output.empty() || output == "-")
        std::cout << content;
    else
        cda::write_file_atomic(output, content);
}

std::unique_ptr<cda::Tagger> build_tagger(const std::string& tags_path) {
    if (tags_path.empty()) return std::make_unique<cda::HeuristicTagger>();
    return std::make_unique<cda::SidecarTagger>(tags_path);
}

cda::SimilarityScorer* build_scorer(const std::string& spec,
                                    std::vector<std::unique_ptr<cda::SimilarityScorer>>& own) {
    if (spec == "builtin") {
        own.push_back(std::make_unique<cda::LexicalOverlapScorer>());
    } else if (spec.rfind("file:", 0) == 0) {
        own.push_back(std::make_unique<cda::PrecomputedScorer>(spec.substr(5)));
    } else if (spec.rfind("http:", 0) == 0 || spec.rfind("https:", 0) == 0) {
        own.push_back(std::make_unique<cda::HttpSimilarityScorer>(spec));
    } else {
        throw cda::PreconditionError("unknown scorer '" + spec +
                                     "' (expected builtin, file:PATH, or http(s)://URL)");
    }
    return own.back().get();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Counterfactual gender augmentation and evaluation for fairytale QA"};
    app.name("cda");
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(CDA_VERSION));
    app.set_config("--config", "cda.json", "JSON config file (flag > env > config > default)");
    app.allow_config_extras(true);

    // ---------------- augment ----------------
    std::string in_path, out_path, lexicon_path, lexicon_out, names_path, wordlist_path;
    std::string tags_path, quarantine_path, audit_path, manifest_path, strategy_name = "rule";
    bool sequential = false, split_contractions = false;
    int jobs = 0;
    ClientOptions augment_client;

    auto* augment = app.add_subcommand("augment", "Produce a counterfactual corpus variant");
    augment->add_option("--input", in_path, "Input corpus (JSONL)")->required();
    augment->add_option("--output", out_path, "Output corpus (JSONL)")->required();
    augment->add_option("--strategy", strategy_name, "rule | llm-rewrite | llm-assisted")
        ->capture_default_str();
    augment->add_option("--lexicon", lexicon_path, "Gendered pair lexicon (TSV)")
        ->capture_default_str();
    augment->add_option("--lexicon-out", lexicon_out,
                        "Where to persist the lexicon with learned pairs "
                        "(default: overwrite --lexicon)");
    augment->add_option("--names", names_path, "Proper-name list, one name per line");
    augment->add_option("--wordlist", wordlist_path,
                        "Basic word list gating llm-assisted queries");
    augment->add_option("--tags", tags_path, "Sidecar POS-tag JSONL from an external tagger");
    augment->add_option("--quarantine", quarantine_path,
                        "Quarantine file (default: OUTPUT.quarantine.jsonl)");
    augment->add_option("--audit", audit_path, "Audit report (default: OUTPUT.audit.json)");
    augment->add_option("--manifest", manifest_path, "Run manifest path");
    augment->add_flag("--sequential", sequential,
                      "Process records one at a time (reproducible llm-assisted learning)");
    augment->add_flag("--split-contractions", split_contractions,
                      "Reference-tokenizer compatibility: split didn't -> didn ' t");
    augment->add_option("--jobs", jobs, "Worker threads (default: logical cores)");
    std::string rewrite_prompt_path = "prompts/rewrite.txt";
    std::string pair_prompt_path = "prompts/pair_completion.txt";
    augment->add_option("--rewrite-prompt", rewrite_prompt_path,
                        "Rewrite prompt asset")->capture_default_str();
    augment->add_option("--pair-prompt", pair_prompt_path,
                        "Pair-completion prompt asset")->capture_default_str();
    add_client_options(augment, augment_client);

    // ---------------- mix ----------------
    std::string mix_original, mix_cf, mix_output, mix_manifest, mix_mode_name = "half";
    uint64_t mix_seed = 88;
    auto* mix = app.add_subcommand("mix", "Build a training mix of original + counterfactual");
    mix->add_option("--original", mix_original, "Original corpus (JSONL)")->required();
    mix->add_option("--counterfactual", mix_cf, "Counterfactual corpus (JSONL)")->required();
    mix->add_option("--mode", mix_mode_name, "cf | half | concat")->capture_default_str();
    mix->add_option("--seed", mix_seed, "Shuffle seed for half mode")->capture_default_str();
    mix->add_option("--output", mix_output, "Output corpus (JSONL)")->required();
    mix->add_option("--manifest", mix_manifest, "Run manifest path");

    // ---------------- score ----------------
    std::string score_preds, score_corpus, score_output, score_manifest;
    bool score_strict = false;
    auto* score = app.add_subcommand("score", "Score a prediction set against a corpus");
    score->add_option("--predictions", score_preds, "Predictions (JSONL with header)")
        ->required();
    score->add_option("--corpus", score_corpus, "Corpus variant the predictions target")
        ->required();
    score->add_option("--output", score_output, "Eval run output (JSON)")->required();
    score->add_flag("--strict", score_strict, "Reject predictions for unknown record ids");
    score->add_option("--manifest", score_manifest, "Run manifest path");

    // ---------------- compare ----------------
    std::string cmp_baseline, cmp_candidate, cmp_output, cmp_manifest, cmp_format = "tsv";
    double cmp_alpha = 0.05;
    auto* compare = app.add_subcommand("compare",
                                       "Compare two eval runs with significance marks");
    compare->add_option("--baseline", cmp_baseline, "Baseline run (JSON)")->required();
    compare->add_option("--candidate", cmp_candidate, "Candidate run (JSON)")->required();
    compare->add_option("--alpha", cmp_alpha, "Significance level")->capture_default_str();
    compare->add_option("--format", cmp_format, "tsv | md")->capture_default_str();
    compare->add_option("--output", cmp_output, "Output path (default: stdout)");
    compare->add_option("--manifest", cmp_manifest, "Run manifest path");

    // ---------------- flag ----------------
    std::string flag_a, flag_b, flag_corpus, flag_output, flag_manifest;
    std::string flag_scorer = "builtin", flag_format = "tsv";
    double flag_threshold = 0.5;
    auto* flag =
        app.add_subcommand("flag", "Flag divergent prediction pairs below a similarity "
                                   "threshold");
    flag->add_option("--preds-a", flag_a, "Predictions on the original variant")->required();
    flag->add_option("--preds-b", flag_b, "Predictions on the counterfactual variant")
        ->required();
    flag->add_option("--corpus", flag_corpus, "Corpus with ground-truth answers")->required();
    flag->add_option("--scorer", flag_scorer, "builtin | file:PATH | http(s)://URL")
        ->capture_default_str();
    flag->add_option("--threshold", flag_threshold, "Flagging threshold")
        ->capture_default_str();
    flag->add_option("--format", flag_format, "tsv | md (summary table)")
        ->capture_default_str();
    flag->add_option("--output", flag_output, "Flagged examples (JSONL)")->required();
    flag->add_option("--manifest", flag_manifest, "Run manifest path");

    // ---------------- audit ----------------
    std::string audit_rule, audit_llm, audit_output, audit_manifest, audit_format = "tsv";
    auto* audit = app.add_subcommand(
        "audit", "Word/match error rates of an LLM variant against the rule-based one");
    audit->add_option("--rule-based", audit_rule, "Rule-based corpus (ground truth)")
        ->required();
    audit->add_option("--llm", audit_llm, "LLM-produced corpus")->required();
    audit->add_option("--format", audit_format, "tsv")->capture_default_str();
    audit->add_option("--output", audit_output, "Output path (default: stdout)");
    audit->add_option("--manifest", audit_manifest, "Run manifest path");

    // ---------------- casestudy ----------------
    auto* casestudy = app.add_subcommand("casestudy", "Story-generation case study");
    casestudy->require_subcommand(1);

    std::string cs_original, cs_cf, cs_ids, cs_outdir, cs_manifest;
    ClientOptions cs_client;
    auto* cs_generate = casestudy->add_subcommand(
        "generate", "Generate story pairs from original/counterfactual seeds");
    cs_generate->add_option("--original", cs_original, "Original test corpus")->required();
    cs_generate->add_option("--counterfactual", cs_cf, "Counterfactual test corpus")
        ->required();
    cs_generate->add_option("--ids", cs_ids, "Sample ids, one per line")->required();
    cs_generate->add_option("--outdir", cs_outdir, "Output directory for story pairs")
        ->required();
    cs_generate->add_option("--manifest", cs_manifest, "Run manifest path");
    add_client_options(cs_generate, cs_client);

    std::string cs_rubrics_score;
    auto* cs_score = casestudy->add_subcommand("score", "Score rubric sheets");
    cs_score->add_option("--rubrics", cs_rubrics_score, "Rubric CSV")->required();

    std::string cs_rubrics_report, cs_criteria_report, cs_report_output, cs_report_manifest;
    auto* cs_report = casestudy->add_subcommand("report", "Aggregate rubric/criteria sheets");
    cs_report->add_option("--rubrics", cs_rubrics_report, "Rubric CSV");
    cs_report->add_option("--criteria", cs_criteria_report, "Criteria CSV");
    cs_report->add_option("--output", cs_report_output, "Output path (default: stdout)");
    cs_report->add_option("--manifest", cs_report_manifest, "Run manifest path");

    CLI11_PARSE(app, argc, argv);

    try {
        cda::RunManifest manifest;
        manifest.command_line = command_line_of(argc, argv);
        manifest.stamp();

        if (augment->parsed()) {
            const auto strategy = cda::parse_strategy(strategy_name);
            if (!strategy)
                throw cda::PreconditionError("unknown strategy '" + strategy_name + "'");
            if (lexicon_path.empty()) lexicon_path = "data/lexicon_seed.tsv";

            std::unordered_set<std::string> names;
            if (!names_path.empty()) names = cda::load_name_list(names_path);

            cda::GenderLexicon lexicon = cda::load_lexicon(lexicon_path, names);
            const auto tagger = build_tagger(tags_path);

            cda::PerturbDeps deps;
            deps.lexicon = &lexicon;
            deps.tagger = tagger.get();
            deps.names = names;
            deps.tokenize_options.split_contractions = split_contractions;

            std::unordered_set<std::string> wordlist;
            std::shared_ptr<cda::ChatClient> client;
            if (*strategy != cda::Strategy::RuleBased) {
                client = build_client(augment_client);
                deps.client = client.get();
                deps.rewrite = cda::load_rewrite_template(rewrite_prompt_path);
                deps.rewrite.model = augment_client.model;
                deps.assist.prompt = cda::load_pair_prompt(pair_prompt_path);
                deps.assist.prompt.model = augment_client.model;
                manifest.add_prompt(rewrite_prompt_path);
                manifest.add_prompt(pair_prompt_path);
                if (!wordlist_path.empty()) {
                    wordlist = cda::load_name_list(wordlist_path);  // same format
                    deps.assist.wordlist = &wordlist;
                }
            }

            const cda::Corpus corpus = cda::load_jsonl(in_path);
            int effective_jobs = sequential ? 1 : jobs;
            if (effective_jobs <= 0)
                effective_jobs = static_cast<int>(std::thread::hardware_concurrency());
            auto [perturbed, report] =
                cda::perturb_corpus(corpus, *strategy, deps, effective_jobs);

            cda::save_jsonl(perturbed, out_path);

            std::string quarantine_out = quarantine_path.empty()
                                             ? out_path + ".quarantine.jsonl"
                                             : quarantine_path;
            std::string quarantine_content;
            for (const auto& q : report.quarantined) {
                quarantine_content += nlohmann::json{{"id", q.id},
                                                     {"error", q.error},
                                                     {"stage", q.stage}}
                                          .dump();
                quarantine_content += '\n';
            }
            cda::write_file_atomic(quarantine_out, quarantine_content);

            const std::string audit_out =
                audit_path.empty() ? out_path + ".audit.json" : audit_path;
            cda::write_file_atomic(audit_out, report.to_json().dump(2) + "\n");

            if (*strategy == cda::Strategy::LlmAssistedRuleBased) {
                const std::string lex_out =
                    lexicon_out.empty() ? lexicon_path : lexicon_out;
                cda::save_lexicon(lexicon, lex_out);
            }

            manifest.add_input(in_path);
            manifest.add_input(lexicon_path);
            if (!names_path.empty()) manifest.add_input(names_path);
            manifest.config_hash = cda::fnv1a64_hex(
                strategy_name + "|" + lexicon_path + "|" + names_path + "|" +
                (split_contractions ? "split" : "whole"));
            manifest.save(manifest_path_for(out_path, manifest_path));

            std::cerr << "augmented " << report.records_out << "/" << report.records_in
                      << " records, " << report.quarantined.size() << " quarantined\n";
            return report.quarantined.empty() ? kExitOk : kExitPartial;
        }

        if (mix->parsed()) {
            const auto mode = cda::parse_mix_mode(mix_mode_name);
            if (!mode) throw cda::PreconditionError("unknown mix mode '" + mix_mode_name + "'");
            const cda::Corpus original = cda::load_jsonl(mix_original);
            const cda::Corpus counterfactual = cda::load_jsonl(mix_cf);
            const cda::Corpus mixed =
                cda::mix_training(original, counterfactual, {*mode, mix_seed});
            cda::save_jsonl(mixed, mix_output);
            manifest.add_input(mix_original);
            manifest.add_input(mix_cf);
            manifest.seeds["mix"] = mix_seed;
            manifest.config_hash = cda::fnv1a64_hex(mix_mode_name);
            manifest.save(manifest_path_for(mix_output, mix_manifest));
            std::cerr << "mixed " << mixed.size() << " records (" << mix_mode_name << ")\n";
            return kExitOk;
        }

        if (score->parsed()) {
            const cda::Corpus corpus = cda::load_jsonl(score_corpus);
            const cda::PredictionSet preds =
                cda::load_predictions(score_preds, &corpus, score_strict);
            const cda::EvalRun run = cda::score_run(preds, corpus);
            cda::write_file_atomic(score_output, run.to_json().dump(2) + "\n");
            if (!run.missing_predictions.empty())
                std::cerr << "coverage warning: " << run.missing_predictions.size()
                          << " records had no prediction and scored 0\n";
            manifest.add_input(score_preds);
            manifest.add_input(score_corpus);
            manifest.save(manifest_path_for(score_output, score_manifest));
            std::cerr << "ALL = " << cda::format_2dp(run.aggregates.at("ALL")) << "\n";
            return kExitOk;
        }

        if (compare->parsed()) {
            const auto baseline =
                cda::EvalRun::from_json(nlohmann::json::parse(cda::read_file(cmp_baseline)));
            const auto candidate =
                cda::EvalRun::from_json(nlohmann::json::parse(cda::read_file(cmp_candidate)));
            const cda::ComparisonTable table = cda::compare_runs(baseline, candidate, cmp_alpha);
            write_table(cmp_output, cmp_format == "md" ? table.render_md() : table.render_tsv());
            manifest.add_input(cmp_baseline);
            manifest.add_input(cmp_candidate);
            manifest.save(manifest_path_for(cmp_output, cmp_manifest));
            return kExitOk;
        }

        if (flag->parsed()) {
            const cda::Corpus corpus = cda::load_jsonl(flag_corpus);
            const cda::PredictionSet a = cda::load_predictions(flag_a, &corpus);
            const cda::PredictionSet b = cda::load_predictions(flag_b, &corpus);
            std::vector<std::unique_ptr<cda::SimilarityScorer>> own;
            const cda::SimilarityScorer* scorer = build_scorer(flag_scorer, own);
            const cda::FlaggedReport report =
                cda::divergence_report(a, b, corpus, *scorer, flag_threshold);
            cda::write_file_atomic(flag_output, report.to_jsonl());
            std::cout << report.render_tsv();
            manifest.add_input(flag_a);
            manifest.add_input(flag_b);
            manifest.add_input(flag_corpus);
            manifest.save(manifest_path_for(flag_output, flag_manifest));
            std::cerr << "flagged " << report.flagged.size() << " of "
                      << report.total_records << " records\n";
            return kExitOk;
        }

        if (audit->parsed()) {
            const cda::Corpus rule = cda::load_jsonl(audit_rule);
            const cda::Corpus llm = cda::load_jsonl(audit_llm);
            const cda::WerAuditTable table = cda::wer_audit(rule, llm);
            write_table(audit_output, table.render_tsv());
            manifest.add_input(audit_rule);
            manifest.add_input(audit_llm);
            manifest.save(manifest_path_for(audit_output, audit_manifest));
            return kExitOk;
        }

        if (cs_generate->parsed()) {
            const cda::Corpus original = cda::load_jsonl(cs_original);
            const cda::Corpus counterfactual = cda::load_jsonl(cs_cf);
            std::vector<std::string> ids;
            for (const auto& line : cda::split_on(cda::read_file(cs_ids), "\n"))
                if (!cda::trim(line).empty()) ids.push_back(cda::trim(line));
            auto client = build_client(cs_client);
            cda::StoryParams params;
            params.model = cs_client.model;
            const cda::PairSet set = cda::generate_pairs(original, counterfactual, ids,
                                                         *client, cs_outdir, params);
            manifest.add_input(cs_original);
            manifest.add_input(cs_cf);
            manifest.add_input(cs_ids);
            manifest.save(manifest_path_for(cs_outdir + "/pairs", cs_manifest));
            std::cerr << "generated " << set.pair_count() << " story pairs\n";
            return kExitOk;
        }

        if (cs_score->parsed()) {
            const auto sheets = cda::load_rubric_sheets(cs_rubrics_score);
            if (sheets.empty()) throw cda::EmptySheets("no rubric sheets in " +
                                                       cs_rubrics_score);
            for (const auto& s : sheets)
                std::cout << s.story_id << '\t' << cda::to_string(s.seed_variant) << '\t'
                          << cda::format_2dp(cda::score_sheet(s)) << '\n';
            return kExitOk;
        }

        if (cs_report->parsed()) {
            std::string out;
            if (!cs_rubrics_report.empty()) {
                const auto report =
                    cda::aggregate_rubrics(cda::load_rubric_sheets(cs_rubrics_report));
                out += report.render_md();
                out += '\n';
            }
            if (!cs_criteria_report.empty()) {
                const auto report =
                    cda::aggregate_criteria(cda::load_criteria_sheets(cs_criteria_report));
                out += report.render_md();
            }
            if (out.empty())
                throw cda::PreconditionError("casestudy report needs --rubrics or --criteria");
            write_table(cs_report_output, out);
            if (!cs_rubrics_report.empty()) manifest.add_input(cs_rubrics_report);
            if (!cs_criteria_report.empty()) manifest.add_input(cs_criteria_report);
            manifest.save(manifest_path_for(cs_report_output, cs_report_manifest));
            return kExitOk;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFatal;
    }
    return kExitFatal;
}
