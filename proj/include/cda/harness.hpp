#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cda/common.hpp"
#include "cda/corpus.hpp"
#include "cda/metrics.hpp"

namespace cda {

struct MalformedPrediction : Error {
    using Error::Error;
};

struct DuplicatePrediction : Error {
    using Error::Error;
};

struct UnknownRecordId : Error {
    using Error::Error;
};

struct IdSetMismatch : Error {
    using Error::Error;
};

inline std::string format_2dp(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
}

inline std::string format_4dp(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return std::string(buf);
}

// Predictions of one external model run against one corpus variant.
struct PredictionSet {
    std::string model_id;
    std::string train_config;
    std::string test_variant = "original";
    std::map<std::string, std::string> predictions;  // record id -> answer
};

// JSONL: a header object {"model_id","train_config","test_variant"}
// followed by {"id","prediction"} lines. With a corpus handle, unknown ids
// are rejected in strict mode and reported otherwise.
inline PredictionSet load_predictions(const std::string& path, const Corpus* corpus = nullptr,
                                      bool strict = false,
                                      std::vector<std::string>* unknown_out = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open predictions: " + path);

    const auto corpus_ids =
        corpus ? std::optional(corpus->id_set()) : std::nullopt;
    PredictionSet set;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::string context = path + ":" + std::to_string(lineno);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw MalformedPrediction(context + ": invalid JSON: " + e.what());
        }
        if (j.contains("model_id")) {
            set.model_id = j.value("model_id", "");
            set.train_config = j.value("train_config", "");
            set.test_variant = j.value("test_variant", "original");
            continue;
        }
        std::string id, prediction;
        try {
            id = j.at("id").get<std::string>();
            prediction = j.at("prediction").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw MalformedPrediction(context + ": " + e.what());
        }
        if (set.predictions.count(id))
            throw DuplicatePrediction(context + ": duplicate prediction for id '" + id + "'");
        if (corpus_ids && !corpus_ids->count(id)) {
            if (strict)
                throw UnknownRecordId(context + ": id '" + id + "' not in the corpus");
            if (unknown_out) unknown_out->push_back(id);
        }
        set.predictions.emplace(std::move(id), std::move(prediction));
    }
    return set;
}

// Per-record ROUGE-L F1 for one (model, training-mix, test-variant)
// combination, with ALL and per-question-type aggregates (x100 scale).
struct EvalRun {
    std::string model_id;
    std::string train_config;
    std::string test_variant = "original";
    std::map<std::string, double> per_record_f1;
    std::map<std::string, QuestionType> record_types;
    std::map<std::string, double> aggregates;  // "ALL" + type names, mean f1 x 100
    std::vector<std::string> missing_predictions;

    static EvalRun from_aggregates(std::string model_id, std::string train_config,
                                   std::string test_variant,
                                   std::map<std::string, double> aggregates) {
        EvalRun run;
        run.model_id = std::move(model_id);
        run.train_config = std::move(train_config);
        run.test_variant = std::move(test_variant);
        run.aggregates = std::move(aggregates);
        return run;
    }

    nlohmann::json to_json() const {
        nlohmann::json types = nlohmann::json::object();
        for (const auto& [id, t] : record_types) types[id] = std::string(to_string(t));
        return nlohmann::json{{"model_id", model_id},
                              {"train_config", train_config},
                              {"test_variant", test_variant},
                              {"per_record_f1", per_record_f1},
                              {"record_types", types},
                              {"aggregates", aggregates},
                              {"missing_predictions", missing_predictions}};
    }

    static EvalRun from_json(const nlohmann::json& j) {
        EvalRun run;
        run.model_id = j.value("model_id", "");
        run.train_config = j.value("train_config", "");
        run.test_variant = j.value("test_variant", "original");
        if (j.contains("per_record_f1"))
            run.per_record_f1 = j.at("per_record_f1").get<std::map<std::string, double>>();
        if (j.contains("record_types"))
            for (const auto& [id, t] : j.at("record_types").items()) {
                const auto qt = parse_question_type(t.get<std::string>());
                if (!qt) throw MalformedPrediction("unknown question type in run: " +
                                                   t.get<std::string>());
                run.record_types[id] = *qt;
            }
        run.aggregates = j.at("aggregates").get<std::map<std::string, double>>();
        if (j.contains("missing_predictions"))
            run.missing_predictions =
                j.at("missing_predictions").get<std::vector<std::string>>();
        return run;
    }
};

// Missing predictions score 0 and land in the coverage warning.
inline EvalRun score_run(const PredictionSet& preds, const Corpus& corpus_variant) {
    EvalRun run;
    run.model_id = preds.model_id;
    run.train_config = preds.train_config;
    run.test_variant = preds.test_variant;

    std::map<std::string, std::vector<double>> strata;
    for (const auto& r : corpus_variant.records) {
        double f1 = 0.0;
        const auto it = preds.predictions.find(r.id);
        if (it == preds.predictions.end())
            run.missing_predictions.push_back(r.id);
        else
            f1 = best_rouge(it->second, r.answers).f1;
        run.per_record_f1[r.id] = f1;
        run.record_types[r.id] = r.question_type;
        strata["ALL"].push_back(f1);
        strata[std::string(to_string(r.question_type))].push_back(f1);
    }
    for (const auto& [stratum, values] : strata)
        run.aggregates[stratum] = 100.0 * mean(values);
    return run;
}

struct ComparisonCell {
    std::string stratum;
    double baseline_mean = 0.0;
    double candidate_mean = 0.0;
    double delta = 0.0;
    double t = 0.0;
    double p = 1.0;
    bool significant = false;
    size_t n = 0;
};

struct ComparisonTable {
    std::vector<ComparisonCell> cells;
    double alpha = 0.05;

    std::string render_tsv() const {
        std::string out = "stratum\tbaseline\tcandidate\tdelta\tt\tp\tsignificant\n";
        for (const auto& c : cells) {
            out += c.stratum + '\t' + format_2dp(c.baseline_mean) + '\t' +
                   format_2dp(c.candidate_mean) + '\t' + format_2dp(c.delta) + '\t' +
                   format_4dp(c.t) + '\t' + format_4dp(c.p) + '\t' +
                   (c.significant ? "yes" : "no") + '\n';
        }
        return out;
    }

    std::string render_md() const {
        std::string out =
            "| stratum | baseline | candidate | delta | t | p | significant |\n"
            "|---|---|---|---|---|---|---|\n";
        for (const auto& c : cells) {
            const std::string candidate = c.significant
                                              ? "**" + format_2dp(c.candidate_mean) + "**"
                                              : format_2dp(c.candidate_mean);
            out += "| " + c.stratum + " | " + format_2dp(c.baseline_mean) + " | " +
                   candidate + " | " + format_2dp(c.delta) + " | " + format_4dp(c.t) +
                   " | " + format_4dp(c.p) + " | " + (c.significant ? "yes" : "no") +
                   " |\n";
        }
        out += "\nt-test: independent two-sample with pooled variance over per-record "
               "ROUGE-L F1 samples; candidate marked when significantly greater at alpha=" +
               format_2dp(alpha) + ".\n";
        return out;
    }
};

namespace detail {

inline std::vector<std::string> ordered_strata() {
    std::vector<std::string> strata;
    strata.emplace_back("ALL");
    for (QuestionType t : kAllQuestionTypes) strata.emplace_back(to_string(t));
    return strata;
}

}  // namespace detail

// Per-stratum pooled t-test between per-record F1 samples; the candidate is
// marked only for significant increases.
inline ComparisonTable compare_runs(const EvalRun& baseline, const EvalRun& candidate,
                                    double alpha = 0.05) {
    if (baseline.per_record_f1.empty() || candidate.per_record_f1.empty())
        throw IdSetMismatch("compare_runs requires per-record scores on both runs");
    {
        auto a = baseline.per_record_f1.begin();
        auto b = candidate.per_record_f1.begin();
        for (; a != baseline.per_record_f1.end() && b != candidate.per_record_f1.end();
             ++a, ++b)
            if (a->first != b->first)
                throw IdSetMismatch("runs cover different record ids ('" + a->first +
                                    "' vs '" + b->first + "')");
        if (a != baseline.per_record_f1.end() || b != candidate.per_record_f1.end())
            throw IdSetMismatch("runs cover different numbers of records");
    }

    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> strata;
    for (const auto& [id, f1] : baseline.per_record_f1) {
        const auto type_it = baseline.record_types.find(id);
        const double cf1 = candidate.per_record_f1.at(id);
        strata["ALL"].first.push_back(f1);
        strata["ALL"].second.push_back(cf1);
        if (type_it != baseline.record_types.end()) {
            const auto key = std::string(to_string(type_it->second));
            strata[key].first.push_back(f1);
            strata[key].second.push_back(cf1);
        }
    }

    ComparisonTable table;
    table.alpha = alpha;
    for (const auto& stratum : detail::ordered_strata()) {
        const auto it = strata.find(stratum);
        if (it == strata.end()) continue;
        const auto& [a, b] = it->second;
        ComparisonCell cell;
        cell.stratum = stratum;
        cell.n = a.size();
        cell.baseline_mean = 100.0 * mean(a);
        cell.candidate_mean = 100.0 * mean(b);
        cell.delta = cell.candidate_mean - cell.baseline_mean;
        if (a.size() >= 2) {
            try {
                const TTestResult r = pooled_t_test(a, b);
                cell.t = r.t_statistic;
                cell.p = r.p_value;
                cell.significant = r.p_value < alpha && cell.candidate_mean > cell.baseline_mean;
            } catch (const ZeroVariance&) {
                if (cell.baseline_mean == cell.candidate_mean) {
                    cell.t = 0.0;
                    cell.p = 1.0;
                } else {
                    cell.t = cell.candidate_mean > cell.baseline_mean ? HUGE_VAL : -HUGE_VAL;
                    cell.p = 0.0;
                    cell.significant = cell.candidate_mean > cell.baseline_mean;
                }
            }
        }
        table.cells.push_back(cell);
    }
    return table;
}

// Mean F1 drop (x100 scale) from the original-variant run to the
// counterfactual run, per ALL / question type / reasoning class.
inline std::map<std::string, double> bias_score(const EvalRun& run_original,
                                                const EvalRun& run_counterfactual) {
    std::map<std::string, double> out;

    if (!run_original.per_record_f1.empty() && !run_counterfactual.per_record_f1.empty()) {
        if (run_original.per_record_f1.size() != run_counterfactual.per_record_f1.size())
            throw IdSetMismatch("bias_score: runs cover different record sets");
        std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> strata;
        for (const auto& [id, f1] : run_original.per_record_f1) {
            const auto cf_it = run_counterfactual.per_record_f1.find(id);
            if (cf_it == run_counterfactual.per_record_f1.end())
                throw IdSetMismatch("bias_score: id '" + id + "' missing from one run");
            strata["ALL"].first.push_back(f1);
            strata["ALL"].second.push_back(cf_it->second);
            const auto type_it = run_original.record_types.find(id);
            if (type_it != run_original.record_types.end()) {
                const auto type_key = std::string(to_string(type_it->second));
                const auto class_key =
                    std::string(to_string(classify_reasoning(type_it->second)));
                strata[type_key].first.push_back(f1);
                strata[type_key].second.push_back(cf_it->second);
                strata[class_key].first.push_back(f1);
                strata[class_key].second.push_back(cf_it->second);
            }
        }
        for (const auto& [stratum, samples] : strata)
            out[stratum] = 100.0 * (mean(samples.first) - mean(samples.second));
        return out;
    }

    // Runs ingested from recorded aggregate tables: subtract what is there.
    for (const auto& [stratum, value] : run_original.aggregates) {
        const auto it = run_counterfactual.aggregates.find(stratum);
        if (it != run_counterfactual.aggregates.end()) out[stratum] = value - it->second;
    }
    return out;
}

struct FlaggedExample {
    std::string id;
    QuestionType type = QuestionType::Action;
    std::string pred_a;
    std::string pred_b;
    double similarity = 0.0;
    double rouge_a = 0.0;
    double rouge_b = 0.0;
};

struct FlaggedReport {
    double threshold = 0.5;
    std::vector<FlaggedExample> flagged;
    std::map<QuestionType, size_t> flagged_counts;
    std::map<QuestionType, size_t> totals;
    size_t total_records = 0;

    std::string to_jsonl() const {
        std::string out;
        for (const auto& f : flagged) {
            out += nlohmann::json{{"id", f.id},
                                  {"type", std::string(to_string(f.type))},
                                  {"pred_a", f.pred_a},
                                  {"pred_b", f.pred_b},
                                  {"similarity", f.similarity},
                                  {"rouge_a", f.rouge_a},
                                  {"rouge_b", f.rouge_b}}
                       .dump();
            out += '\n';
        }
        return out;
    }

    std::string render_tsv() const {
        std::string out = "question_type\tflagged\ttotal\n";
        size_t flagged_all = 0;
        for (const auto& [t, c] : flagged_counts) flagged_all += c;
        out += "ALL\t" + std::to_string(flagged_all) + '\t' +
               std::to_string(total_records) + '\n';
        for (QuestionType t : kAllQuestionTypes) {
            const auto f = flagged_counts.count(t) ? flagged_counts.at(t) : 0;
            const auto n = totals.count(t) ? totals.at(t) : 0;
            out += std::string(to_string(t)) + '\t' + std::to_string(f) + '\t' +
                   std::to_string(n) + '\n';
        }
        return out;
    }
};

// Two-step divergence flagging: keep prediction pairs whose ROUGE-L versus
// ground truth differs, then flag pairs whose mutual similarity falls under
// the threshold.
inline FlaggedReport divergence_report(const PredictionSet& preds_a,
                                       const PredictionSet& preds_b, const Corpus& corpus,
                                       const SimilarityScorer& scorer,
                                       double threshold = 0.5) {
    if (preds_a.predictions.size() != preds_b.predictions.size())
        throw IdSetMismatch("divergence_report: prediction sets differ in size");
    for (const auto& [id, _] : preds_a.predictions)
        if (!preds_b.predictions.count(id))
            throw IdSetMismatch("divergence_report: id '" + id + "' missing from one set");

    FlaggedReport report;
    report.threshold = threshold;
    report.total_records = corpus.size();
    for (QuestionType t : kAllQuestionTypes) {
        report.flagged_counts[t] = 0;
        report.totals[t] = 0;
    }

    for (const auto& r : corpus.records) {
        ++report.totals[r.question_type];
        const auto a_it = preds_a.predictions.find(r.id);
        const auto b_it = preds_b.predictions.find(r.id);
        if (a_it == preds_a.predictions.end() || b_it == preds_b.predictions.end()) continue;

        const double rouge_a = best_rouge(a_it->second, r.answers).f1;
        const double rouge_b = best_rouge(b_it->second, r.answers).f1;
        if (std::fabs(rouge_a - rouge_b) <= 1e-12) continue;

        const double sim = scorer.score(a_it->second, b_it->second, r.id);
        if (sim < threshold) {
            report.flagged.push_back(
                {r.id, r.question_type, a_it->second, b_it->second, sim, rouge_a, rouge_b});
            ++report.flagged_counts[r.question_type];
        }
    }
    return report;
}

enum class MixMode { CounterfactualFull, HalfHalf, Concat };

inline std::string_view to_string(MixMode m) {
    switch (m) {
        case MixMode::CounterfactualFull: return "cf";
        case MixMode::HalfHalf: return "half";
        case MixMode::Concat: return "concat";
    }
    return "";
}

inline std::optional<MixMode> parse_mix_mode(std::string_view s) {
    if (s == "cf") return MixMode::CounterfactualFull;
    if (s == "half") return MixMode::HalfHalf;
    if (s == "concat") return MixMode::Concat;
    return std::nullopt;
}

struct MixSpec {
    MixMode mode = MixMode::HalfHalf;
    uint64_t seed = 88;
};

// Training-set combinations. HalfHalf draws half of each question-type
// stratum from the original and half from the counterfactual (extra record
// of odd strata from the original), so no question is duplicated and the
// type distribution is preserved.
inline Corpus mix_training(const Corpus& original, const Corpus& counterfactual,
                           const MixSpec& spec) {
    if (spec.mode == MixMode::CounterfactualFull) return counterfactual;

    if (spec.mode == MixMode::Concat) {
        Corpus out;
        out.split = original.split;
        for (QARecord r : original.records) {
            r.id += "#orig";
            out.records.push_back(std::move(r));
        }
        for (QARecord r : counterfactual.records) {
            r.id += "#cf";
            out.records.push_back(std::move(r));
        }
        return out;
    }

    // HalfHalf.
    const auto orig_ids = original.id_set();
    const auto cf_ids = counterfactual.id_set();
    if (orig_ids != cf_ids)
        throw IdSetMismatch("mix_training half mode requires equal id sets");

    std::unordered_map<std::string, const QARecord*> cf_by_id;
    for (const auto& r : counterfactual.records) cf_by_id[r.id] = &r;

    std::map<QuestionType, std::vector<std::string>> strata;
    for (const auto& r : original.records) strata[r.question_type].push_back(r.id);

    std::mt19937_64 rng(spec.seed);
    std::unordered_set<std::string> draw_original;
    for (QuestionType t : kAllQuestionTypes) {
        auto it = strata.find(t);
        if (it == strata.end()) continue;
        auto& ids = it->second;
        for (size_t i = ids.size() - 1; i > 0; --i) {
            const size_t j = static_cast<size_t>(rng() % (i + 1));
            std::swap(ids[i], ids[j]);
        }
        const size_t from_original = (ids.size() + 1) / 2;
        for (size_t i = 0; i < from_original; ++i) draw_original.insert(ids[i]);
    }

    Corpus out;
    out.split = original.split;
    for (const auto& r : original.records) {
        if (draw_original.count(r.id))
            out.records.push_back(r);
        else
            out.records.push_back(*cf_by_id.at(r.id));
    }
    return out;
}

struct WerAuditRow {
    std::string id;
    ErrorRates rates;
};

struct WerAuditTable {
    std::vector<WerAuditRow> rows;
    double corpus_wer = 0.0;
    double corpus_mer = 0.0;
    size_t modified_tokens = 0;  // pooled S+D+I

    std::string render_tsv() const {
        std::string out = "id\twer\tmer\tsubs\tdels\tins\thits\n";
        for (const auto& r : rows)
            out += r.id + '\t' + format_4dp(r.rates.wer) + '\t' + format_4dp(r.rates.mer) +
                   '\t' + std::to_string(r.rates.substitutions) + '\t' +
                   std::to_string(r.rates.deletions) + '\t' +
                   std::to_string(r.rates.insertions) + '\t' +
                   std::to_string(r.rates.hits) + '\n';
        out += "CORPUS\t" + format_4dp(corpus_wer) + '\t' + format_4dp(corpus_mer) + '\t' +
               std::to_string(modified_tokens) + "\t-\t-\t-\n";
        return out;
    }
};

// Word/match error rates of an LLM-produced corpus against the rule-based
// corpus as ground truth, over section + question + answers.
inline WerAuditTable wer_audit(const Corpus& rule_based, const Corpus& llm) {
    if (rule_based.id_set() != llm.id_set())
        throw IdSetMismatch("wer_audit requires equal id sets");
    std::unordered_map<std::string, const QARecord*> llm_by_id;
    for (const auto& r : llm.records) llm_by_id[r.id] = &r;

    auto full_text = [](const QARecord& r) {
        std::string out = r.section_text + " " + r.question;
        for (const auto& a : r.answers) {
            out += ' ';
            out += a;
        }
        return out;
    };

    WerAuditTable table;
    size_t total_edits = 0, total_hits = 0, total_ref = 0;
    for (const auto& r : rule_based.records) {
        const QARecord& other = *llm_by_id.at(r.id);
        const auto ref = metric_tokens(full_text(r));
        const auto hyp = metric_tokens(full_text(other));
        const ErrorRates rates = error_rates_tokens(ref, hyp);
        total_edits += rates.edits();
        total_hits += rates.hits;
        total_ref += ref.size();
        table.rows.push_back({r.id, rates});
    }
    table.modified_tokens = total_edits;
    table.corpus_wer =
        total_ref == 0 ? 0.0 : static_cast<double>(total_edits) / static_cast<double>(total_ref);
    table.corpus_mer = (total_edits + total_hits) == 0
                           ? 0.0
                           : static_cast<double>(total_edits) /
                                 static_cast<double>(total_edits + total_hits);
    return table;
}

// Table-1 style layout: one column per run, ALL row first. Used both for
// freshly scored runs and for recorded published aggregates.
inline std::string render_runs_md(const std::vector<EvalRun>& runs) {
    std::string out = "| Question Type |";
    for (const auto& run : runs) {
        std::string label = run.test_variant;
        if (label.empty()) label = run.model_id;
        if (label.empty()) label = "run";
        out += " " + label + " |";
    }
    out += "\n|---|";
    for (size_t i = 0; i < runs.size(); ++i) out += "---|";
    out += '\n';
    for (const auto& stratum : detail::ordered_strata()) {
        bool any = false;
        for (const auto& run : runs) any |= run.aggregates.count(stratum) > 0;
        if (!any) continue;
        out += "| " + stratum + " |";
        for (const auto& run : runs) {
            const auto it = run.aggregates.find(stratum);
            out += ' ';
            out += it == run.aggregates.end() ? std::string("-")
                                              : format_2dp(it->second);
            out += " |";
        }
        out += '\n';
    }
    return out;
}

// Question-distribution style layout: flagged counts per named column plus
// the per-type totals column.
inline std::string render_flag_distribution_md(
    const std::vector<std::pair<std::string, const FlaggedReport*>>& columns) {
    std::string out = "| Question Type |";
    for (const auto& [name, _] : columns) out += " " + name + " |";
    out += " Total Count |\n|---|";
    for (size_t i = 0; i < columns.size() + 1; ++i) out += "---|";
    out += '\n';

    out += "| ALL |";
    size_t total = 0;
    for (const auto& [_, report] : columns) {
        size_t flagged_all = 0;
        for (const auto& [t, c] : report->flagged_counts) flagged_all += c;
        out += " " + std::to_string(flagged_all) + " |";
        total = report->total_records;
    }
    out += " " + std::to_string(total) + " |\n";

    for (QuestionType t : kAllQuestionTypes) {
        out += "| " + std::string(to_string(t)) + " |";
        size_t type_total = 0;
        for (const auto& [_, report] : columns) {
            const auto f =
                report->flagged_counts.count(t) ? report->flagged_counts.at(t) : 0;
            out += " " + std::to_string(f) + " |";
            type_total = report->totals.count(t) ? report->totals.at(t) : 0;
        }
        out += " " + std::to_string(type_total) + " |\n";
    }
    return out;
}

}  // namespace cda
