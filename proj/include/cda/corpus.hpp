#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "cda/common.hpp"

namespace cda {

inline constexpr std::string_view kFieldSep = "<SEP>";
inline constexpr std::string_view kAnswerSep = "</s>";

struct MalformedRecord : Error {
    using Error::Error;
};

struct DuplicateId : Error {
    using Error::Error;
};

struct SerializationConflict : Error {
    using Error::Error;
};

struct InvalidRatios : Error {
    using Error::Error;
};

// The seven narrative-element question categories.
enum class QuestionType {
    Setting,
    Character,
    Action,
    OutcomeResolution,
    Feeling,
    CausalRelationship,
    Prediction,
};

inline constexpr std::array<QuestionType, 7> kAllQuestionTypes = {
    QuestionType::Setting,          QuestionType::Character,
    QuestionType::Action,           QuestionType::OutcomeResolution,
    QuestionType::Feeling,          QuestionType::CausalRelationship,
    QuestionType::Prediction,
};

inline std::string_view to_string(QuestionType t) {
    switch (t) {
        case QuestionType::Setting: return "setting";
        case QuestionType::Character: return "character";
        case QuestionType::Action: return "action";
        case QuestionType::OutcomeResolution: return "outcome resolution";
        case QuestionType::Feeling: return "feeling";
        case QuestionType::CausalRelationship: return "causal relationship";
        case QuestionType::Prediction: return "prediction";
    }
    return "";
}

inline std::optional<QuestionType> parse_question_type(std::string_view s) {
    for (QuestionType t : kAllQuestionTypes)
        if (s == to_string(t)) return t;
    return std::nullopt;
}

enum class ReasoningClass { Abstractive, Extractive };

inline std::string_view to_string(ReasoningClass c) {
    return c == ReasoningClass::Abstractive ? "abstractive" : "extractive";
}

// Abstractive: the answer requires inference from the section; extractive:
// the answer appears in it. Fixed total partition of the seven types.
inline ReasoningClass classify_reasoning(QuestionType t) {
    switch (t) {
        case QuestionType::OutcomeResolution:
        case QuestionType::CausalRelationship:
        case QuestionType::Prediction:
            return ReasoningClass::Abstractive;
        case QuestionType::Setting:
        case QuestionType::Character:
        case QuestionType::Action:
        case QuestionType::Feeling:
            return ReasoningClass::Extractive;
    }
    return ReasoningClass::Extractive;
}

enum class Explicitness { Explicit, Implicit };

inline std::string_view to_string(Explicitness e) {
    return e == Explicitness::Explicit ? "explicit" : "implicit";
}

inline std::optional<Explicitness> parse_explicitness(std::string_view s) {
    if (s == "explicit") return Explicitness::Explicit;
    if (s == "implicit") return Explicitness::Implicit;
    return std::nullopt;
}

enum class Variant { Original, RuleBased, LlmRewrite, LlmAssisted };

inline std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::Original: return "original";
        case Variant::RuleBased: return "rule-based";
        case Variant::LlmRewrite: return "llm-rewrite";
        case Variant::LlmAssisted: return "llm-assisted";
    }
    return "";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
    for (Variant v : {Variant::Original, Variant::RuleBased, Variant::LlmRewrite,
                      Variant::LlmAssisted})
        if (s == to_string(v)) return v;
    return std::nullopt;
}

// One story section + question + ordered ground-truth answers. The id is
// stable across perturbed variants of the same underlying record.
struct QARecord {
    std::string id;
    std::string story_name;
    std::string section_text;
    std::string question;
    std::vector<std::string> answers;
    QuestionType question_type = QuestionType::Action;
    Explicitness explicitness = Explicitness::Explicit;
    Variant variant = Variant::Original;

    bool operator==(const QARecord&) const = default;
};

// <SEP> and </s> are reserved delimiters of the flat format; payloads
// containing them are rejected rather than escaped.
inline void check_reserved_delimiters(const QARecord& r, const std::string& context) {
    auto check = [&](std::string_view field, std::string_view name) {
        if (field.find(kFieldSep) != std::string_view::npos ||
            field.find(kAnswerSep) != std::string_view::npos)
            throw SerializationConflict(context + ": field '" + std::string(name) +
                                        "' contains a reserved delimiter");
    };
    check(r.section_text, "section");
    check(r.question, "question");
    for (size_t i = 0; i < r.answers.size(); ++i)
        check(r.answers[i], "answer:" + std::to_string(i));
}

inline void validate_record(const QARecord& r, const std::string& context) {
    if (trim(r.id).empty()) throw MalformedRecord(context + ": empty id");
    if (trim(r.section_text).empty()) throw MalformedRecord(context + ": empty section");
    if (trim(r.question).empty()) throw MalformedRecord(context + ": empty question");
    if (r.answers.empty()) throw MalformedRecord(context + ": no answers");
    for (const auto& a : r.answers)
        if (trim(a).empty()) throw MalformedRecord(context + ": empty answer");
    check_reserved_delimiters(r, context);
}

namespace detail {

// Strips the single canonical space on each side of a delimiter split.
inline std::string strip_one_space(std::string_view s) {
    if (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    if (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return std::string(s);
}

}  // namespace detail

// Parses `SECTION <SEP> QUESTION <SEP> ANS1 [</s> ANS2 ...] <SEP> TYPE <SEP>
// EXPLICITNESS`. Interior text is preserved byte-exactly; only the single
// spaces around delimiters are stripped.
inline QARecord parse_sep_record(std::string_view line, const std::string& id,
                                 const std::string& story_name = "") {
    const auto fields = split_on(line, kFieldSep);
    if (fields.size() != 5)
        throw MalformedRecord("record " + id + ": expected 4 '<SEP>' delimiters, found " +
                              std::to_string(fields.size() - 1));

    QARecord r;
    r.id = id;
    r.story_name = story_name;
    r.section_text = detail::strip_one_space(fields[0]);
    r.question = detail::strip_one_space(fields[1]);
    for (const auto& ans : split_on(fields[2], kAnswerSep))
        r.answers.push_back(detail::strip_one_space(ans));

    const std::string type_tok = detail::strip_one_space(fields[3]);
    const auto qt = parse_question_type(type_tok);
    if (!qt)
        throw MalformedRecord("record " + id + ": unknown question type '" + type_tok +
                              "' at field 4");
    r.question_type = *qt;

    const std::string ex_tok = detail::strip_one_space(fields[4]);
    const auto ex = parse_explicitness(ex_tok);
    if (!ex)
        throw MalformedRecord("record " + id + ": unknown explicitness '" + ex_tok +
                              "' at field 5");
    r.explicitness = *ex;

    validate_record(r, "record " + id);
    return r;
}

inline std::string serialize_sep_record(const QARecord& r) {
    check_reserved_delimiters(r, "record " + r.id);
    std::string answers;
    for (size_t i = 0; i < r.answers.size(); ++i) {
        if (i) answers += " </s> ";
        answers += r.answers[i];
    }
    std::string out;
    out += r.section_text;
    out += " <SEP> ";
    out += r.question;
    out += " <SEP> ";
    out += answers;
    out += " <SEP> ";
    out += to_string(r.question_type);
    out += " <SEP> ";
    out += to_string(r.explicitness);
    return out;
}

enum class Split { Train, Validation, Test, Unsplit };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
        case Split::Unsplit: return "unsplit";
    }
    return "";
}

struct Corpus {
    std::vector<QARecord> records;
    Split split = Split::Unsplit;

    size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    const QARecord* find(std::string_view id) const {
        for (const auto& r : records)
            if (r.id == id) return &r;
        return nullptr;
    }

    std::unordered_set<std::string> id_set() const {
        std::unordered_set<std::string> ids;
        ids.reserve(records.size());
        for (const auto& r : records) ids.insert(r.id);
        return ids;
    }
};

inline nlohmann::json record_to_json(const QARecord& r) {
    return nlohmann::json{{"id", r.id},
                          {"story_name", r.story_name},
                          {"section", r.section_text},
                          {"question", r.question},
                          {"answers", r.answers},
                          {"type", std::string(to_string(r.question_type))},
                          {"explicitness", std::string(to_string(r.explicitness))},
                          {"variant", std::string(to_string(r.variant))}};
}

inline QARecord record_from_json(const nlohmann::json& j, const std::string& context,
                                 const std::string& fallback_id = "") {
    QARecord r;
    try {
        r.id = j.contains("id") ? j.at("id").get<std::string>() : fallback_id;
        r.story_name = j.value("story_name", "");
        r.section_text = j.at("section").get<std::string>();
        r.question = j.at("question").get<std::string>();
        r.answers = j.at("answers").get<std::vector<std::string>>();
        const std::string type_s = j.at("type").get<std::string>();
        const auto qt = parse_question_type(type_s);
        if (!qt) throw MalformedRecord(context + ": unknown question type '" + type_s + "'");
        r.question_type = *qt;
        const std::string ex_s = j.value("explicitness", "explicit");
        const auto ex = parse_explicitness(ex_s);
        if (!ex) throw MalformedRecord(context + ": unknown explicitness '" + ex_s + "'");
        r.explicitness = *ex;
        const std::string var_s = j.value("variant", "original");
        const auto var = parse_variant(var_s);
        if (!var) throw MalformedRecord(context + ": unknown variant '" + var_s + "'");
        r.variant = *var;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedRecord(context + ": " + e.what());
    }
    validate_record(r, context);
    return r;
}

// Loads a JSONL corpus. Records without an id get a synthesized
// `storyname#sectionidx#qidx` style id based on the line number.
inline Corpus load_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus: " + path);

    Corpus corpus;
    std::unordered_set<std::string> ids;
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
            throw MalformedRecord(context + ": invalid JSON: " + e.what());
        }
        std::string fallback = j.value("story_name", std::string("record")) + "#0#" +
                               std::to_string(lineno - 1);
        QARecord r = record_from_json(j, context, fallback);
        if (!ids.insert(r.id).second)
            throw DuplicateId(context + ": duplicate id '" + r.id + "'");
        corpus.records.push_back(std::move(r));
    }
    return corpus;
}

inline std::string corpus_to_jsonl(const Corpus& corpus) {
    std::string out;
    for (const auto& r : corpus.records) {
        out += record_to_json(r).dump();
        out += '\n';
    }
    return out;
}

inline void save_jsonl(const Corpus& corpus, const std::string& path) {
    write_file_atomic(path, corpus_to_jsonl(corpus));
}

// Deterministic seeded partition. Sizes are floor-allocated for validation
// and test; the remainder goes to train.
inline std::tuple<Corpus, Corpus, Corpus> split_corpus(const Corpus& corpus,
                                                       double train_ratio, double val_ratio,
                                                       double test_ratio, uint64_t seed) {
    if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0)
        throw InvalidRatios("ratios must be non-negative");
    if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
        throw InvalidRatios("ratios must sum to 1");
    if (corpus.empty()) throw InvalidRatios("cannot split an empty corpus");

    const size_t n = corpus.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    // Fisher-Yates with an explicit generator so the partition is stable
    // across standard libraries.
    std::mt19937_64 rng(seed);
    for (size_t i = n - 1; i > 0; --i) {
        const size_t j = static_cast<size_t>(rng() % (i + 1));
        std::swap(order[i], order[j]);
    }

    const size_t n_val = static_cast<size_t>(static_cast<double>(n) * val_ratio);
    const size_t n_test = static_cast<size_t>(static_cast<double>(n) * test_ratio);
    const size_t n_train = n - n_val - n_test;

    Corpus train{{}, Split::Train}, val{{}, Split::Validation}, test{{}, Split::Test};
    for (size_t i = 0; i < n; ++i) {
        const QARecord& r = corpus.records[order[i]];
        if (i < n_train)
            train.records.push_back(r);
        else if (i < n_train + n_val)
            val.records.push_back(r);
        else
            test.records.push_back(r);
    }
    return {std::move(train), std::move(val), std::move(test)};
}

inline std::map<QuestionType, size_t> type_counts(const Corpus& corpus) {
    std::map<QuestionType, size_t> counts;
    for (QuestionType t : kAllQuestionTypes) counts[t] = 0;
    for (const auto& r : corpus.records) ++counts[r.question_type];
    return counts;
}

}  // namespace cda
