#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cda/common.hpp"
#include "cda/corpus.hpp"
#include "cda/lexicon.hpp"
#include "cda/lexing.hpp"
#include "cda/llmclient.hpp"

namespace cda {

struct FormatViolation : Error {
    using Error::Error;
};

struct LabelMutation : Error {
    using Error::Error;
};

struct UnparseablePairResponse : Error {
    using Error::Error;
};

enum class Strategy { RuleBased, LlmRewrite, LlmAssistedRuleBased };

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::RuleBased: return "rule";
        case Strategy::LlmRewrite: return "llm-rewrite";
        case Strategy::LlmAssistedRuleBased: return "llm-assisted";
    }
    return "";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
    if (s == "rule") return Strategy::RuleBased;
    if (s == "llm-rewrite") return Strategy::LlmRewrite;
    if (s == "llm-assisted") return Strategy::LlmAssistedRuleBased;
    return std::nullopt;
}

inline Variant variant_of(Strategy s) {
    switch (s) {
        case Strategy::RuleBased: return Variant::RuleBased;
        case Strategy::LlmRewrite: return Variant::LlmRewrite;
        case Strategy::LlmAssistedRuleBased: return Variant::LlmAssisted;
    }
    return Variant::Original;
}

enum class SwapRule { Dictionary, HerPersonal, HerPossessive };

inline std::string_view to_string(SwapRule r) {
    switch (r) {
        case SwapRule::Dictionary: return "dictionary";
        case SwapRule::HerPersonal: return "her_personal";
        case SwapRule::HerPossessive: return "her_possessive";
    }
    return "";
}

// One replacement, spanning bytes of the *original* text.
struct Swap {
    size_t begin = 0;
    size_t end = 0;
    std::string original_surface;
    std::string replacement_surface;
    SwapRule rule = SwapRule::Dictionary;
};

struct PerturbResult {
    std::string text;
    std::vector<Swap> swaps;
    size_t llm_pair_queries = 0;
    std::vector<std::pair<std::string, std::string>> learned_pairs;
    std::vector<std::string> skipped_queries;  // filtered or unparseable tokens
};

// Replays a swap ledger against the original text; the result must equal
// PerturbResult::text (tested as an invariant).
inline std::string apply_swaps(std::string_view original, const std::vector<Swap>& swaps) {
    std::string out;
    size_t pos = 0;
    for (const auto& s : swaps) {
        if (s.begin < pos || s.end > original.size() || s.begin > s.end)
            throw PreconditionError("swap ledger spans are not sorted and disjoint");
        out.append(original.substr(pos, s.begin - pos));
        out.append(s.replacement_surface);
        pos = s.end;
    }
    out.append(original.substr(pos));
    return out;
}

namespace detail {

// Dictionary resolution for one case-folded surface, including the "her"
// disambiguation and possessive-'s stems. Returns the lowercase replacement.
inline std::optional<std::pair<std::string, SwapRule>> resolve_swap(
    const std::string& folded, PosTag tag, const GenderLexicon& lex) {
    if (folded == "her") {
        return tag == PosTag::PronounPersonal
                   ? std::make_pair(std::string("him"), SwapRule::HerPersonal)
                   : std::make_pair(std::string("his"), SwapRule::HerPossessive);
    }
    if (const auto hit = lex.lookup(folded)) {
        if (*hit == folded) return std::nullopt;  // neutral word
        return std::make_pair(*hit, SwapRule::Dictionary);
    }
    if (folded.size() > 2 && folded.compare(folded.size() - 2, 2, "'s") == 0) {
        const std::string stem = folded.substr(0, folded.size() - 2);
        if (stem != "her" && !is_pronoun_block_word(stem)) {
            if (const auto hit = lex.lookup(stem); hit && *hit != stem)
                return std::make_pair(*hit + "'s", SwapRule::Dictionary);
        }
    }
    return std::nullopt;
}

inline bool contains_digit(std::string_view s) {
    for (char c : s)
        if (is_ascii_digit(c)) return true;
    return false;
}

}  // namespace detail

// Dictionary-driven token substitution. Proper names are never touched,
// "her" resolves to him/his by POS, case is restored from the source
// surface, and every byte outside the swap spans is preserved.
inline PerturbResult rule_based_swap(std::string_view text, const GenderLexicon& lex,
                                     const Tagger& tagger, const TagContext& ctx,
                                     const TokenizeOptions& opt = {}) {
    if (!lex.has_pronoun_block())
        throw MissingPronounBlock("rule_based_swap requires the pronoun block");

    PerturbResult result;
    const auto tagged = tagger.tag(tokenize(text, opt), ctx);
    std::string out;
    out.reserve(text.size());
    for (const auto& tt : tagged) {
        const Token& t = tt.token;
        if (t.kind != TokenKind::Word) {
            out += t.surface;
            continue;
        }
        const std::string folded = to_lower(t.surface);
        if (ctx.is_name(folded)) {
            out += t.surface;
            continue;
        }
        const auto swap = detail::resolve_swap(folded, tt.tag, lex);
        if (!swap) {
            out += t.surface;
            continue;
        }
        const std::string replacement = apply_case(swap->first, detect_case(t.surface));
        result.swaps.push_back({t.begin, t.end, t.surface, replacement, swap->second});
        out += replacement;
    }
    result.text = std::move(out);
    return result;
}

struct RewriteTemplate {
    std::string prompt_text;  // ends with "[Original]: "
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.0;
    int max_tokens = 1024;
    int max_format_retries = 2;
};

inline RewriteTemplate load_rewrite_template(const std::string& path) {
    RewriteTemplate t;
    t.prompt_text = read_file(path);
    return t;
}

namespace detail {

inline std::string strip_rewrite_markers(std::string_view response) {
    std::string s = trim(response);
    constexpr std::string_view kMarker = "[Rewritten]:";
    if (s.rfind(kMarker, 0) == 0) s = trim(s.substr(kMarker.size()));
    return s;
}

}  // namespace detail

// Whole-record LLM rewrite through the serialized flat format. Ground-truth
// labels must survive the round trip or the record is rejected.
inline QARecord llm_rewrite_record(const QARecord& record, ChatClient& client,
                                   const RewriteTemplate& tmpl) {
    const std::string serialized = serialize_sep_record(record);
    ChatRequest req;
    req.model = tmpl.model;
    req.temperature = tmpl.temperature;
    req.max_tokens = tmpl.max_tokens;
    req.messages = {{"user", tmpl.prompt_text + serialized}};

    std::string last_error;
    for (int attempt = 0; attempt <= tmpl.max_format_retries; ++attempt) {
        const std::string response = client.complete(req);
        QARecord rewritten;
        try {
            rewritten = parse_sep_record(detail::strip_rewrite_markers(response), record.id,
                                         record.story_name);
        } catch (const MalformedRecord& e) {
            last_error = e.what();
            continue;
        }
        if (rewritten.question_type != record.question_type ||
            rewritten.explicitness != record.explicitness)
            throw LabelMutation("record " + record.id +
                                ": model changed the type/explicitness labels");
        rewritten.variant = Variant::LlmRewrite;
        return rewritten;
    }
    throw FormatViolation("record " + record.id + ": unparseable rewrite after " +
                          std::to_string(tmpl.max_format_retries + 1) +
                          " attempts: " + last_error);
}

struct PairPrompt {
    std::string prompt_text;  // the pair-completion instructions + examples
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.0;
    int max_tokens = 16;
    int max_format_retries = 2;
};

inline PairPrompt load_pair_prompt(const std::string& path) {
    PairPrompt p;
    p.prompt_text = read_file(path);
    return p;
}

namespace detail {

// First whitespace-delimited alphabetic token of the completion, lowercased.
inline std::optional<std::string> normalize_pair_response(std::string_view response) {
    size_t i = 0;
    while (i < response.size()) {
        while (i < response.size() && std::isspace(static_cast<unsigned char>(response[i])))
            ++i;
        size_t j = i;
        while (j < response.size() && !std::isspace(static_cast<unsigned char>(response[j])))
            ++j;
        if (j > i) {
            const std::string_view tok = response.substr(i, j - i);
            bool alphabetic = true;
            for (size_t k = 0; k < tok.size(); ++k) {
                const unsigned char c = static_cast<unsigned char>(tok[k]);
                if (is_ascii_alpha(static_cast<char>(c)) || c >= 0x80) continue;
                if (c == '\'' && k > 0 && k + 1 < tok.size()) continue;
                alphabetic = false;
                break;
            }
            if (alphabetic) return to_lower(tok);
        }
        i = j;
    }
    return std::nullopt;
}

// Compact builtin fallback for the query guard. Real runs should supply a
// fuller list via --wordlist; anything absent is skipped, never queried.
inline const std::unordered_set<std::string>& builtin_wordlist() {
    static const std::unordered_set<std::string> words = {
        "prince",   "princess", "king",     "queen",    "father",   "mother",
        "daughter", "son",      "brother",  "sister",   "woman",    "man",
        "girl",     "boy",      "child",    "children", "wife",     "husband",
        "widow",    "widower",  "teacher",  "person",   "people",   "friend",
        "lady",     "lord",     "gentleman","maiden",   "youth",    "witch",
        "wizard",   "huntsman", "shepherd", "tailor",   "seamstress","heir",
        "heiress",  "emperor",  "empress",  "duke",     "duchess",  "baker",
        "farmer",   "miller",   "fisherman","soldier",  "knight",   "servant",
        "cook",     "nurse",    "doctor",   "merchant", "sailor",   "hunter",
        "giant",    "dwarf",    "fairy",    "dragon",   "wolf",     "bear",
        "fox",      "bird",     "horse",    "castle",   "forest",   "village",
        "kingdom",  "garden",   "cottage",  "mountain", "river",    "sea",
        "stone",    "tree",     "flower",   "gold",     "silver",   "crown",
        "throne",   "sword",    "ring",     "dress",    "shoe",     "slipper",
        "house",    "home",     "door",     "window",   "table",    "chair",
        "bread",    "water",    "fire",     "night",    "morning",  "evening",
        "story",    "tale",     "dream",    "wish",     "spell",    "magic",
        "work",     "name",     "life",     "heart",    "hand",     "head",
        "hair",     "eye",      "voice",    "word",     "supper",   "dinner",
    };
    return words;
}

}  // namespace detail

struct LlmAssistConfig {
    PairPrompt prompt;
    const std::unordered_set<std::string>* wordlist = nullptr;  // builtin if null
    std::mutex* lexicon_mutex = nullptr;  // single-writer guard for parallel runs
};

// Rule-based substitution whose dictionary grows on demand: unknown common
// nouns go through the pair-completion prompt, learned pairs persist in the
// lexicon. Short tokens, digit-bearing tokens, and tokens outside the word
// list are never queried.
inline PerturbResult llm_assisted_swap(std::string_view text, GenderLexicon& lex,
                                       const Tagger& tagger, const TagContext& ctx,
                                       ChatClient& client, const LlmAssistConfig& cfg,
                                       const TokenizeOptions& opt = {}) {
    if (!lex.has_pronoun_block())
        throw MissingPronounBlock("llm_assisted_swap requires the pronoun block");
    const auto& wordlist =
        cfg.wordlist ? *cfg.wordlist : detail::builtin_wordlist();

    PerturbResult result;
    const auto tagged = tagger.tag(tokenize(text, opt), ctx);
    std::string out;
    out.reserve(text.size());

    auto locked = [&](auto&& fn) {
        if (cfg.lexicon_mutex) {
            std::lock_guard<std::mutex> lock(*cfg.lexicon_mutex);
            return fn();
        }
        return fn();
    };

    for (const auto& tt : tagged) {
        const Token& t = tt.token;
        if (t.kind != TokenKind::Word) {
            out += t.surface;
            continue;
        }
        const bool eligible = tt.tag == PosTag::NounCommon ||
                              tt.tag == PosTag::PronounPersonal ||
                              tt.tag == PosTag::PronounPossessive;
        const std::string folded = to_lower(t.surface);
        if (!eligible || ctx.is_name(folded)) {
            out += t.surface;
            continue;
        }

        struct Probe {
            std::optional<std::pair<std::string, SwapRule>> swap;
            bool known = false;
        };
        Probe probe = locked([&] {
            return Probe{detail::resolve_swap(folded, tt.tag, lex), lex.contains(folded)};
        });
        auto swap = std::move(probe.swap);
        if (!swap && !probe.known) {
            // Unknown word: consult the LLM unless the guard filters it.
            if (folded.size() < 3 || detail::contains_digit(folded) ||
                !wordlist.count(folded)) {
                result.skipped_queries.push_back(folded);
                out += t.surface;
                continue;
            }
            std::optional<std::string> counterpart;
            ChatRequest req;
            req.model = cfg.prompt.model;
            req.temperature = cfg.prompt.temperature;
            req.max_tokens = cfg.prompt.max_tokens;
            req.messages = {{"user", cfg.prompt.prompt_text + folded + " →"}};
            for (int attempt = 0; attempt <= cfg.prompt.max_format_retries; ++attempt) {
                ++result.llm_pair_queries;
                const std::string response = client.complete(req);
                counterpart = detail::normalize_pair_response(response);
                if (counterpart) break;
            }
            if (!counterpart) {
                result.skipped_queries.push_back(folded);
                out += t.surface;
                continue;
            }
            locked([&] {
                try {
                    lex.insert_pair(folded, *counterpart, Provenance::Learned);
                    result.learned_pairs.emplace_back(folded, *counterpart);
                } catch (const ConflictingPair&) {
                    // Base entry wins; the conflicting response is dropped.
                    result.skipped_queries.push_back(folded + "(conflict)");
                } catch (const Error&) {
                    result.skipped_queries.push_back(folded + "(rejected)");
                }
                return 0;
            });
            swap = locked([&] { return detail::resolve_swap(folded, tt.tag, lex); });
        }

        if (!swap) {
            out += t.surface;
            continue;
        }
        const std::string replacement = apply_case(swap->first, detect_case(t.surface));
        result.swaps.push_back({t.begin, t.end, t.surface, replacement, swap->second});
        out += replacement;
    }
    result.text = std::move(out);
    return result;
}

struct PerturbDeps {
    GenderLexicon* lexicon = nullptr;
    const Tagger* tagger = nullptr;
    std::unordered_set<std::string> names;  // user-supplied + per-story
    ChatClient* client = nullptr;
    RewriteTemplate rewrite;
    LlmAssistConfig assist;
    TokenizeOptions tokenize_options;
    bool auto_names = true;  // collect per-record capitalized names
};

struct PerturbReport {
    Strategy strategy = Strategy::RuleBased;
    std::map<std::string, size_t> swap_counts;  // by rule name
    size_t llm_pair_queries = 0;
    std::vector<std::pair<std::string, std::string>> learned_pairs;
    std::vector<std::string> skipped_queries;

    void absorb(const PerturbResult& r) {
        for (const auto& s : r.swaps) ++swap_counts[std::string(to_string(s.rule))];
        llm_pair_queries += r.llm_pair_queries;
        learned_pairs.insert(learned_pairs.end(), r.learned_pairs.begin(),
                             r.learned_pairs.end());
        skipped_queries.insert(skipped_queries.end(), r.skipped_queries.begin(),
                               r.skipped_queries.end());
    }
};

// Perturbs section, question, and all answers under one shared context so
// the same word maps identically across fields. Labels and id never change.
inline std::pair<QARecord, PerturbReport> perturb_record(const QARecord& record,
                                                         Strategy strategy,
                                                         PerturbDeps& deps) {
    PerturbReport report;
    report.strategy = strategy;

    if (strategy == Strategy::LlmRewrite) {
        if (!deps.client) throw PreconditionError("llm-rewrite requires a chat client");
        QARecord out = llm_rewrite_record(record, *deps.client, deps.rewrite);
        return {std::move(out), std::move(report)};
    }

    if (!deps.lexicon || !deps.tagger)
        throw PreconditionError("rule strategies require a lexicon and tagger");

    TagContext ctx;
    ctx.names = deps.names;
    ctx.record_id = record.id;
    if (deps.auto_names) {
        std::vector<std::string_view> fields = {record.section_text, record.question};
        for (const auto& a : record.answers) fields.push_back(a);
        for (auto& n : collect_proper_names(fields)) ctx.names.insert(n);
    }

    auto swap_field = [&](std::string_view text, const std::string& field) {
        ctx.field = field;
        PerturbResult r;
        if (strategy == Strategy::RuleBased) {
            r = rule_based_swap(text, *deps.lexicon, *deps.tagger, ctx,
                                deps.tokenize_options);
        } else {
            if (!deps.client) throw PreconditionError("llm-assisted requires a chat client");
            r = llm_assisted_swap(text, *deps.lexicon, *deps.tagger, ctx, *deps.client,
                                  deps.assist, deps.tokenize_options);
        }
        report.absorb(r);
        return r.text;
    };

    QARecord out = record;
    out.section_text = swap_field(record.section_text, "section");
    out.question = swap_field(record.question, "question");
    for (size_t i = 0; i < record.answers.size(); ++i)
        out.answers[i] = swap_field(record.answers[i], "answer:" + std::to_string(i));
    out.variant = variant_of(strategy);
    return {std::move(out), std::move(report)};
}

struct QuarantineEntry {
    std::string id;
    std::string error;
    std::string stage;
};

struct AuditReport {
    Strategy strategy = Strategy::RuleBased;
    size_t records_in = 0;
    size_t records_out = 0;
    std::map<std::string, size_t> swap_counts;
    size_t llm_pair_queries = 0;
    std::vector<std::pair<std::string, std::string>> learned_pairs;
    std::vector<std::string> skipped_queries;
    std::vector<QuarantineEntry> quarantined;

    nlohmann::json to_json() const {
        nlohmann::json learned = nlohmann::json::array();
        for (const auto& [a, b] : learned_pairs) learned.push_back({a, b});
        nlohmann::json quarantine = nlohmann::json::array();
        for (const auto& q : quarantined)
            quarantine.push_back({{"id", q.id}, {"error", q.error}, {"stage", q.stage}});
        return nlohmann::json{{"strategy", std::string(to_string(strategy))},
                              {"records_in", records_in},
                              {"records_out", records_out},
                              {"swap_counts", swap_counts},
                              {"llm_pair_queries", llm_pair_queries},
                              {"learned_pairs", learned},
                              {"skipped_queries", skipped_queries},
                              {"quarantined", quarantine}};
    }
};

// Order-preserving corpus perturbation with quarantine-and-continue on
// per-record failure. Name lists are built per story before any swapping.
inline std::pair<Corpus, AuditReport> perturb_corpus(const Corpus& corpus, Strategy strategy,
                                                     PerturbDeps& deps, int jobs = 1) {
    AuditReport audit;
    audit.strategy = strategy;
    audit.records_in = corpus.size();

    // Per-story automatic name lists from the whole story context.
    std::unordered_map<std::string, std::unordered_set<std::string>> story_names;
    if (deps.auto_names) {
        std::unordered_map<std::string, std::vector<std::string_view>> story_texts;
        for (const auto& r : corpus.records) {
            auto& texts = story_texts[r.story_name];
            texts.push_back(r.section_text);
            texts.push_back(r.question);
            for (const auto& a : r.answers) texts.push_back(a);
        }
        for (const auto& [story, texts] : story_texts)
            story_names[story] = collect_proper_names(texts);
    }

    struct Slot {
        std::optional<QARecord> record;
        PerturbReport report;
        std::optional<QuarantineEntry> quarantine;
    };
    std::vector<Slot> slots(corpus.size());

    std::mutex lexicon_mutex;
    PerturbDeps base = deps;
    if (jobs > 1 && strategy == Strategy::LlmAssistedRuleBased)
        base.assist.lexicon_mutex = &lexicon_mutex;

    auto process = [&](size_t i) {
        const QARecord& r = corpus.records[i];
        PerturbDeps local = base;  // shallow: shares lexicon/tagger/client
        if (deps.auto_names) {
            const auto it = story_names.find(r.story_name);
            if (it != story_names.end())
                for (const auto& n : it->second) local.names.insert(n);
        }
        try {
            auto [record, report] = perturb_record(r, strategy, local);
            slots[i].record = std::move(record);
            slots[i].report = std::move(report);
        } catch (const std::exception& e) {
            slots[i].quarantine = QuarantineEntry{r.id, e.what(),
                                                  std::string(to_string(strategy))};
        }
    };

    const size_t n = corpus.size();
    if (jobs <= 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) process(i);
    } else {
        std::vector<std::thread> workers;
        std::atomic<size_t> next{0};
        const size_t worker_count = std::min<size_t>(static_cast<size_t>(jobs), n);
        for (size_t w = 0; w < worker_count; ++w)
            workers.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) process(i);
            });
        for (auto& w : workers) w.join();
    }

    Corpus out;
    out.split = corpus.split;
    for (auto& slot : slots) {
        if (slot.quarantine) {
            audit.quarantined.push_back(std::move(*slot.quarantine));
            continue;
        }
        out.records.push_back(std::move(*slot.record));
        for (const auto& [rule, count] : slot.report.swap_counts)
            audit.swap_counts[rule] += count;
        audit.llm_pair_queries += slot.report.llm_pair_queries;
        audit.learned_pairs.insert(audit.learned_pairs.end(),
                                   slot.report.learned_pairs.begin(),
                                   slot.report.learned_pairs.end());
        audit.skipped_queries.insert(audit.skipped_queries.end(),
                                     slot.report.skipped_queries.begin(),
                                     slot.report.skipped_queries.end());
    }
    audit.records_out = out.records.size();
    return {std::move(out), std::move(audit)};
}

}  // namespace cda
