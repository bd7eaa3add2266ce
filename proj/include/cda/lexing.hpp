#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "cda/common.hpp"

namespace cda {

struct NonContiguousSpans : Error {
    using Error::Error;
};

enum class TokenKind { Word, Number, Punct, Whitespace };

// Byte span into the source text. Tokens from tokenize() tile the source:
// concatenating the surfaces reproduces it exactly.
struct Token {
    std::string surface;
    size_t begin = 0;
    size_t end = 0;
    TokenKind kind = TokenKind::Punct;

    bool operator==(const Token&) const = default;
};

enum class PosTag {
    NounCommon,
    NounProper,
    PronounPersonal,
    PronounPossessive,
    Adjective,
    Other,
};

inline std::string_view to_string(PosTag t) {
    switch (t) {
        case PosTag::NounCommon: return "noun_common";
        case PosTag::NounProper: return "noun_proper";
        case PosTag::PronounPersonal: return "pronoun_personal";
        case PosTag::PronounPossessive: return "pronoun_possessive";
        case PosTag::Adjective: return "adjective";
        case PosTag::Other: return "other";
    }
    return "";
}

inline std::optional<PosTag> parse_pos_tag(std::string_view s) {
    for (PosTag t : {PosTag::NounCommon, PosTag::NounProper, PosTag::PronounPersonal,
                     PosTag::PronounPossessive, PosTag::Adjective, PosTag::Other})
        if (s == to_string(t)) return t;
    return std::nullopt;
}

struct TaggedToken {
    Token token;
    PosTag tag = PosTag::Other;
};

struct TokenizeOptions {
    // Reproduces the reference tokenizer's contraction splitting for audit
    // parity ("didn't" -> "didn", "'", "t"). Off by default: contractions
    // stay whole.
    bool split_contractions = false;
};

namespace detail {

// Non-ASCII bytes are treated as letter bytes, which keeps multi-byte
// UTF-8 sequences inside one Word token and preserves the tiling invariant
// for arbitrary input.
inline bool is_word_byte(unsigned char c) { return is_ascii_alpha(static_cast<char>(c)) || c >= 0x80; }

}  // namespace detail

// Regex-grade scanner over bytes. Word = letters with interior apostrophes,
// Number = digit run, Whitespace = blank run, anything else is a single
// Punct byte.
inline std::vector<Token> tokenize(std::string_view text, const TokenizeOptions& opt = {}) {
    std::vector<Token> tokens;
    const size_t n = text.size();
    size_t i = 0;
    auto push = [&](size_t b, size_t e, TokenKind k) {
        tokens.push_back(Token{std::string(text.substr(b, e - b)), b, e, k});
    };
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c) && c < 0x80) {
            size_t j = i + 1;
            while (j < n && std::isspace(static_cast<unsigned char>(text[j])) &&
                   static_cast<unsigned char>(text[j]) < 0x80)
                ++j;
            push(i, j, TokenKind::Whitespace);
            i = j;
        } else if (detail::is_word_byte(c)) {
            size_t j = i + 1;
            while (j < n) {
                const unsigned char w = static_cast<unsigned char>(text[j]);
                if (detail::is_word_byte(w)) {
                    ++j;
                } else if (!opt.split_contractions && w == '\'' && j + 1 < n &&
                           detail::is_word_byte(static_cast<unsigned char>(text[j + 1]))) {
                    j += 2;
                } else {
                    break;
                }
            }
            push(i, j, TokenKind::Word);
            i = j;
        } else if (is_ascii_digit(static_cast<char>(c))) {
            size_t j = i + 1;
            while (j < n && is_ascii_digit(text[j])) ++j;
            push(i, j, TokenKind::Number);
            i = j;
        } else {
            push(i, i + 1, TokenKind::Punct);
            ++i;
        }
    }
    return tokens;
}

// Inverse of tokenize for any span-tiling token list.
inline std::string detokenize(const std::vector<Token>& tokens) {
    std::string out;
    size_t expected = tokens.empty() ? 0 : tokens.front().begin;
    if (!tokens.empty() && tokens.front().begin != 0)
        throw NonContiguousSpans("first token does not start at byte 0");
    for (const auto& t : tokens) {
        if (t.begin != expected)
            throw NonContiguousSpans("gap before byte " + std::to_string(t.begin));
        if (t.end - t.begin != t.surface.size())
            throw NonContiguousSpans("span/surface length mismatch at byte " +
                                     std::to_string(t.begin));
        out += t.surface;
        expected = t.end;
    }
    return out;
}

// Name lists and per-record identity the taggers consult. Names are matched
// case-insensitively.
struct TagContext {
    std::unordered_set<std::string> names;
    std::string record_id;
    std::string field;

    bool is_name(std::string_view word) const { return names.count(to_lower(word)) > 0; }
};

inline std::unordered_set<std::string> load_name_list(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open name list: " + path);
    std::unordered_set<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        const std::string name = trim(line);
        if (name.empty() || name[0] == '#') continue;
        names.insert(to_lower(name));
    }
    return names;
}

// Builds the automatic per-story name list: capitalized tokens that occur
// sentence-medially at least once.
inline std::unordered_set<std::string> collect_proper_names(
    const std::vector<std::string_view>& texts) {
    std::unordered_set<std::string> names;
    for (std::string_view text : texts) {
        const auto tokens = tokenize(text);
        bool sentence_start = true;
        for (const auto& t : tokens) {
            if (t.kind == TokenKind::Whitespace) continue;
            if (t.kind == TokenKind::Word) {
                if (!sentence_start && is_ascii_upper(t.surface[0]))
                    names.insert(to_lower(t.surface));
                sentence_start = false;
            } else if (t.kind == TokenKind::Punct &&
                       (t.surface == "." || t.surface == "!" || t.surface == "?")) {
                sentence_start = true;
            } else {
                sentence_start = false;
            }
        }
    }
    return names;
}

class Tagger {
   public:
    virtual ~Tagger() = default;
    virtual std::vector<TaggedToken> tag(const std::vector<Token>& tokens,
                                         const TagContext& ctx) const = 0;
};

namespace detail {

// Closed-class words that cannot head a noun phrase after "her". Seeing one
// right after "her" means the pronoun was an object, not a determiner.
inline const std::unordered_set<std::string>& function_words() {
    static const std::unordered_set<std::string> words = {
        "a",       "about",   "after",   "again",   "against", "all",      "along",
        "although","am",      "among",   "an",      "and",     "any",      "are",
        "around",  "as",      "at",      "away",    "back",    "be",       "because",
        "been",    "before",  "behind",  "being",   "below",   "beneath",  "beside",
        "between", "beyond",  "but",     "by",      "came",    "can",      "come",
        "could",   "did",     "do",      "does",    "done",    "down",     "during",
        "even",    "except",  "for",     "from",    "had",     "has",      "have",
        "having",  "he",      "her",     "here",    "hers",    "him",      "his",
        "how",     "i",       "if",      "in",      "inside",  "into",     "is",
        "it",      "its",     "just",    "may",     "me",      "might",    "must",
        "my",      "near",    "never",   "no",      "not",     "now",      "of",
        "off",     "on",      "once",    "only",    "onto",    "or",       "our",
        "out",     "outside", "over",    "said",    "say",     "says",     "shall",
        "she",     "should",  "so",      "some",    "soon",    "still",    "than",
        "that",    "the",     "their",   "them",    "then",    "there",    "these",
        "they",    "this",    "those",   "through", "till",    "to",       "too",
        "toward",  "towards", "twice",   "under",   "unless",  "until",    "up",
        "upon",    "us",      "very",    "was",     "we",      "went",     "were",
        "what",    "when",    "where",   "which",   "while",   "who",      "whom",
        "whose",   "why",     "will",    "with",    "within",  "without",  "would",
        "yet",     "you",     "your",
    };
    return words;
}

inline const std::unordered_map<std::string, PosTag>& pronoun_tags() {
    static const std::unordered_map<std::string, PosTag> tags = {
        {"he", PosTag::PronounPersonal},       {"she", PosTag::PronounPersonal},
        {"him", PosTag::PronounPersonal},      {"himself", PosTag::PronounPersonal},
        {"herself", PosTag::PronounPersonal},  {"his", PosTag::PronounPossessive},
        {"hers", PosTag::PronounPossessive},
    };
    return tags;
}

inline const std::unordered_set<std::string>& common_nouns() {
    static const std::unordered_set<std::string> words = {
        "king",    "queen",   "prince",  "princess", "father", "mother",  "son",
        "daughter","brother", "sister",  "child",    "woman",  "man",     "girl",
        "boy",     "wife",    "husband", "throne",   "castle", "forest",  "story",
        "work",    "name",    "life",    "hair",     "ring",   "slipper", "supper",
        "home",    "house",   "horse",   "garden",   "crown",  "gold",    "day",
        "night",   "sea",     "wood",    "woods",    "bird",   "tree",    "water",
    };
    return words;
}

inline bool has_suffix(std::string_view word, std::string_view suffix) {
    return word.size() > suffix.size() &&
           word.compare(word.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline bool looks_adjectival(std::string_view w) {
    return has_suffix(w, "ous") || has_suffix(w, "ful") || has_suffix(w, "ish") ||
           has_suffix(w, "ive") || has_suffix(w, "less") || has_suffix(w, "able") ||
           has_suffix(w, "ible") || has_suffix(w, "al") || has_suffix(w, "est");
}

inline bool looks_nounish(std::string_view w) {
    return has_suffix(w, "tion") || has_suffix(w, "sion") || has_suffix(w, "ness") ||
           has_suffix(w, "ment") || has_suffix(w, "ship") || has_suffix(w, "dom") ||
           has_suffix(w, "hood") || has_suffix(w, "ity") || has_suffix(w, "ess") ||
           has_suffix(w, "man") || has_suffix(w, "woman") || has_suffix(w, "men") ||
           has_suffix(w, "women") || has_suffix(w, "er") || has_suffix(w, "or");
}

// A word that can plausibly start the noun phrase owned by "her": any
// content word. Function words, adverbs in -ly, and non-words cannot.
inline bool noun_candidate(std::string_view lower_word) {
    if (function_words().count(std::string(lower_word))) return false;
    if (has_suffix(lower_word, "ly")) return false;
    return true;
}

}  // namespace detail

// Heuristic baseline tagger: closed-class pronouns, name-list or
// mid-sentence-capital proper nouns, suffix-driven noun/adjective calls.
// "her" resolves by lookahead; the ambiguous default is possessive.
class HeuristicTagger : public Tagger {
   public:
    std::vector<TaggedToken> tag(const std::vector<Token>& tokens,
                                 const TagContext& ctx) const override {
        std::vector<TaggedToken> out;
        out.reserve(tokens.size());
        bool sentence_start = true;
        for (size_t i = 0; i < tokens.size(); ++i) {
            const Token& t = tokens[i];
            if (t.kind != TokenKind::Word) {
                out.push_back({t, PosTag::Other});
                if (t.kind == TokenKind::Punct &&
                    (t.surface == "." || t.surface == "!" || t.surface == "?"))
                    sentence_start = true;
                else if (t.kind != TokenKind::Whitespace)
                    sentence_start = false;
                continue;
            }

            const std::string lower = to_lower(t.surface);
            PosTag tag = PosTag::Other;
            if (ctx.is_name(lower)) {
                tag = PosTag::NounProper;
            } else if (lower == "her") {
                tag = resolve_her(tokens, i);
            } else if (auto it = detail::pronoun_tags().find(lower);
                       it != detail::pronoun_tags().end()) {
                tag = it->second;
            } else if (!sentence_start && is_ascii_upper(t.surface[0])) {
                tag = PosTag::NounProper;
            } else if (detail::common_nouns().count(lower)) {
                tag = PosTag::NounCommon;
            } else if (detail::function_words().count(lower)) {
                tag = PosTag::Other;
            } else if (detail::looks_adjectival(lower)) {
                tag = PosTag::Adjective;
            } else if (detail::looks_nounish(lower)) {
                tag = PosTag::NounCommon;
            } else if (detail::noun_candidate(lower)) {
                tag = PosTag::NounCommon;
            }
            out.push_back({t, tag});
            sentence_start = false;
        }
        return out;
    }

   private:
    static PosTag resolve_her(const std::vector<Token>& tokens, size_t i) {
        for (size_t j = i + 1; j < tokens.size(); ++j) {
            const Token& next = tokens[j];
            if (next.kind == TokenKind::Whitespace) continue;
            if (next.kind != TokenKind::Word) return PosTag::PronounPersonal;
            return detail::noun_candidate(to_lower(next.surface))
                       ? PosTag::PronounPossessive
                       : PosTag::PronounPersonal;
        }
        // Nothing follows: "...gave it to her".
        return PosTag::PronounPersonal;
    }
};

// External tagger via sidecar annotations: JSONL lines
// {"id": ..., "field": "section"|"question"|"answer:i", "tags": [[b,e,"TAG"],...]}.
// Fields without an entry fall back to the heuristic baseline.
class SidecarTagger : public Tagger {
   public:
    explicit SidecarTagger(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open sidecar tag file: " + path);
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
                const std::string key =
                    j.at("id").get<std::string>() + "\x1f" + j.at("field").get<std::string>();
                auto& spans = entries_[key];
                for (const auto& triple : j.at("tags")) {
                    const size_t b = triple.at(0).get<size_t>();
                    const size_t e = triple.at(1).get<size_t>();
                    const auto tag = parse_pos_tag(triple.at(2).get<std::string>());
                    if (!tag)
                        throw Error("unknown tag '" + triple.at(2).get<std::string>() + "'");
                    spans[{b, e}] = *tag;
                }
            } catch (const nlohmann::json::exception& e) {
                throw MalformedSidecar(path + ":" + std::to_string(lineno) + ": " + e.what());
            } catch (const Error& e) {
                throw MalformedSidecar(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    struct MalformedSidecar : Error {
        using Error::Error;
    };

    std::vector<TaggedToken> tag(const std::vector<Token>& tokens,
                                 const TagContext& ctx) const override {
        const auto it = entries_.find(ctx.record_id + "\x1f" + ctx.field);
        if (it == entries_.end()) return fallback_.tag(tokens, ctx);
        std::vector<TaggedToken> out;
        out.reserve(tokens.size());
        for (const auto& t : tokens) {
            PosTag tag = PosTag::Other;
            if (t.kind == TokenKind::Word) {
                const auto hit = it->second.find({t.begin, t.end});
                if (hit != it->second.end()) tag = hit->second;
            }
            out.push_back({t, tag});
        }
        return out;
    }

   private:
    std::map<std::string, std::map<std::pair<size_t, size_t>, PosTag>> entries_;
    HeuristicTagger fallback_;
};

}  // namespace cda
