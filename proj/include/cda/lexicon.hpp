#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cda/common.hpp"

namespace cda {

struct ConflictingPair : Error {
    using Error::Error;
};

struct ProperNameRejected : Error {
    using Error::Error;
};

struct NonAlphabetic : Error {
    using Error::Error;
};

struct MalformedLexiconLine : Error {
    using Error::Error;
};

struct MissingPronounBlock : Error {
    using Error::Error;
};

enum class Provenance { Seed, Manual, Learned };

inline std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::Seed: return "seed";
        case Provenance::Manual: return "manual";
        case Provenance::Learned: return "learned";
    }
    return "";
}

inline std::optional<Provenance> parse_provenance(std::string_view s) {
    if (s == "seed") return Provenance::Seed;
    if (s == "manual") return Provenance::Manual;
    if (s == "learned") return Provenance::Learned;
    return std::nullopt;
}

// The eight closed-class pronouns. English pronouns are not involutive
// (him->her but her->him, his->her), so they live in a dedicated table
// rather than the symmetric pair map; "her" and "his" resolution beyond the
// canonical entry is the swap rule's job.
inline const std::vector<std::string>& pronoun_block_keys() {
    static const std::vector<std::string> keys = {"he",  "she",     "him",     "her",
                                                  "his", "hers",    "himself", "herself"};
    return keys;
}

inline bool is_pronoun_block_word(std::string_view w) {
    for (const auto& k : pronoun_block_keys())
        if (w == k) return true;
    return false;
}

struct MergeConflict {
    std::string key;
    std::string base_counterpart;
    std::string other_counterpart;
};

// Bidirectional gendered word-pair dictionary. Open-class pairs are
// symmetric and involutive; neutral words map to themselves.
class GenderLexicon {
   public:
    GenderLexicon() = default;

    explicit GenderLexicon(std::unordered_set<std::string> guard_names)
        : guard_names_(std::move(guard_names)) {}

    // Case-insensitive; returns the lowercase counterpart. Neutral words
    // return themselves. Pronouns resolve through the pronoun table.
    std::optional<std::string> lookup(std::string_view word) const {
        const std::string key = to_lower(word);
        if (auto it = pronouns_.find(key); it != pronouns_.end()) return it->second;
        if (neutral_.count(key)) return key;
        if (auto it = pairs_.find(key); it != pairs_.end()) return it->second;
        return std::nullopt;
    }

    bool contains(std::string_view word) const { return lookup(word).has_value(); }

    bool is_neutral(std::string_view word) const { return neutral_.count(to_lower(word)) > 0; }

    // Inserts both directions; a == b marks the word neutral instead.
    void insert_pair(std::string_view a_raw, std::string_view b_raw, Provenance prov) {
        const std::string a = to_lower(a_raw);
        const std::string b = to_lower(b_raw);
        validate_word(a);
        validate_word(b);

        if (is_pronoun_block_word(a) || is_pronoun_block_word(b)) {
            // The closed class is fixed; re-inserting the canonical mapping
            // is a no-op, anything else conflicts.
            if (auto it = pronouns_.find(a); it != pronouns_.end() && it->second == b) return;
            throw ConflictingPair("pronoun '" + a + "' cannot be redefined");
        }

        if (a == b) {
            if (auto it = pairs_.find(a); it != pairs_.end())
                throw ConflictingPair("'" + a + "' already maps to '" + it->second + "'");
            if (neutral_.insert(a).second) provenance_[a] = prov;
            return;
        }

        const auto existing_a = lookup(a);
        const auto existing_b = lookup(b);
        if (existing_a && *existing_a != b)
            throw ConflictingPair("'" + a + "' already maps to '" + *existing_a + "'");
        if (existing_b && *existing_b != a)
            throw ConflictingPair("'" + b + "' already maps to '" + *existing_b + "'");
        if (existing_a && existing_b) return;  // identical pair, idempotent

        pairs_[a] = b;
        pairs_[b] = a;
        provenance_[a] = prov;
        provenance_[b] = prov;
    }

    void set_pronoun_entry(std::string_view key, std::string_view value) {
        const std::string k = to_lower(key);
        const std::string v = to_lower(value);
        if (!is_pronoun_block_word(k))
            throw NonAlphabetic("'" + k + "' is not a closed-class pronoun");
        validate_word(v);
        const auto it = pronouns_.find(k);
        if (it != pronouns_.end() && it->second != v)
            throw ConflictingPair("pronoun '" + k + "' already maps to '" + it->second + "'");
        pronouns_[k] = v;
    }

    bool has_pronoun_block() const {
        for (const auto& k : pronoun_block_keys())
            if (!pronouns_.count(k)) return false;
        return true;
    }

    const std::unordered_map<std::string, std::string>& pronouns() const { return pronouns_; }

    std::optional<Provenance> provenance_of(std::string_view word) const {
        const auto it = provenance_.find(to_lower(word));
        if (it == provenance_.end()) return std::nullopt;
        return it->second;
    }

    void set_guard_names(std::unordered_set<std::string> names) {
        guard_names_ = std::move(names);
        for (const auto& [k, v] : pairs_)
            if (guard_names_.count(k))
                throw ProperNameRejected("lexicon key '" + k + "' is a configured proper name");
        for (const auto& w : neutral_)
            if (guard_names_.count(w))
                throw ProperNameRejected("lexicon key '" + w + "' is a configured proper name");
    }

    const std::unordered_set<std::string>& guard_names() const { return guard_names_; }

    size_t pair_count() const { return pairs_.size(); }
    size_t neutral_count() const { return neutral_.size(); }

    const std::unordered_map<std::string, std::string>& pairs() const { return pairs_; }
    const std::unordered_set<std::string>& neutral() const { return neutral_; }

    std::vector<MergeConflict> merge_from(const GenderLexicon& other) {
        std::vector<MergeConflict> conflicts;
        auto try_insert = [&](const std::string& a, const std::string& b, Provenance prov) {
            const auto mine = lookup(a);
            const auto mine_b = lookup(b);
            if (mine && *mine != b) {
                conflicts.push_back({a, *mine, b});
                return;
            }
            if (mine_b && *mine_b != a) {
                conflicts.push_back({b, *mine_b, a});
                return;
            }
            if (mine && mine_b) return;
            insert_pair(a, b, prov);
        };
        for (const auto& [k, v] : other.pairs_) {
            if (k > v) continue;  // visit each pair once
            const auto prov = other.provenance_of(k).value_or(Provenance::Learned);
            try_insert(k, v, prov);
        }
        for (const auto& w : other.neutral_) {
            const auto prov = other.provenance_of(w).value_or(Provenance::Learned);
            const auto mine = lookup(w);
            if (mine && *mine != w) {
                conflicts.push_back({w, *mine, w});
                continue;
            }
            if (!mine) insert_pair(w, w, prov);
        }
        for (const auto& [k, v] : other.pronouns_)
            if (!pronouns_.count(k)) pronouns_[k] = v;
        return conflicts;
    }

    // Canonical TSV rendering: pronoun block first, then sorted pairs (one
    // direction each), then neutral words.
    std::string to_tsv() const {
        std::string out;
        for (const auto& k : pronoun_block_keys()) {
            const auto it = pronouns_.find(k);
            if (it == pronouns_.end()) continue;
            out += k;
            out += '\t';
            out += it->second;
            out += "\tseed\n";
        }
        std::map<std::string, std::string> sorted(pairs_.begin(), pairs_.end());
        for (const auto& [k, v] : sorted) {
            if (k > v) continue;
            out += k;
            out += '\t';
            out += v;
            out += '\t';
            out += to_string(provenance_of(k).value_or(Provenance::Manual));
            out += '\n';
        }
        std::set<std::string> neutral_sorted(neutral_.begin(), neutral_.end());
        for (const auto& w : neutral_sorted) {
            out += w;
            out += '\t';
            out += w;
            out += '\t';
            out += to_string(provenance_of(w).value_or(Provenance::Manual));
            out += '\n';
        }
        return out;
    }

   private:
    void validate_word(const std::string& w) const {
        if (w.empty()) throw NonAlphabetic("empty lexicon word");
        for (size_t i = 0; i < w.size(); ++i) {
            const unsigned char c = static_cast<unsigned char>(w[i]);
            if (is_ascii_alpha(static_cast<char>(c)) || c >= 0x80) continue;
            if (c == '\'' && i > 0 && i + 1 < w.size()) continue;
            throw NonAlphabetic("lexicon word '" + w + "' is not alphabetic");
        }
        if (guard_names_.count(w))
            throw ProperNameRejected("'" + w + "' is a configured proper name");
    }

    std::unordered_map<std::string, std::string> pairs_;
    std::unordered_map<std::string, std::string> pronouns_;
    std::unordered_set<std::string> neutral_;
    std::unordered_map<std::string, Provenance> provenance_;
    std::unordered_set<std::string> guard_names_;
};

// TSV loader: `word<TAB>counterpart<TAB>provenance`, '#' comments allowed.
// Missing reverse directions are repaired; the pronoun block is mandatory.
inline GenderLexicon load_lexicon(const std::string& path,
                                  std::unordered_set<std::string> guard_names = {}) {
    const std::string content = read_file(path);
    GenderLexicon lex(std::move(guard_names));

    size_t lineno = 0;
    for (const auto& raw_line : split_on(content, "\n")) {
        ++lineno;
        const std::string line = trim(raw_line);
        if (line.empty() || line[0] == '#') continue;
        const auto cols = split_on(line, "\t");
        if (cols.size() < 2 || cols.size() > 3)
            throw MalformedLexiconLine(path + ":" + std::to_string(lineno) +
                                       ": expected 2 or 3 tab-separated columns");
        const std::string a = to_lower(trim(cols[0]));
        const std::string b = to_lower(trim(cols[1]));
        Provenance prov = Provenance::Manual;
        if (cols.size() == 3) {
            const auto p = parse_provenance(trim(cols[2]));
            if (!p)
                throw MalformedLexiconLine(path + ":" + std::to_string(lineno) +
                                           ": unknown provenance '" + trim(cols[2]) + "'");
            prov = *p;
        }
        try {
            if (is_pronoun_block_word(a))
                lex.set_pronoun_entry(a, b);
            else
                lex.insert_pair(a, b, prov);
        } catch (const ConflictingPair& e) {
            throw ConflictingPair(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }

    if (!lex.has_pronoun_block())
        throw MissingPronounBlock(path + ": pronoun block (he/she/him/her/his/hers/" +
                                  "himself/herself) is required");
    return lex;
}

inline void save_lexicon(const GenderLexicon& lex, const std::string& path) {
    write_file_atomic(path, lex.to_tsv());
}

inline GenderLexicon merge(const GenderLexicon& base, const GenderLexicon& learned,
                           std::vector<MergeConflict>* conflicts_out = nullptr) {
    GenderLexicon out = base;
    auto conflicts = out.merge_from(learned);
    if (conflicts_out) *conflicts_out = std::move(conflicts);
    return out;
}

}  // namespace cda
