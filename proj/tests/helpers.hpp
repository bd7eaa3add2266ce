#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cda/corpus.hpp"

namespace cda::test {

inline std::filesystem::path source_dir() { return std::filesystem::path(CDA_SOURCE_DIR); }

inline std::filesystem::path golden_dir() { return source_dir() / "tests" / "golden"; }

inline std::filesystem::path data_dir() { return source_dir() / "data"; }

inline std::filesystem::path prompts_dir() { return source_dir() / "prompts"; }

// Fresh scratch directory per test.
inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("cda_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Words without reserved delimiters; answers/sections stay parseable.
inline std::string random_word(std::mt19937_64& rng) {
    static const char* kWords[] = {"queen",  "king",   "forest", "walked", "old",
                                   "crown",  "bright", "child",  "spoke",  "wolf",
                                   "tower",  "bread",  "gold",   "river",  "slept"};
    return kWords[rng() % (sizeof(kWords) / sizeof(kWords[0]))];
}

inline std::string random_text(std::mt19937_64& rng, size_t min_words = 1,
                               size_t max_words = 8) {
    const size_t n = min_words + rng() % (max_words - min_words + 1);
    std::string out;
    for (size_t i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += random_word(rng);
    }
    return out;
}

inline QARecord random_record(std::mt19937_64& rng, size_t index) {
    QARecord r;
    r.id = "story" + std::to_string(rng() % 5) + "#" + std::to_string(index);
    r.story_name = "story" + std::to_string(rng() % 5);
    r.section_text = random_text(rng, 3, 12);
    r.question = random_text(rng, 2, 8) + " ?";
    const size_t n_answers = 1 + rng() % 3;
    for (size_t i = 0; i < n_answers; ++i) r.answers.push_back(random_text(rng, 1, 6));
    r.question_type = kAllQuestionTypes[rng() % kAllQuestionTypes.size()];
    r.explicitness = rng() % 2 ? Explicitness::Explicit : Explicitness::Implicit;
    return r;
}

inline Corpus random_corpus(std::mt19937_64& rng, size_t n) {
    Corpus c;
    for (size_t i = 0; i < n; ++i) c.records.push_back(random_record(rng, i));
    return c;
}

}  // namespace cda::test
