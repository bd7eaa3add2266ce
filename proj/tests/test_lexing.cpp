#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>

#include "cda/lexing.hpp"
#include "helpers.hpp"

using namespace cda;

TEST_CASE("tokenize keeps contractions whole", "[lexing]") {
    const auto tokens = tokenize("didn't go");
    REQUIRE(tokens.size() == 3);
    CHECK(tokens[0].surface == "didn't");
    CHECK(tokens[0].kind == TokenKind::Word);
    CHECK(tokens[1].kind == TokenKind::Whitespace);
    CHECK(tokens[2].surface == "go");
}

TEST_CASE("tokenize splits contractions in compatibility mode", "[lexing]") {
    TokenizeOptions opt;
    opt.split_contractions = true;
    const auto tokens = tokenize("didn't", opt);
    REQUIRE(tokens.size() == 3);
    CHECK(tokens[0].surface == "didn");
    CHECK(tokens[1].surface == "'");
    CHECK(tokens[1].kind == TokenKind::Punct);
    CHECK(tokens[2].surface == "t");
}

TEST_CASE("tokenize basics", "[lexing]") {
    CHECK(tokenize("").empty());

    const auto tokens = tokenize("her , him .");
    REQUIRE(tokens.size() == 7);
    std::string rebuilt;
    for (const auto& t : tokens) rebuilt += t.surface;
    CHECK(rebuilt == "her , him .");

    const auto nums = tokenize("a1 22b");
    REQUIRE(nums.size() == 5);
    CHECK(nums[0].kind == TokenKind::Word);
    CHECK(nums[1].kind == TokenKind::Number);
    CHECK(nums[3].kind == TokenKind::Number);
    CHECK(nums[4].kind == TokenKind::Word);
}

TEST_CASE("detokenize inverts tokenize on random unicode", "[lexing]") {
    std::mt19937_64 rng(42);
    const std::vector<uint32_t> codepoints = {0x20,  0x61,  0x7a,   0x27,   0x2c,  0x2e,
                                              0xe9,  0x151, 0x4e2d, 0x1f600, 0x30, 0x39,
                                              0x0a,  0x09,  0x22,   0x2019};
    for (int trial = 0; trial < 500; ++trial) {
        std::string s;
        const size_t n = rng() % 40;
        for (size_t i = 0; i < n; ++i) {
            uint32_t cp = codepoints[rng() % codepoints.size()];
            // UTF-8 encode.
            if (cp < 0x80) {
                s += static_cast<char>(cp);
            } else if (cp < 0x800) {
                s += static_cast<char>(0xc0 | (cp >> 6));
                s += static_cast<char>(0x80 | (cp & 0x3f));
            } else if (cp < 0x10000) {
                s += static_cast<char>(0xe0 | (cp >> 12));
                s += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
                s += static_cast<char>(0x80 | (cp & 0x3f));
            } else {
                s += static_cast<char>(0xf0 | (cp >> 18));
                s += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
                s += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
                s += static_cast<char>(0x80 | (cp & 0x3f));
            }
        }
        const auto tokens = tokenize(s);
        CHECK(detokenize(tokens) == s);
        // Spans tile the input.
        size_t pos = 0;
        for (const auto& t : tokens) {
            CHECK(t.begin == pos);
            pos = t.end;
        }
        CHECK(pos == s.size());
    }
}

TEST_CASE("detokenize rejects gaps", "[lexing]") {
    CHECK(detokenize({}).empty());
    auto tokens = tokenize("a b");
    tokens.erase(tokens.begin() + 1);
    CHECK_THROWS_AS(detokenize(tokens), NonContiguousSpans);
}

TEST_CASE("tagger resolves her by lookahead", "[lexing]") {
    HeuristicTagger tagger;
    TagContext ctx;

    const auto personal = tagger.tag(tokenize("give it to her"), ctx);
    CHECK(personal.back().tag == PosTag::PronounPersonal);

    const auto possessive = tagger.tag(tokenize("her throne"), ctx);
    CHECK(possessive.front().tag == PosTag::PronounPossessive);
}

TEST_CASE("tagger matches the hand-labeled her suite exactly", "[lexing]") {
    std::ifstream in(cda::test::golden_dir() / "her_labels.tsv");
    REQUIRE(in.good());
    HeuristicTagger tagger;
    TagContext ctx;

    std::string line;
    size_t sentences = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto cols = split_on(line, "\t");
        REQUIRE(cols.size() == 2);
        const std::string& sentence = cols[0];
        const auto expected = split_on(cols[1], ",");

        std::vector<std::string> got;
        for (const auto& tt : tagger.tag(tokenize(sentence), ctx)) {
            if (tt.token.kind != TokenKind::Word || to_lower(tt.token.surface) != "her")
                continue;
            got.push_back(tt.tag == PosTag::PronounPersonal ? "personal" : "possessive");
        }
        INFO("sentence: " << sentence);
        CHECK(got == expected);
        ++sentences;
    }
    CHECK(sentences == 20);
}

TEST_CASE("tagger recognizes names and proper nouns", "[lexing]") {
    HeuristicTagger tagger;
    TagContext ctx;
    ctx.names = {"cinderella"};

    const auto tagged = tagger.tag(tokenize("Cinderella lost her slipper"), ctx);
    CHECK(tagged[0].tag == PosTag::NounProper);

    // Mid-sentence capitalization without a name list.
    TagContext empty;
    const auto mid = tagger.tag(tokenize("then Gretel spoke"), empty);
    REQUIRE(mid.size() == 5);
    CHECK(mid[2].tag == PosTag::NounProper);
}

TEST_CASE("tagger is total and deterministic", "[lexing]") {
    std::mt19937_64 rng(17);
    HeuristicTagger tagger;
    TagContext ctx;
    for (int trial = 0; trial < 50; ++trial) {
        const std::string text = cda::test::random_text(rng, 1, 20);
        const auto tokens = tokenize(text);
        const auto a = tagger.tag(tokens, ctx);
        const auto b = tagger.tag(tokens, ctx);
        REQUIRE(a.size() == tokens.size());
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].tag == b[i].tag);
            if (tokens[i].kind != TokenKind::Word) CHECK(a[i].tag == PosTag::Other);
        }
    }
}

TEST_CASE("collect_proper_names needs a sentence-medial occurrence", "[lexing]") {
    const auto names = collect_proper_names(
        {"Cinderella swept the floor . she saw Cinderella in the mirror ."});
    CHECK(names.count("cinderella") == 1);

    // Only sentence-initial: not collected.
    const auto none = collect_proper_names({"Cinderella swept the floor ."});
    CHECK(none.empty());
}

TEST_CASE("name list files load case-folded", "[lexing]") {
    const auto dir = cda::test::temp_dir("names");
    const auto path = (dir / "names.txt").string();
    write_file_atomic(path, "Cinderella\n\n# comment\nGretel\n");
    const auto names = load_name_list(path);
    CHECK(names == std::unordered_set<std::string>{"cinderella", "gretel"});
    std::filesystem::remove_all(dir);
}

TEST_CASE("sidecar tagger overrides listed fields and falls back otherwise", "[lexing]") {
    const auto dir = cda::test::temp_dir("sidecar");
    const auto path = (dir / "tags.jsonl").string();
    // "her throne": override the usual possessive call with personal.
    write_file_atomic(path,
                      R"({"id":"r1","field":"section","tags":[[0,3,"pronoun_personal"],[4,10,"noun_common"]]})"
                      "\n");
    SidecarTagger tagger(path);

    TagContext ctx;
    ctx.record_id = "r1";
    ctx.field = "section";
    const auto tagged = tagger.tag(tokenize("her throne"), ctx);
    CHECK(tagged[0].tag == PosTag::PronounPersonal);
    CHECK(tagged[2].tag == PosTag::NounCommon);

    // Unlisted field: heuristic fallback.
    ctx.field = "question";
    const auto fallback = tagger.tag(tokenize("her throne"), ctx);
    CHECK(fallback[0].tag == PosTag::PronounPossessive);
    std::filesystem::remove_all(dir);
}

TEST_CASE("pos tags round trip", "[lexing]") {
    for (PosTag t : {PosTag::NounCommon, PosTag::NounProper, PosTag::PronounPersonal,
                     PosTag::PronounPossessive, PosTag::Adjective, PosTag::Other}) {
        const auto back = parse_pos_tag(to_string(t));
        REQUIRE(back.has_value());
        CHECK(*back == t);
    }
}
