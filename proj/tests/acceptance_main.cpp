// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one PASS/FAIL/SKIP line per criterion. Exit code 0 only if nothing
// failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "cda/casestudy.hpp"
#include "cda/corpus.hpp"
#include "cda/harness.hpp"
#include "cda/lexicon.hpp"
#include "cda/lexing.hpp"
#include "cda/llmclient.hpp"
#include "cda/metrics.hpp"
#include "cda/perturb.hpp"

namespace fs = std::filesystem;
using namespace cda;

namespace {

const fs::path kSourceDir = fs::path(CDA_SOURCE_DIR);

int g_failures = 0;

void report(int criterion, const std::string& name, bool ok) {
    std::printf("%s criterion-%02d: %s\n", ok ? "PASS" : "FAIL", criterion, name.c_str());
    if (!ok) ++g_failures;
}

void report_skip(int criterion, const std::string& name, const std::string& why) {
    std::printf("SKIP criterion-%02d: %s (%s)\n", criterion, name.c_str(), why.c_str());
}

struct Check {
    bool ok = true;
    std::string detail;

    void expect(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

// ---- independent oracles (duplicated here on purpose; they must not share
// code with the implementations they check) ----

size_t lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    size_t best = 0;
    for (uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
        std::vector<std::string> sub;
        for (size_t i = 0; i < a.size(); ++i)
            if (mask & (1u << i)) sub.push_back(a[i]);
        size_t j = 0;
        for (const auto& w : b)
            if (j < sub.size() && w == sub[j]) ++j;
        if (j == sub.size()) best = std::max(best, sub.size());
    }
    return best;
}

size_t edit_oracle(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                   size_t i = 0, size_t j = 0) {
    if (i == ref.size()) return hyp.size() - j;
    if (j == hyp.size()) return ref.size() - i;
    size_t best = edit_oracle(ref, hyp, i + 1, j + 1) + (ref[i] == hyp[j] ? 0 : 1);
    best = std::min(best, edit_oracle(ref, hyp, i + 1, j) + 1);
    best = std::min(best, edit_oracle(ref, hyp, i, j + 1) + 1);
    return best;
}

double t_pdf(double x, double nu) {
    return std::exp(std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0)) /
           std::sqrt(nu * M_PI) * std::pow(1.0 + x * x / nu, -(nu + 1.0) / 2.0);
}

double p_value_oracle(double t, double nu) {
    const double a = std::fabs(t);
    const int steps = 20000;
    const double h = 2.0 * a / steps;
    double sum = t_pdf(-a, nu) + t_pdf(a, nu);
    for (int i = 1; i < steps; ++i) sum += t_pdf(-a + i * h, nu) * (i % 2 ? 4.0 : 2.0);
    return 1.0 - sum * h / 3.0;
}

std::vector<std::string> random_tokens(std::mt19937_64& rng, size_t max_len) {
    const size_t n = rng() % (max_len + 1);
    std::vector<std::string> out;
    for (size_t i = 0; i < n; ++i) out.push_back(std::string(1, char('a' + rng() % 3)));
    return out;
}

GenderLexicon load_seed() {
    return load_lexicon((kSourceDir / "data" / "lexicon_seed.tsv").string());
}

struct GoldenCase {
    std::string input, expected;
};

std::pair<std::unordered_set<std::string>, std::vector<GoldenCase>> load_golden() {
    std::ifstream in(kSourceDir / "tests" / "golden" / "rule_swap.tsv");
    std::unordered_set<std::string> names;
    std::vector<GoldenCase> cases;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("# names:", 0) == 0) {
            for (const auto& n : split_on(trim(line.substr(8)), " "))
                if (!n.empty()) names.insert(n);
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        const auto cols = split_on(line, "\t");
        if (cols.size() == 2) cases.push_back({cols[0], cols[1]});
    }
    return {names, cases};
}

int run_command(const std::string& cmd) {
    const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---- criteria ----

void criterion_1() {
    const auto start = std::chrono::steady_clock::now();
    Check c;
    std::mt19937_64 rng(4242);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto a = random_tokens(rng, 8);
        const auto b = random_tokens(rng, 8);
        c.expect(lcs_length(a, b) == lcs_oracle(a, b), "LCS mismatch");
    }
    for (int trial = 0; trial < 1000; ++trial) {
        auto ref = random_tokens(rng, 6);
        if (ref.empty()) ref.push_back("a");
        const auto hyp = random_tokens(rng, 6);
        c.expect(error_rates_tokens(ref, hyp).edits() == edit_oracle(ref, hyp),
                 "edit distance mismatch");
    }
    const auto elapsed = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    c.expect(elapsed < 30.0, "runtime over 30 s");
    report(1, "metric oracle equivalence (1000 LCS + 1000 edit-distance pairs)", c.ok);
}

void criterion_2() {
    Check c;
    const RougeScore id = rouge_l("the king spoke", "the king spoke");
    c.expect(id.precision == 1.0 && id.recall == 1.0 && id.f1 == 1.0, "identity != (1,1,1)");
    const RougeScore dis = rouge_l("alpha beta", "gamma delta");
    c.expect(dis.precision == 0.0 && dis.recall == 0.0 && dis.f1 == 0.0,
             "disjoint != (0,0,0)");
    const RougeScore partial = rouge_l("the cat sat", "the cat");
    c.expect(std::fabs(partial.f1 - 0.8) <= 1e-12, "(the cat sat, the cat) F1 != 0.8");
    report(2, "ROUGE-L spot values", c.ok);
}

void criterion_3() {
    Check c;
    const std::vector<double> a = {1, 2, 3, 4, 5};
    const std::vector<double> b = {2, 3, 4, 5, 6};
    const TTestResult r = pooled_t_test(a, b);
    c.expect(r.degrees_of_freedom == 8, "df != 8");
    c.expect(std::fabs(r.p_value - p_value_oracle(r.t_statistic, 8.0)) < 1e-6,
             "p-value off the integration oracle");
    const std::vector<double> same = {1, 2, 3, 4};
    const TTestResult eq = pooled_t_test(same, same);
    c.expect(eq.t_statistic == 0.0 && std::fabs(eq.p_value - 1.0) <= 1e-12,
             "identical samples != (t=0, p=1)");
    report(3, "pooled t-test against the numerical CDF oracle", c.ok);
}

void criterion_4() {
    Check c;
    const auto lex = load_seed();
    const auto [names, cases] = load_golden();
    c.expect(cases.size() == 20, "golden suite must hold 20 sentences");
    HeuristicTagger tagger;
    TagContext ctx;
    ctx.names = names;
    for (const auto& g : cases) {
        const PerturbResult r = rule_based_swap(g.input, lex, tagger, ctx);
        c.expect(r.text == g.expected, "output mismatch on: " + g.input);
        c.expect(apply_swaps(g.input, r.swaps) == g.expected,
                 "ledger replay mismatch on: " + g.input);
        for (const auto& s : r.swaps)
            c.expect(!names.count(to_lower(s.original_surface)),
                     "proper name swapped in: " + g.input);
    }
    report(4, "rule-based perturbation golden suite, byte-exact", c.ok);
}

void criterion_5() {
    Check c;
    const auto lex = load_seed();
    const auto [names, cases] = load_golden();
    HeuristicTagger tagger;
    TagContext ctx;
    ctx.names = names;
    for (const auto& g : cases) {
        const std::string once = rule_based_swap(g.input, lex, tagger, ctx).text;
        const std::string twice = rule_based_swap(once, lex, tagger, ctx).text;
        c.expect(twice == g.input, "double application diverges on: " + g.input);
    }
    report(5, "conditional involution restores the golden originals", c.ok);
}

void criterion_6() {
    const auto start = std::chrono::steady_clock::now();
    Check c;
    std::mt19937_64 rng(6161);
    const std::vector<std::string> vocab = {
        "alpha", "bravo", "carol", "delta", "echos", "fjord", "grain", "hotel",
        "india", "julep", "kiosk", "lemon", "mango", "night", "ocean", "piano",
        "quill", "raven", "stone", "tulip"};
    const fs::path tmp = fs::temp_directory_path() / "cda_acceptance_lexicon.tsv";

    int operations = 0;
    GenderLexicon lex;
    GenderLexicon other;
    while (operations < 10000) {
        const auto& a = vocab[rng() % vocab.size()];
        const auto& b = vocab[rng() % vocab.size()];
        try {
            (rng() % 5 ? lex : other).insert_pair(a, b, Provenance::Learned);
        } catch (const ConflictingPair&) {
        }
        ++operations;
        if (operations % 500 == 0) lex.merge_from(other);
        if (operations % 2000 == 0) {
            for (const auto& [k, v] : lex.pairs()) {
                c.expect(lex.lookup(v) == k, "symmetry violated");
                c.expect(lex.lookup(*lex.lookup(k)) == k, "involution violated");
            }
            for (const auto& w : lex.neutral())
                c.expect(lex.lookup(w) == w, "neutral violated");
        }
    }

    auto seed = load_seed();
    seed.merge_from(lex);
    save_lexicon(seed, tmp.string());
    const auto back = load_lexicon(tmp.string());
    c.expect(back.pairs() == seed.pairs(), "save/load pairs drifted");
    c.expect(back.neutral() == seed.neutral(), "save/load neutral drifted");
    c.expect(back.pronouns() == seed.pronouns(), "save/load pronouns drifted");
    fs::remove(tmp);

    const auto elapsed = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    c.expect(elapsed < 10.0, "runtime over 10 s");
    report(6, "lexicon invariants over 10,000 random operations + lossless round trip",
           c.ok);
}

void criterion_7() {
    Check c;
    const fs::path tmp = fs::temp_directory_path() / "cda_acceptance_assist";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    const std::string lex_path = (tmp / "lex.tsv").string();
    write_file_atomic(lex_path,
                      "he\tshe\tseed\nshe\the\tseed\nhim\ther\tseed\nher\thim\tseed\n"
                      "his\ther\tseed\nhers\this\tseed\nhimself\therself\tseed\n"
                      "herself\thimself\tseed\n");

    Corpus corpus;
    for (int i = 0; i < 10; ++i) {
        QARecord r;
        r.id = "rec" + std::to_string(i);
        r.story_name = "tale";
        r.section_text = i % 2 ? "the prince rode onward"
                               : "the teacher spoke to the prince";
        r.question = "who rode ?";
        r.answers = {"the prince"};
        r.question_type = QuestionType::Character;
        corpus.records.push_back(r);
    }

    auto mock = std::make_shared<MockChatClient>();  // strict
    mock->script("prince →", "princess");
    mock->script("teacher →", "teacher");

    HeuristicTagger tagger;
    GenderLexicon lexicon = load_lexicon(lex_path);
    PerturbDeps deps;
    deps.lexicon = &lexicon;
    deps.tagger = &tagger;
    deps.client = mock.get();
    deps.assist.prompt =
        load_pair_prompt((kSourceDir / "prompts" / "pair_completion.txt").string());

    auto [first_pass, audit1] =
        perturb_corpus(corpus, Strategy::LlmAssistedRuleBased, deps, 1);
    c.expect(audit1.quarantined.empty(), "first pass quarantined records");

    // Exactly the expected query set: one prince query, one teacher query.
    std::set<std::string> queried;
    for (const auto& req : mock->requests()) {
        const std::string content = MockChatClient::last_user_content(req);
        queried.insert(content.substr(content.rfind('\n') + 1));
    }
    c.expect(queried == std::set<std::string>{"prince →", "teacher →"},
             "unexpected query set on the first pass");

    save_lexicon(lexicon, lex_path);

    // Second pass with the persisted lexicon: zero queries, identical bytes.
    auto strict = std::make_shared<MockChatClient>();  // no script: any call throws
    GenderLexicon persisted = load_lexicon(lex_path);
    PerturbDeps deps2;
    deps2.lexicon = &persisted;
    deps2.tagger = &tagger;
    deps2.client = strict.get();
    deps2.assist = deps.assist;
    auto [second_pass, audit2] =
        perturb_corpus(corpus, Strategy::LlmAssistedRuleBased, deps2, 1);
    c.expect(audit2.quarantined.empty(), "second pass quarantined records");
    c.expect(strict->request_count() == 0, "second pass issued LLM queries");
    c.expect(corpus_to_jsonl(first_pass) == corpus_to_jsonl(second_pass),
             "passes differ byte-wise");
    fs::remove_all(tmp);
    report(7, "LLM-assisted determinism with a persisted lexicon", c.ok);
}

void criterion_8() {
    Check c;
    const std::string widow_line =
        "there once lived a poor widow who supported herself and her only son by gleaning "
        "in the fields the stalks of grain that had been missed by the reapers . <SEP> how "
        "did the poor widow support herself and her son ? <SEP> gleaning in the fields the "
        "stalks of grain that had been missed by the reapers . </s> by gleaning in the "
        "fields the stalks of grain that had been missed by the reapers . <SEP> action "
        "<SEP> explicit";
    const QARecord widow = parse_sep_record(widow_line, "widow#0", "widow");
    c.expect(widow.answers.size() == 2, "widow record must carry two answers");
    c.expect(widow.question_type == QuestionType::Action, "widow type != action");
    c.expect(widow.explicitness == Explicitness::Explicit, "widow explicitness");
    c.expect(serialize_sep_record(widow) == widow_line, "widow round trip not byte-exact");

    std::mt19937_64 rng(8888);
    const fs::path tmp = fs::temp_directory_path() / "cda_acceptance_corpus.jsonl";
    Corpus corpus;
    for (size_t i = 0; i < 1000; ++i) {
        QARecord r;
        r.id = "r" + std::to_string(i);
        r.story_name = "story" + std::to_string(rng() % 7);
        r.section_text = "section " + std::to_string(rng());
        r.question = "question " + std::to_string(rng()) + " ?";
        const size_t n = 1 + rng() % 3;
        for (size_t k = 0; k < n; ++k) r.answers.push_back("answer " + std::to_string(rng()));
        r.question_type = kAllQuestionTypes[rng() % 7];
        r.explicitness = rng() % 2 ? Explicitness::Explicit : Explicitness::Implicit;
        corpus.records.push_back(r);

        const QARecord back =
            parse_sep_record(serialize_sep_record(r), r.id, r.story_name);
        c.expect(back.section_text == r.section_text && back.question == r.question &&
                     back.answers == r.answers && back.question_type == r.question_type &&
                     back.explicitness == r.explicitness,
                 "sep round trip field drift");
    }
    save_jsonl(corpus, tmp.string());
    const Corpus loaded = load_jsonl(tmp.string());
    c.expect(loaded.records == corpus.records, "jsonl round trip drifted");
    fs::remove(tmp);
    report(8, "corpus format round trip (appendix fixture + 1000 random records)", c.ok);
}

void criterion_9() {
    std::string path;
    if (const char* env = std::getenv("CDA_FAIRYTALEQA_TEST"); env && *env) path = env;
    if (path.empty()) {
        const fs::path bundled = kSourceDir / "data" / "fairytaleqa_test.jsonl";
        if (fs::exists(bundled)) path = bundled.string();
    }
    if (path.empty()) {
        report_skip(9, "FairytaleQA test-split distribution",
                    "dataset not on disk; set CDA_FAIRYTALEQA_TEST to the converted "
                    "test-split JSONL");
        return;
    }
    Check c;
    const Corpus corpus = load_jsonl(path);
    const auto counts = type_counts(corpus);
    c.expect(corpus.size() == 1007, "total != 1007");
    c.expect(counts.at(QuestionType::Setting) == 62, "setting != 62");
    c.expect(counts.at(QuestionType::Character) == 103, "character != 103");
    c.expect(counts.at(QuestionType::Action) == 315, "action != 315");
    c.expect(counts.at(QuestionType::OutcomeResolution) == 78, "outcome != 78");
    c.expect(counts.at(QuestionType::Feeling) == 106, "feeling != 106");
    c.expect(counts.at(QuestionType::CausalRelationship) == 278, "causal != 278");
    c.expect(counts.at(QuestionType::Prediction) == 65, "prediction != 65");
    report(9, "FairytaleQA test-split distribution", c.ok);
}

void criterion_10() {
    Check c;
    std::mt19937_64 rng(1010);
    for (int trial = 0; trial < 200; ++trial) {
        const size_t n = 1 + rng() % 60;
        Corpus original;
        for (size_t i = 0; i < n; ++i) {
            QARecord r;
            r.id = "r" + std::to_string(i);
            r.story_name = "s";
            r.section_text = "text";
            r.question = "q ?";
            r.answers = {"a"};
            r.question_type = kAllQuestionTypes[rng() % 7];
            original.records.push_back(r);
        }
        Corpus cf = original;
        for (auto& r : cf.records) r.variant = Variant::RuleBased;

        const Corpus half = mix_training(original, cf, {MixMode::HalfHalf, rng()});
        c.expect(half.size() == n, "half size drifted");
        c.expect(half.id_set().size() == n, "duplicate ids in half mix");
        c.expect(type_counts(half) == type_counts(original), "type counts drifted");

        const Corpus concat = mix_training(original, cf, {MixMode::Concat, rng()});
        c.expect(concat.size() == 2 * n, "concat size != 2n");
        c.expect(concat.id_set().size() == 2 * n, "duplicate ids in concat");
    }
    report(10, "mixing properties over 200 random corpora and seeds", c.ok);
}

void criterion_11() {
    Check c;
    // Hand-built per-record scores 0.8 / 0.6 / 1.0 / 0.0.
    Corpus corpus;
    auto add = [&](const std::string& id, QuestionType t, const std::string& answer) {
        QARecord r;
        r.id = id;
        r.story_name = "tale";
        r.section_text = "text";
        r.question = "q ?";
        r.answers = {answer};
        r.question_type = t;
        corpus.records.push_back(r);
    };
    add("r1", QuestionType::Action, "the cat");
    add("r2", QuestionType::Action, "a b c z w");
    add("r3", QuestionType::Feeling, "happy end");
    add("r4", QuestionType::Feeling, "gold ring");
    PredictionSet preds;
    preds.predictions = {{"r1", "the cat sat"},
                         {"r2", "a b c x y"},
                         {"r3", "happy end"},
                         {"r4", "iron sword"}};
    const EvalRun run = score_run(preds, corpus);
    c.expect(format_2dp(run.aggregates.at("ALL")) == "60.00", "ALL mean != 60.00");
    c.expect(format_2dp(run.aggregates.at("action")) == "70.00", "action mean != 70.00");
    c.expect(format_2dp(run.aggregates.at("feeling")) == "50.00", "feeling mean != 50.00");

    const ComparisonTable table = compare_runs(run, run);
    for (const auto& cell : table.cells) {
        c.expect(cell.delta == 0.0, "self-compare delta != 0");
        c.expect(!cell.significant, "self-compare marked significant");
    }

    const auto orig = EvalRun::from_aggregates("t5", "original", "original",
                                               {{"ALL", 65.29}});
    const auto cf = EvalRun::from_aggregates("t5", "original", "rule-based",
                                             {{"ALL", 64.38}});
    c.expect(bias_score(orig, cf).at("ALL") == 65.29 - 64.38,
             "bias score != 65.29 - 64.38");
    report(11, "harness arithmetic fixtures (stratum means, self-compare, bias score)",
           c.ok);
}

void criterion_12() {
    Check c;
    // Rubric sheets whose per-metric means equal the published table
    // (deduction totals over 30 stories per variant).
    std::vector<RubricSheet> sheets;
    const std::map<RubricMetric, int> orig_sums = {
        {RubricMetric::RepetitivePlot, 2},  {RubricMetric::UnrelatedEvents, 7},
        {RubricMetric::ConflictingLogic, 14}, {RubricMetric::PoorContinuity, 4},
        {RubricMetric::UnsafeContent, 0},   {RubricMetric::BiasPropagation, 5}};
    const std::map<RubricMetric, int> cf_sums = {
        {RubricMetric::RepetitivePlot, 1},  {RubricMetric::UnrelatedEvents, 5},
        {RubricMetric::ConflictingLogic, 4}, {RubricMetric::PoorContinuity, 0},
        {RubricMetric::UnsafeContent, 0},   {RubricMetric::BiasPropagation, 0}};
    for (const auto& [variant, sums] :
         {std::pair{SeedVariant::Original, orig_sums}, {SeedVariant::Counterfactual, cf_sums}}) {
        for (int i = 0; i < 30; ++i) {
            RubricSheet s;
            s.story_id = "story" + std::to_string(i);
            s.seed_variant = variant;
            for (RubricMetric m : kAllRubricMetrics)
                s.deductions[m] = i < sums.at(m) ? 1.0 : 0.0;
            sheets.push_back(std::move(s));
        }
    }
    const RubricReport report_rubrics = aggregate_rubrics(sheets);
    const double orig_mean = report_rubrics.mean_scores.at(SeedVariant::Original);
    const double cf_mean = report_rubrics.mean_scores.at(SeedVariant::Counterfactual);
    c.expect(std::fabs(orig_mean - 4.933) <= 1e-3, "original mean score off 4.933");
    // 5.67 is the published 2-dp rounding of 6 - 10/30 = 5.667.
    c.expect(std::fabs(cf_mean - 5.667) <= 1e-3, "counterfactual mean score off 5.667");
    c.expect(format_2dp(cf_mean) == "5.67", "counterfactual mean does not render 5.67");
    c.expect(std::fabs(report_rubrics.mean_pairwise_difference - (-0.733)) <= 1e-3,
             "difference off -0.733");

    std::vector<CriteriaSheet> criteria;
    auto add = [&](Strategy approach, int quality5, int consistency5, int grammar5) {
        for (int i = 0; i < 50; ++i) {
            CriteriaSheet s;
            s.sample_id = std::string(to_string(approach)) + std::to_string(i);
            s.approach = approach;
            s.ratings[Criterion::QualityOfSwap] = i < quality5 ? 5 : 4;
            s.ratings[Criterion::ConsistencyOfStoryline] = 5;
            s.ratings[Criterion::ConsistencyOfSwaps] = i < consistency5 ? 5 : 4;
            s.ratings[Criterion::Grammar] = i < grammar5 ? 5 : 4;
            criteria.push_back(std::move(s));
        }
    };
    add(Strategy::LlmRewrite, 4, 38, 50);
    add(Strategy::LlmAssistedRuleBased, 32, 43, 25);
    const CriteriaReport report_criteria = aggregate_criteria(criteria);
    const auto& rw = report_criteria.mean_ratings.at(Strategy::LlmRewrite);
    const auto& as = report_criteria.mean_ratings.at(Strategy::LlmAssistedRuleBased);
    c.expect(std::fabs(rw.at(Criterion::QualityOfSwap) - 4.08) <= 1e-3, "quality off 4.08");
    c.expect(std::fabs(rw.at(Criterion::ConsistencyOfSwaps) - 4.76) <= 1e-3,
             "consistency off 4.76");
    c.expect(std::fabs(as.at(Criterion::QualityOfSwap) - 4.64) <= 1e-3, "quality off 4.64");
    c.expect(std::fabs(as.at(Criterion::ConsistencyOfSwaps) - 4.86) <= 1e-3,
             "consistency off 4.86");
    c.expect(std::fabs(as.at(Criterion::Grammar) - 4.5) <= 1e-3, "grammar off 4.5");
    report(12, "case-study arithmetic reproduces the published means", c.ok);
}

void criterion_13() {
    Check c;
    Corpus corpus;
    QARecord r;
    r.id = "r1";
    r.story_name = "tale";
    r.section_text = "the king rode out";
    r.question = "who rode ?";
    r.answers = {"the king"};
    r.question_type = QuestionType::Character;
    corpus.records.push_back(r);

    const WerAuditTable self = wer_audit(corpus, corpus);
    c.expect(self.corpus_wer == 0.0 && self.corpus_mer == 0.0, "self WER/MER != 0");

    const ErrorRates rates = error_rates("a b c", "a x c");
    c.expect(rates.wer == 1.0 / 3.0, "single substitution WER != 1/3 exact");
    report(13, "WER audit self-test and single-substitution value", c.ok);
}

void criterion_14() {
    const auto start = std::chrono::steady_clock::now();
    Check c;
    const std::string cli = CDA_CLI_PATH;
    const std::string corpus = (kSourceDir / "data" / "sample_corpus.jsonl").string();
    const std::string preds_base =
        (kSourceDir / "data" / "sample_predictions_base.jsonl").string();
    const std::string preds_cf =
        (kSourceDir / "data" / "sample_predictions_cf.jsonl").string();
    const std::string lexicon = (kSourceDir / "data" / "lexicon_seed.tsv").string();

    auto pipeline = [&](const fs::path& dir) -> bool {
        fs::create_directories(dir);
        const std::string cf = (dir / "cf.jsonl").string();
        const std::string mixed = (dir / "mixed.jsonl").string();
        const std::string run_a = (dir / "run_a.json").string();
        const std::string run_b = (dir / "run_b.json").string();
        const std::string table = (dir / "compare.tsv").string();
        if (run_command(cli + " augment --strategy rule --input " + corpus +
                        " --lexicon " + lexicon + " --output " + cf) != 0)
            return false;
        if (run_command(cli + " mix --original " + corpus + " --counterfactual " + cf +
                        " --mode half --seed 88 --output " + mixed) != 0)
            return false;
        if (run_command(cli + " score --predictions " + preds_base + " --corpus " + corpus +
                        " --output " + run_a) != 0)
            return false;
        if (run_command(cli + " score --predictions " + preds_cf + " --corpus " + cf +
                        " --output " + run_b) != 0)
            return false;
        if (run_command(cli + " compare --baseline " + run_a + " --candidate " + run_b +
                        " --output " + table) != 0)
            return false;
        return true;
    };

    const fs::path dir1 = fs::temp_directory_path() / "cda_acceptance_e2e_1";
    const fs::path dir2 = fs::temp_directory_path() / "cda_acceptance_e2e_2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    c.expect(pipeline(dir1), "pipeline run 1 failed");
    c.expect(pipeline(dir2), "pipeline run 2 failed");

    for (const auto& name : {"cf.jsonl", "mixed.jsonl", "compare.tsv"})
        c.expect(read_file((dir1 / name).string()) == read_file((dir2 / name).string()),
                 std::string("rerun not byte-identical: ") + name);
    // Run JSONs are primary outputs too.
    for (const auto& name : {"run_a.json", "run_b.json"})
        c.expect(read_file((dir1 / name).string()) == read_file((dir2 / name).string()),
                 std::string("rerun not byte-identical: ") + name);

    const auto elapsed = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    c.expect(elapsed < 10.0, "pipeline over 10 s");
    if (!c.ok) std::fprintf(stderr, "  detail: %s\n", c.detail.c_str());
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    report(14, "end-to-end offline pipeline, byte-deterministic, < 10 s", c.ok);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    criterion_11();
    criterion_12();
    criterion_13();
    criterion_14();

    if (g_failures) {
        std::printf("%d criterion(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed (skips noted above)\n");
    return 0;
}
