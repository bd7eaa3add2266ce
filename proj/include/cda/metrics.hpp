#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cda/common.hpp"
#include "cda/lexing.hpp"

namespace cda {

struct EmptyReferences : Error {
    using Error::Error;
};

struct EmptyReference : Error {
    using Error::Error;
};

struct InsufficientSample : Error {
    using Error::Error;
};

struct ZeroVariance : Error {
    using Error::Error;
};

struct ScorerUnavailable : Error {
    using Error::Error;
};

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct ErrorRates {
    double wer = 0.0;
    double mer = 0.0;
    size_t substitutions = 0;
    size_t deletions = 0;
    size_t insertions = 0;
    size_t hits = 0;

    size_t edits() const { return substitutions + deletions + insertions; }
};

struct TTestResult {
    double t_statistic = 0.0;
    long degrees_of_freedom = 0;
    double p_value = 1.0;
    bool significant_95 = false;
};

// Content tokens for the lexical metrics: case-folded Word and Number
// surfaces, punctuation and whitespace excluded.
inline std::vector<std::string> metric_tokens(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& t : tokenize(text))
        if (t.kind == TokenKind::Word || t.kind == TokenKind::Number)
            out.push_back(to_lower(t.surface));
    return out;
}

inline size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    const size_t m = a.size(), n = b.size();
    if (m == 0 || n == 0) return 0;
    std::vector<size_t> prev(n + 1, 0), cur(n + 1, 0);
    for (size_t i = 1; i <= m; ++i) {
        for (size_t j = 1; j <= n; ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

inline RougeScore rouge_l_tokens(std::span<const std::string> hyp,
                                 std::span<const std::string> ref) {
    RougeScore s;
    if (hyp.empty() || ref.empty()) return s;
    const double lcs = static_cast<double>(lcs_length(hyp, ref));
    s.precision = lcs / static_cast<double>(hyp.size());
    s.recall = lcs / static_cast<double>(ref.size());
    s.f1 = (s.precision + s.recall) == 0.0
               ? 0.0
               : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

inline RougeScore rouge_l(std::string_view hypothesis, std::string_view reference) {
    return rouge_l_tokens(metric_tokens(hypothesis), metric_tokens(reference));
}

// Max-F1 over references; ties resolve to the earliest reference.
inline RougeScore best_rouge(std::string_view hypothesis,
                             std::span<const std::string> references) {
    if (references.empty()) throw EmptyReferences("best_rouge: no references");
    const auto hyp = metric_tokens(hypothesis);
    RougeScore best;
    bool first = true;
    for (const auto& ref : references) {
        const RougeScore s = rouge_l_tokens(hyp, metric_tokens(ref));
        if (first || s.f1 > best.f1) {
            best = s;
            first = false;
        }
    }
    return best;
}

// Token-level Levenshtein alignment with uniform costs; rates follow
// WER = (S+D+I)/N_ref and MER = (S+D+I)/(S+D+I+H).
inline ErrorRates error_rates_tokens(std::span<const std::string> ref,
                                     std::span<const std::string> hyp) {
    if (ref.empty()) throw EmptyReference("error_rates: empty reference");
    const size_t m = ref.size(), n = hyp.size();
    std::vector<std::vector<uint32_t>> d(m + 1, std::vector<uint32_t>(n + 1, 0));
    for (size_t i = 0; i <= m; ++i) d[i][0] = static_cast<uint32_t>(i);
    for (size_t j = 0; j <= n; ++j) d[0][j] = static_cast<uint32_t>(j);
    for (size_t i = 1; i <= m; ++i) {
        for (size_t j = 1; j <= n; ++j) {
            const uint32_t sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            d[i][j] = std::min({sub, d[i - 1][j] + 1, d[i][j - 1] + 1});
        }
    }

    ErrorRates r;
    size_t i = m, j = n;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 &&
            d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
            if (ref[i - 1] == hyp[j - 1])
                ++r.hits;
            else
                ++r.substitutions;
            --i;
            --j;
        } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
            ++r.deletions;
            --i;
        } else {
            ++r.insertions;
            --j;
        }
    }
    r.wer = static_cast<double>(r.edits()) / static_cast<double>(m);
    r.mer = static_cast<double>(r.edits()) / static_cast<double>(r.edits() + r.hits);
    return r;
}

inline ErrorRates error_rates(std::string_view reference, std::string_view hypothesis) {
    return error_rates_tokens(metric_tokens(reference), metric_tokens(hypothesis));
}

namespace detail {

// Regularized incomplete beta via Lentz's continued fraction; converges to
// well under 1e-10 for the t-test arguments used here.
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log(1.0 - x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

// Two-tailed p-value for a t statistic with nu degrees of freedom.
inline double student_t_two_tailed_p(double t, double nu) {
    const double x = nu / (nu + t * t);
    return detail::incomplete_beta(nu / 2.0, 0.5, x);
}

inline double mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs, double mu) {
    double s = 0.0;
    for (double x : xs) s += (x - mu) * (x - mu);
    return s / static_cast<double>(xs.size() - 1);
}

// Classical equal-variance two-sample t-test with pooled variance.
inline TTestResult pooled_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2)
        throw InsufficientSample("pooled_t_test: both samples need at least 2 values");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double ma = mean(a), mb = mean(b);
    const double va = sample_variance(a, ma), vb = sample_variance(b, mb);
    const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    if (pooled <= 0.0) throw ZeroVariance("pooled_t_test: pooled variance is zero");

    TTestResult r;
    r.degrees_of_freedom = static_cast<long>(na + nb) - 2;
    r.t_statistic = (ma - mb) / (std::sqrt(pooled) * std::sqrt(1.0 / na + 1.0 / nb));
    r.p_value = student_t_two_tailed_p(r.t_statistic,
                                       static_cast<double>(r.degrees_of_freedom));
    r.significant_95 = r.p_value < 0.05;
    return r;
}

// Pluggable prediction-pair similarity. Implementations return a score in
// [0,1]; the record id lets file-backed scorers resolve precomputed values.
class SimilarityScorer {
   public:
    virtual ~SimilarityScorer() = default;
    virtual double score(std::string_view a, std::string_view b,
                         std::string_view record_id) const = 0;
};

// Token-level F1 overlap; a lexical proxy for the embedding scorer the
// divergence analysis was designed around.
class LexicalOverlapScorer : public SimilarityScorer {
   public:
    double score(std::string_view a, std::string_view b, std::string_view) const override {
        const auto ta = metric_tokens(a);
        const auto tb = metric_tokens(b);
        if (ta.empty() && tb.empty()) return 1.0;
        if (ta.empty() || tb.empty()) return 0.0;
        std::unordered_map<std::string, size_t> counts;
        for (const auto& w : ta) ++counts[w];
        size_t matches = 0;
        for (const auto& w : tb) {
            auto it = counts.find(w);
            if (it != counts.end() && it->second > 0) {
                --it->second;
                ++matches;
            }
        }
        return 2.0 * static_cast<double>(matches) /
               static_cast<double>(ta.size() + tb.size());
    }
};

// Precomputed score file: JSONL {"id": ..., "score": ...}.
class PrecomputedScorer : public SimilarityScorer {
   public:
    explicit PrecomputedScorer(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open similarity file: " + path);
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                scores_[j.at("id").get<std::string>()] = j.at("score").get<double>();
            } catch (const nlohmann::json::exception& e) {
                throw ScorerUnavailable(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    double score(std::string_view, std::string_view, std::string_view record_id) const override {
        const auto it = scores_.find(std::string(record_id));
        if (it == scores_.end())
            throw ScorerUnavailable("no precomputed score for record '" +
                                    std::string(record_id) + "'");
        return it->second;
    }

   private:
    std::unordered_map<std::string, double> scores_;
};

struct SimilarityFlag {
    double score = 0.0;
    bool flagged = false;
};

inline SimilarityFlag similarity_flag(std::string_view pred_original,
                                      std::string_view pred_counterfactual,
                                      const SimilarityScorer& scorer,
                                      std::string_view record_id = "",
                                      double threshold = 0.5) {
    SimilarityFlag f;
    f.score = scorer.score(pred_original, pred_counterfactual, record_id);
    f.flagged = f.score < threshold;
    return f;
}

}  // namespace cda
