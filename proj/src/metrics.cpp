#include "cscl/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "cscl/common.hpp"

namespace cscl {

namespace {

constexpr double kBleuEpsilon = 1e-9;

bool is_special(const std::string& token) {
    return token == "<pad>" || token == "<bos>" || token == "<eos>";
}

void append_normalized(const std::string& word, std::vector<std::string>& out) {
    std::string run;
    for (char raw : word) {
        unsigned char c = static_cast<unsigned char>(raw);
        if (std::ispunct(c)) {
            if (!run.empty()) {
                out.push_back(run);
                run.clear();
            }
            out.push_back(std::string(1, static_cast<char>(c)));
        } else if (!std::isspace(c)) {
            run.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!run.empty()) out.push_back(run);
}

using Ngram = std::vector<std::string>;

std::map<Ngram, size_t> ngram_counts(const std::vector<std::string>& tokens, size_t n) {
    std::map<Ngram, size_t> counts;
    if (tokens.size() < n) return counts;
    for (size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
    return counts;
}

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

struct ClippedCounts {
    size_t matched = 0;
    size_t total = 0;
};

/// Modified precision counts for one pair: hypothesis k-grams clipped by the
/// best per-reference count.
ClippedCounts clipped_ngrams(const std::vector<std::vector<std::string>>& refs,
                             const std::vector<std::string>& hyp, size_t k) {
    ClippedCounts out;
    auto hyp_counts = ngram_counts(hyp, k);
    std::map<Ngram, size_t> best_ref;
    for (const auto& ref : refs)
        for (const auto& [gram, count] : ngram_counts(ref, k))
            best_ref[gram] = std::max(best_ref[gram], count);
    for (const auto& [gram, count] : hyp_counts) {
        out.total += count;
        auto it = best_ref.find(gram);
        if (it != best_ref.end()) out.matched += std::min(count, it->second);
    }
    return out;
}

/// Reference length closest to the hypothesis length (ties toward shorter).
size_t effective_ref_len(const std::vector<std::vector<std::string>>& refs, size_t hyp_len) {
    size_t best = refs.front().size();
    for (const auto& ref : refs) {
        size_t d_new = ref.size() > hyp_len ? ref.size() - hyp_len : hyp_len - ref.size();
        size_t d_old = best > hyp_len ? best - hyp_len : hyp_len - best;
        if (d_new < d_old || (d_new == d_old && ref.size() < best)) best = ref.size();
    }
    return best;
}

double bleu_from_counts(const std::vector<ClippedCounts>& per_k, size_t hyp_len, size_t ref_len) {
    if (hyp_len == 0) return 0.0;
    double log_sum = 0.0;
    for (const auto& c : per_k) {
        double matched = c.matched == 0 ? kBleuEpsilon : static_cast<double>(c.matched);
        double total = c.total == 0 ? 1.0 : static_cast<double>(c.total);
        log_sum += std::log(matched / total);
    }
    double geo = std::exp(log_sum / static_cast<double>(per_k.size()));
    double bp = hyp_len < ref_len
                    ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
                    : 1.0;
    return bp * geo;
}

double harmonic_f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

std::vector<std::string> normalize_tokens(const std::vector<std::string>& raw) {
    std::vector<std::string> out;
    for (const auto& token : raw) {
        if (is_special(token)) continue;
        append_normalized(token, out);
    }
    return out;
}

std::vector<std::string> normalize_text(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream in(text);
    std::string w;
    while (in >> w) words.push_back(w);
    return normalize_tokens(words);
}

double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
    require(!ref.empty(), "WER needs a non-empty reference");
    std::vector<size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
    for (size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
    for (size_t i = 1; i <= ref.size(); ++i) {
        cur[0] = i;
        for (size_t j = 1; j <= hyp.size(); ++j) {
            size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return static_cast<double>(prev[hyp.size()]) / static_cast<double>(ref.size());
}

double bleu_n(const std::vector<std::vector<std::string>>& refs,
              const std::vector<std::string>& hyp, int n) {
    require(n >= 1 && n <= 4, "BLEU order must be in [1, 4]");
    require(!refs.empty(), "BLEU needs at least one reference");
    if (hyp.empty()) return 0.0;
    std::vector<ClippedCounts> per_k;
    for (int k = 1; k <= n; ++k) per_k.push_back(clipped_ngrams(refs, hyp, static_cast<size_t>(k)));
    return bleu_from_counts(per_k, hyp.size(), effective_ref_len(refs, hyp.size()));
}

RougeScore rouge(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                 RougeVariant variant) {
    require(!ref.empty(), "ROUGE needs a non-empty reference");
    double overlap = 0.0, ref_units = 0.0, hyp_units = 0.0;
    if (variant == RougeVariant::lcs) {
        overlap = static_cast<double>(lcs_length(ref, hyp));
        ref_units = static_cast<double>(ref.size());
        hyp_units = static_cast<double>(hyp.size());
    } else {
        size_t n = variant == RougeVariant::one ? 1 : 2;
        auto rc = ngram_counts(ref, n);
        auto hc = ngram_counts(hyp, n);
        for (const auto& [gram, count] : rc) {
            ref_units += static_cast<double>(count);
            auto it = hc.find(gram);
            if (it != hc.end()) overlap += static_cast<double>(std::min(count, it->second));
        }
        for (const auto& [gram, count] : hc) hyp_units += static_cast<double>(count);
    }
    RougeScore s;
    s.precision = hyp_units > 0.0 ? overlap / hyp_units : 0.0;
    s.recall = ref_units > 0.0 ? overlap / ref_units : 0.0;
    s.f1 = harmonic_f1(s.precision, s.recall);
    return s;
}

ScoreReport corpus_scores(const std::vector<ScorePair>& pairs) {
    require(!pairs.empty(), "cannot score an empty pair list");

    std::vector<ClippedCounts> pooled(4);
    size_t pooled_hyp = 0, pooled_ref = 0;
    RougeScore sum1, sum2, sumL;
    double wer_sum = 0.0;

    for (const auto& [raw_ref, raw_hyp] : pairs) {
        std::vector<std::string> ref = normalize_tokens(raw_ref);
        std::vector<std::string> hyp = normalize_tokens(raw_hyp);
        require(!ref.empty(), "a reference normalized to nothing");

        for (size_t k = 1; k <= 4; ++k) {
            ClippedCounts c = clipped_ngrams({ref}, hyp, k);
            pooled[k - 1].matched += c.matched;
            pooled[k - 1].total += c.total;
        }
        pooled_hyp += hyp.size();
        pooled_ref += ref.size();

        for (auto [variant, sum] : {std::pair<RougeVariant, RougeScore*>{RougeVariant::one, &sum1},
                                    {RougeVariant::two, &sum2},
                                    {RougeVariant::lcs, &sumL}}) {
            RougeScore s = rouge(ref, hyp, variant);
            sum->precision += s.precision;
            sum->recall += s.recall;
        }
        wer_sum += wer(ref, hyp);
    }

    const double n = static_cast<double>(pairs.size());
    ScoreReport report;
    auto finish = [&](RougeScore sum) {
        RougeScore s;
        s.precision = sum.precision / n;
        s.recall = sum.recall / n;
        s.f1 = harmonic_f1(s.precision, s.recall);
        return s;
    };
    report.rouge1 = finish(sum1);
    report.rouge2 = finish(sum2);
    report.rougeL = finish(sumL);
    report.wer = wer_sum / n;
    report.bleu1 = bleu_from_counts({pooled.begin(), pooled.begin() + 1}, pooled_hyp, pooled_ref);
    report.bleu2 = bleu_from_counts({pooled.begin(), pooled.begin() + 2}, pooled_hyp, pooled_ref);
    report.bleu3 = bleu_from_counts({pooled.begin(), pooled.begin() + 3}, pooled_hyp, pooled_ref);
    report.bleu4 = bleu_from_counts({pooled.begin(), pooled.begin() + 4}, pooled_hyp, pooled_ref);
    return report;
}

}  // namespace cscl
