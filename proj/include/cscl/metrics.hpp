#pragma once

#include <string>
#include <utility>
#include <vector>

namespace cscl {

/// Text normalizer pinned for reproducible scoring, applied in this order:
/// whitespace split, exact-match removal of <pad>/<bos>/<eos>, lowercasing,
/// punctuation detachment (each punctuation character becomes its own token).
std::vector<std::string> normalize_tokens(const std::vector<std::string>& raw);
std::vector<std::string> normalize_text(const std::string& text);

/// Word-level Levenshtein distance with unit costs, divided by the reference
/// length. May exceed 1 for long hypotheses; empty reference is an error.
double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

/// Geometric mean of clipped modified k-gram precisions for k <= n, times the
/// brevity penalty e^{1-r/c} when c < r. Zero match counts are replaced with
/// 1e-9 before the geometric mean; an empty hypothesis scores 0.
double bleu_n(const std::vector<std::vector<std::string>>& refs,
              const std::vector<std::string>& hyp, int n);

enum class RougeVariant { one, two, lcs };

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// N-gram overlap (variants one/two) or longest common subsequence (lcs),
/// reported as precision/recall/F1. Reference must be non-empty.
RougeScore rouge(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                 RougeVariant variant);

struct ScoreReport {
    RougeScore rouge1, rouge2, rougeL;
    double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
    double wer = 0.0;
};

using ScorePair = std::pair<std::vector<std::string>, std::vector<std::string>>;  // (ref, hyp)

/// Corpus scoring over normalized pairs: BLEU pools n-gram counts across the
/// corpus; ROUGE precision/recall and WER are macro-averaged per pair, with
/// each aggregate F1 recomputed as the harmonic mean of the averaged P and R.
ScoreReport corpus_scores(const std::vector<ScorePair>& pairs);

}  // namespace cscl
