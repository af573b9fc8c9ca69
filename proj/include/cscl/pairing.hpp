#pragma once

#include <cstddef>
#include <vector>

#include "cscl/corpus.hpp"

namespace cscl {

/// Negative eligibility. The default demands a different sentence AND a
/// different subject; the relaxed variant keeps only the sentence condition.
enum class NegativeRule { both_conditions, sentence_only };

/// Per-anchor contrastive candidates: positives share the anchor's sentence,
/// negatives satisfy the active NegativeRule. Index lists, ascending.
struct CandidateSets {
    size_t anchor = 0;
    std::vector<size_t> positives;
    std::vector<size_t> negatives;
};

std::vector<size_t> positive_set(size_t anchor, const Corpus& corpus, const CorpusIndex& index);

std::vector<size_t> negative_set(size_t anchor, const Corpus& corpus, const CorpusIndex& index,
                                 NegativeRule rule = NegativeRule::both_conditions);

CandidateSets build_candidates(size_t anchor, const Corpus& corpus, const CorpusIndex& index,
                               NegativeRule rule = NegativeRule::both_conditions);

/// Candidates for every anchor plus counts of anchors unusable for
/// contrastive training (empty positive or negative set).
struct PairingReport {
    std::vector<CandidateSets> anchors;
    size_t empty_positive_count = 0;
    size_t empty_negative_count = 0;

    bool usable(size_t anchor) const {
        return !anchors[anchor].positives.empty() && !anchors[anchor].negatives.empty();
    }
};

PairingReport build_all_candidates(const Corpus& corpus, const CorpusIndex& index,
                                   NegativeRule rule = NegativeRule::both_conditions);

}  // namespace cscl
