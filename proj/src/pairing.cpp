#include "cscl/pairing.hpp"

#include "cscl/common.hpp"

namespace cscl {

std::vector<size_t> positive_set(size_t anchor, const Corpus& corpus, const CorpusIndex& index) {
    require(anchor < corpus.trials.size(), "anchor index out of range");
    const auto& same_sentence = index.by_sentence.at(corpus.trials[anchor].sentence_id);
    std::vector<size_t> out;
    out.reserve(same_sentence.size() - 1);
    for (size_t i : same_sentence)
        if (i != anchor) out.push_back(i);
    return out;
}

std::vector<size_t> negative_set(size_t anchor, const Corpus& corpus, const CorpusIndex& index,
                                 NegativeRule rule) {
    require(anchor < corpus.trials.size(), "anchor index out of range");
    (void)index;
    const Trial& a = corpus.trials[anchor];
    std::vector<size_t> out;
    for (size_t i = 0; i < corpus.trials.size(); ++i) {
        const Trial& t = corpus.trials[i];
        if (t.sentence_id == a.sentence_id) continue;
        if (rule == NegativeRule::both_conditions && t.subject == a.subject) continue;
        out.push_back(i);
    }
    return out;
}

CandidateSets build_candidates(size_t anchor, const Corpus& corpus, const CorpusIndex& index,
                               NegativeRule rule) {
    CandidateSets c;
    c.anchor = anchor;
    c.positives = positive_set(anchor, corpus, index);
    c.negatives = negative_set(anchor, corpus, index, rule);
    return c;
}

PairingReport build_all_candidates(const Corpus& corpus, const CorpusIndex& index,
                                   NegativeRule rule) {
    PairingReport report;
    report.anchors.reserve(corpus.trials.size());
    for (size_t i = 0; i < corpus.trials.size(); ++i) {
        report.anchors.push_back(build_candidates(i, corpus, index, rule));
        if (report.anchors.back().positives.empty()) report.empty_positive_count += 1;
        if (report.anchors.back().negatives.empty()) report.empty_negative_count += 1;
    }
    return report;
}

}  // namespace cscl
