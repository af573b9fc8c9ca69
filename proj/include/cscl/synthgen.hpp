#pragma once

#include <cstdint>
#include <string>
#include <tuple>

#include "cscl/corpus.hpp"

namespace cscl {

/// Generative model: word feature = subject_gain * u_subject
///                                 + semantic_gain * v_word
///                                 + noise, noise ~ Normal(0, noise_std^2 I),
/// with fixed random unit direction vectors u per subject and v per word.
/// Subject gain above semantic gain reproduces the subject-dominant
/// clustering the pre-encoder is meant to repair.
struct SynthConfig {
    size_t n_subjects = 8;
    size_t n_sentences = 60;
    size_t vocab_size = 120;
    size_t min_sentence_len = 5;
    size_t max_sentence_len = 12;
    size_t feature_dim = 64;
    double subject_gain = 1.0;
    double semantic_gain = 0.4;
    double noise_std = 0.2;
    size_t readings_per_sentence = 4;
    uint64_t seed = 1;

    void validate() const;
};

Corpus generate(const SynthConfig& config);

struct SplitFractions {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

/// Partition by sentence so no sentence crosses a split boundary. Sentence
/// counts use largest-remainder rounding; assignments are reshuffled a
/// bounded number of times to get every subject into every split when the
/// corpus allows it. Deterministic given seed.
std::tuple<Corpus, Corpus, Corpus> split(const Corpus& corpus, const SplitFractions& fractions,
                                         uint64_t seed);

}  // namespace cscl
