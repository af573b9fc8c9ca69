#include <cmath>
#include <set>
#include <string>

#include "cscl/common.hpp"
#include "cscl/corpus.hpp"
#include "cscl/synthgen.hpp"
#include "doctest.h"

using namespace cscl;

namespace {

SynthConfig small_config() {
    SynthConfig c;
    c.n_subjects = 4;
    c.n_sentences = 12;
    c.vocab_size = 20;
    c.min_sentence_len = 3;
    c.max_sentence_len = 6;
    c.feature_dim = 8;
    c.readings_per_sentence = 3;
    c.seed = 42;
    return c;
}

}  // namespace

TEST_CASE("generation is bit identical for equal seeds") {
    Corpus a = generate(small_config());
    Corpus b = generate(small_config());
    CHECK(corpus_hash(a) == corpus_hash(b));
    SynthConfig other = small_config();
    other.seed = 43;
    CHECK(corpus_hash(generate(other)) != corpus_hash(a));
}

TEST_CASE("generated corpus matches its config") {
    SynthConfig cfg = small_config();
    Corpus c = generate(cfg);
    CHECK(c.trials.size() == cfg.n_sentences * cfg.readings_per_sentence);
    CHECK(c.feature_dim == cfg.feature_dim);
    std::set<uint32_t> sentences;
    for (const Trial& t : c.trials) {
        sentences.insert(t.sentence_id);
        CHECK(t.tokens.size() >= cfg.min_sentence_len);
        CHECK(t.tokens.size() <= cfg.max_sentence_len);
        CHECK(t.features.rows == t.tokens.size());
        CHECK(t.features.all_finite());
    }
    CHECK(sentences.size() == cfg.n_sentences);
    CorpusIndex idx = build_index(c);
    for (const auto& [sid, trials] : idx.by_sentence) CHECK(trials.size() == cfg.readings_per_sentence);
}

TEST_CASE("pure subject signal makes every word of a subject identical") {
    SynthConfig cfg = small_config();
    cfg.subject_gain = 1.0;
    cfg.semantic_gain = 0.0;
    cfg.noise_std = 0.0;
    Corpus c = generate(cfg);
    CorpusIndex idx = build_index(c);
    for (const auto& [subject, trials] : idx.by_subject) {
        const Mat& first = c.trials[trials[0]].features;
        for (size_t ti : trials) {
            const Mat& f = c.trials[ti].features;
            for (size_t i = 0; i < f.rows; ++i)
                for (size_t j = 0; j < f.cols; ++j) CHECK(f.at(i, j) == first.at(0, j));
        }
    }
}

TEST_CASE("pure semantic signal makes same-sentence trials identical across subjects") {
    SynthConfig cfg = small_config();
    cfg.subject_gain = 0.0;
    cfg.semantic_gain = 1.0;
    cfg.noise_std = 0.0;
    Corpus c = generate(cfg);
    CorpusIndex idx = build_index(c);
    for (const auto& [sid, trials] : idx.by_sentence) {
        const Mat& first = c.trials[trials[0]].features;
        for (size_t ti : trials) {
            const Mat& f = c.trials[ti].features;
            REQUIRE(f.rows == first.rows);
            for (size_t k = 0; k < f.size(); ++k) CHECK(f.data[k] == first.data[k]);
        }
    }
}

TEST_CASE("config validation rejects degenerate settings") {
    SynthConfig cfg = small_config();
    cfg.n_subjects = 0;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small_config();
    cfg.n_sentences = 0;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small_config();
    cfg.min_sentence_len = 9;
    cfg.max_sentence_len = 3;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small_config();
    cfg.readings_per_sentence = 1;
    CHECK_THROWS_AS(generate(cfg), Error);
    cfg = small_config();
    cfg.readings_per_sentence = cfg.n_subjects + 1;
    CHECK_THROWS_AS(generate(cfg), Error);
}

TEST_CASE("split partitions sentences 8/1/1 on ten sentences") {
    SynthConfig cfg = small_config();
    cfg.n_sentences = 10;
    Corpus c = generate(cfg);
    auto [train, valid, test] = split(c, SplitFractions{}, cfg.seed);
    auto ids = [](const Corpus& k) {
        std::set<uint32_t> s;
        for (const Trial& t : k.trials) s.insert(t.sentence_id);
        return s;
    };
    CHECK(ids(train).size() == 8);
    CHECK(ids(valid).size() == 1);
    CHECK(ids(test).size() == 1);
    CHECK_NOTHROW(validate_benchmark(train, valid, test));
    CHECK(train.trials.size() + valid.trials.size() + test.trials.size() == c.trials.size());
    CHECK(train.split == "train");
    CHECK(valid.split == "valid");
    CHECK(test.split == "test");
}

TEST_CASE("split keeps whole sentences together and is seed stable") {
    Corpus c = generate(small_config());
    auto [tr1, va1, te1] = split(c, SplitFractions{}, 5);
    auto [tr2, va2, te2] = split(c, SplitFractions{}, 5);
    CHECK(corpus_hash(tr1) == corpus_hash(tr2));
    CHECK(corpus_hash(va1) == corpus_hash(va2));
    CHECK(corpus_hash(te1) == corpus_hash(te2));
    CHECK_NOTHROW(validate_benchmark(tr1, va1, te1));
}

TEST_CASE("split puts every subject in every split for the default config") {
    SynthConfig cfg;  // defaults: 8 subjects, 60 sentences, 4 readings
    cfg.seed = 7;
    Corpus c = generate(cfg);
    auto [train, valid, test] = split(c, SplitFractions{}, cfg.seed);
    auto subjects = [](const Corpus& k) {
        std::set<std::string> s;
        for (const Trial& t : k.trials) s.insert(t.subject);
        return s;
    };
    CHECK(subjects(train).size() == cfg.n_subjects);
    CHECK(subjects(valid).size() == cfg.n_subjects);
    CHECK(subjects(test).size() == cfg.n_subjects);
}

TEST_CASE("split rejects bad fractions and tiny corpora") {
    Corpus c = generate(small_config());
    SplitFractions bad{0.5, 0.5, 0.2};
    CHECK_THROWS_AS(split(c, bad, 1), Error);
    SplitFractions zero{1.0, 0.0, 0.0};
    CHECK_THROWS_AS(split(c, zero, 1), Error);

    SynthConfig cfg = small_config();
    cfg.n_sentences = 2;
    Corpus tiny = generate(cfg);
    CHECK_THROWS_AS(split(tiny, SplitFractions{}, 1), Error);
}

TEST_CASE("increasing subject gain does not shrink subject separation") {
    // Ratio of between-subject to within-subject embedding distance grows
    // with the subject gain; checked coarsely over seeds.
    auto subject_spread = [](double gain, uint64_t seed) {
        SynthConfig cfg;
        cfg.n_subjects = 4;
        cfg.n_sentences = 20;
        cfg.readings_per_sentence = 4;
        cfg.feature_dim = 16;
        cfg.subject_gain = gain;
        cfg.semantic_gain = 0.4;
        cfg.noise_std = 0.2;
        cfg.seed = seed;
        Corpus c = generate(cfg);
        CorpusIndex idx = build_index(c);
        // Mean cosine similarity within subject minus across subjects.
        double within = 0, across = 0;
        size_t nw = 0, na = 0;
        std::vector<std::vector<double>> emb;
        for (const Trial& t : c.trials) emb.push_back(sentence_embedding(t));
        for (size_t i = 0; i < emb.size(); ++i)
            for (size_t j = i + 1; j < emb.size(); ++j) {
                double s = cosine_similarity(emb[i], emb[j]);
                if (c.trials[i].subject == c.trials[j].subject) {
                    within += s;
                    ++nw;
                } else {
                    across += s;
                    ++na;
                }
            }
        return within / static_cast<double>(nw) - across / static_cast<double>(na);
    };
    int wins = 0;
    for (uint64_t seed = 1; seed <= 5; ++seed)
        if (subject_spread(2.0, seed) >= subject_spread(0.2, seed)) ++wins;
    CHECK(wins >= 4);
}
