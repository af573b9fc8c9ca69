#include "cscl/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cscl/common.hpp"
#include "cscl/rng.hpp"

namespace cscl {

namespace {

// Stream salts, so adding draws to one phase cannot shift another.
constexpr uint64_t kSaltSubjectDirs = 1;
constexpr uint64_t kSaltWordDirs = 2;
constexpr uint64_t kSaltSentences = 3;
constexpr uint64_t kSaltReaders = 4;
constexpr uint64_t kSaltNoise = 5;
constexpr uint64_t kSaltSplit = 6;

std::vector<double> random_unit_vector(size_t dim, Rng& rng) {
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

std::string padded_name(char prefix, size_t index, size_t count) {
    size_t width = 1;
    for (size_t c = count - 1; c >= 10; c /= 10) ++width;
    std::string digits = std::to_string(index);
    std::string out(1, prefix);
    out.append(width > digits.size() ? width - digits.size() : 0, '0');
    out += digits;
    return out;
}

}  // namespace

void SynthConfig::validate() const {
    require(n_subjects >= 1, "n_subjects must be >= 1");
    require(n_sentences >= 1, "n_sentences must be >= 1");
    require(vocab_size >= 1, "vocab_size must be >= 1");
    require(feature_dim >= 1, "feature_dim must be >= 1");
    require(min_sentence_len >= 1, "min_sentence_len must be >= 1");
    require(min_sentence_len <= max_sentence_len, "sentence length range is inverted");
    require(readings_per_sentence >= 2, "readings_per_sentence must be >= 2 for contrastive pairs");
    require(readings_per_sentence <= n_subjects, "readings_per_sentence exceeds n_subjects");
    require(subject_gain >= 0.0 && semantic_gain >= 0.0 && noise_std >= 0.0, "gains and noise must be >= 0");
}

Corpus generate(const SynthConfig& config) {
    config.validate();
    Rng root(config.seed);

    Rng subj_rng = root.derive(kSaltSubjectDirs);
    std::vector<std::vector<double>> u(config.n_subjects);
    for (auto& v : u) v = random_unit_vector(config.feature_dim, subj_rng);

    Rng word_rng = root.derive(kSaltWordDirs);
    std::vector<std::vector<double>> v(config.vocab_size);
    for (auto& w : v) w = random_unit_vector(config.feature_dim, word_rng);

    Rng sent_rng = root.derive(kSaltSentences);
    std::vector<std::vector<size_t>> sentences(config.n_sentences);
    for (auto& words : sentences) {
        size_t len = config.min_sentence_len +
                     sent_rng.uniform_int(config.max_sentence_len - config.min_sentence_len + 1);
        words.resize(len);
        for (auto& w : words) w = sent_rng.uniform_int(config.vocab_size);
    }

    Rng reader_rng = root.derive(kSaltReaders);
    Rng noise_rng = root.derive(kSaltNoise);

    Corpus corpus;
    corpus.split = "full";
    corpus.feature_dim = config.feature_dim;
    for (size_t s = 0; s < config.n_sentences; ++s) {
        auto readers = reader_rng.sample_without_replacement(config.n_subjects, config.readings_per_sentence);
        std::sort(readers.begin(), readers.end());
        for (size_t p : readers) {
            Trial t;
            t.subject = padded_name('S', p, config.n_subjects);
            t.sentence_id = static_cast<uint32_t>(s);
            t.features = Mat(sentences[s].size(), config.feature_dim);
            t.tokens.reserve(sentences[s].size());
            for (size_t i = 0; i < sentences[s].size(); ++i) {
                size_t w = sentences[s][i];
                t.tokens.push_back(padded_name('w', w, config.vocab_size));
                for (size_t j = 0; j < config.feature_dim; ++j) {
                    double val = config.subject_gain * u[p][j] + config.semantic_gain * v[w][j];
                    if (config.noise_std > 0.0) val += noise_rng.normal(0.0, config.noise_std);
                    t.features.at(i, j) = val;
                }
            }
            t.features.quantize_f32();
            corpus.trials.push_back(std::move(t));
        }
    }
    return corpus;
}

std::tuple<Corpus, Corpus, Corpus> split(const Corpus& corpus, const SplitFractions& fractions,
                                         uint64_t seed) {
    require(fractions.train > 0.0 && fractions.valid > 0.0 && fractions.test > 0.0,
            "split fractions must be positive");
    require(std::abs(fractions.train + fractions.valid + fractions.test - 1.0) < 1e-9,
            "split fractions must sum to 1");

    std::set<uint32_t> id_set;
    for (const Trial& t : corpus.trials) id_set.insert(t.sentence_id);
    std::vector<uint32_t> ids(id_set.begin(), id_set.end());
    const size_t n = ids.size();
    require(n >= 3, "too few sentences to populate train/valid/test");

    // Largest-remainder apportionment of sentence counts.
    const double fr[3] = {fractions.train, fractions.valid, fractions.test};
    size_t counts[3];
    double rem[3];
    size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
        double exact = fr[k] * static_cast<double>(n);
        counts[k] = static_cast<size_t>(exact);
        rem[k] = exact - static_cast<double>(counts[k]);
        assigned += counts[k];
    }
    while (assigned < n) {
        int best = 0;
        for (int k = 1; k < 3; ++k)
            if (rem[k] > rem[best]) best = k;
        counts[best] += 1;
        rem[best] = -1.0;
        assigned += 1;
    }
    require(counts[0] >= 1 && counts[1] >= 1 && counts[2] >= 1,
            "too few sentences to populate train/valid/test");

    std::map<uint32_t, std::set<std::string>> readers_of;
    std::set<std::string> all_subjects;
    for (const Trial& t : corpus.trials) {
        readers_of[t.sentence_id].insert(t.subject);
        all_subjects.insert(t.subject);
    }

    // Retry shuffles until every subject lands in every split, keeping the
    // assignment with the fewest missing (subject, split) pairs otherwise.
    Rng rng = Rng(seed).derive(kSaltSplit);
    std::vector<uint32_t> best_order;
    size_t best_missing = static_cast<size_t>(-1);
    for (int attempt = 0; attempt < 200; ++attempt) {
        std::vector<uint32_t> order = ids;
        rng.shuffle(order);
        size_t missing = 0;
        size_t offset = 0;
        for (int k = 0; k < 3; ++k) {
            std::set<std::string> seen;
            for (size_t i = 0; i < counts[k]; ++i)
                for (const auto& s : readers_of[order[offset + i]]) seen.insert(s);
            missing += all_subjects.size() - seen.size();
            offset += counts[k];
        }
        if (missing < best_missing) {
            best_missing = missing;
            best_order = order;
            if (missing == 0) break;
        }
    }

    std::map<uint32_t, int> split_of;
    size_t offset = 0;
    for (int k = 0; k < 3; ++k) {
        for (size_t i = 0; i < counts[k]; ++i) split_of[best_order[offset + i]] = k;
        offset += counts[k];
    }

    Corpus parts[3];
    const char* names[3] = {"train", "valid", "test"};
    for (int k = 0; k < 3; ++k) {
        parts[k].split = names[k];
        parts[k].feature_dim = corpus.feature_dim;
    }
    for (const Trial& t : corpus.trials) parts[split_of[t.sentence_id]].trials.push_back(t);
    for (int k = 0; k < 3; ++k)
        require(!parts[k].trials.empty(), std::string("split '") + names[k] + "' received no trials");
    return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

}  // namespace cscl
