#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cscl/mat.hpp"

namespace cscl {

/// One subject's reading of one sentence: word tokens plus one feature row
/// per word. Feature values are kept float32-representable so the text and
/// binary interchange formats carry identical information.
struct Trial {
    std::string subject;
    uint32_t sentence_id = 0;
    std::vector<std::string> tokens;
    Mat features;  // len(tokens) x feature_dim

    size_t word_count() const { return tokens.size(); }
};

struct ZscoreStats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population std; entries < 1e-12 zero the dimension
};

struct Corpus {
    std::vector<Trial> trials;
    std::string split;  // "train", "valid", "test", or "full"
    size_t feature_dim = 0;
    std::optional<ZscoreStats> zscore_stats;
    size_t dropped_count = 0;  // trials removed at load for non-finite features

    bool standardized() const { return zscore_stats.has_value(); }
};

/// Lookup maps from sentence and subject to trial indices. Map ordering and
/// index-sorted value lists make iteration deterministic.
struct CorpusIndex {
    std::map<uint32_t, std::vector<size_t>> by_sentence;
    std::map<std::string, std::vector<size_t>> by_subject;
};

enum class CorpusFormat { jsonl, binary };

/// Picks the format from the file extension: .jsonl is text, anything else binary.
CorpusFormat format_from_path(const std::string& path);

Corpus load_corpus(const std::string& path, CorpusFormat format);
void save_corpus(const Corpus& corpus, const std::string& path, CorpusFormat format);

/// Canonical binary serialization of the trial payload (no split/stats), used
/// for both the binary file format and content hashing.
std::string serialize_trials(const Corpus& corpus);
uint64_t corpus_hash(const Corpus& corpus);

/// Standardize per dimension with statistics from this corpus (train split).
Corpus zscore(const Corpus& corpus);

/// Standardize with externally computed statistics (valid/test splits reuse
/// the train stats so no information leaks across the split boundary).
Corpus apply_zscore(const Corpus& corpus, const ZscoreStats& stats);

CorpusIndex build_index(const Corpus& corpus);

/// Mean over the word-feature rows of a trial.
std::vector<double> sentence_embedding(const Trial& trial);

/// Checks the cross-split contract: disjoint sentence ids, equal feature_dim.
void validate_benchmark(const Corpus& train, const Corpus& valid, const Corpus& test);

}  // namespace cscl
