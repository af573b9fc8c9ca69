#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cscl/corpus.hpp"
#include "cscl/pairing.hpp"
#include "cscl/rng.hpp"

namespace cscl {

/// Per-anchor candidate ordering plus level boundaries. Positives are sorted
/// by descending cosine similarity to the anchor, negatives ascending, so in
/// both lists the easy candidates come first. offsets have n_levels+1 entries
/// and partition the list into contiguous level segments.
struct AnchorCurriculum {
    size_t anchor = 0;
    std::vector<size_t> positives_sorted;
    std::vector<size_t> negatives_sorted;
    std::vector<size_t> pos_offsets;
    std::vector<size_t> neg_offsets;
};

struct CurriculumIndex {
    uint64_t corpus_hash = 0;
    size_t n_levels = 3;
    std::vector<AnchorCurriculum> anchors;  // anchors[i].anchor == i
};

struct Triple {
    size_t anchor = 0;
    size_t positive = 0;
    size_t negative = 0;
};

enum class ScheduleMode { curriculum, random, fixed_level, mixed_thirds };

struct ScheduleConfig {
    size_t n_levels = 3;
    size_t total_epochs = 9;
    ScheduleMode mode = ScheduleMode::curriculum;
    size_t fixed_level = 0;  // only read in fixed_level mode

    void validate() const;
};

ScheduleMode schedule_mode_from_string(const std::string& name);
std::string to_string(ScheduleMode mode);

enum class SortOrder { descending, ascending };

/// Cosine similarity between the mean word features of two trials.
double trial_similarity(const Corpus& corpus, size_t a, size_t b);

/// Candidates ordered by similarity to the anchor; ties break toward the
/// lower trial index.
std::vector<size_t> cur_cri(const Corpus& corpus, size_t anchor, std::vector<size_t> candidates,
                            SortOrder order);

/// Contiguous level boundaries: sizes as equal as possible, remainder going
/// to the earlier levels. Returns n_levels+1 offsets into a list of length n.
std::vector<size_t> level_offsets(size_t n, size_t n_levels);

/// The same split materialized as segments (concatenation reproduces input).
std::vector<std::vector<size_t>> cur_lev(const std::vector<size_t>& sorted, size_t n_levels);

/// Uniform draw from the requested level, falling back toward easier levels
/// when the requested one is empty. fell_back reports whether that happened.
size_t cur_sche(const std::vector<std::vector<size_t>>& levels, size_t current_level, Rng& rng,
                bool* fell_back = nullptr);

/// Maps a 1-based epoch onto a level: total_epochs split into n_levels
/// contiguous phases with the same remainder-to-front rule as cur_lev.
size_t epoch_level(size_t epoch, size_t total_epochs, size_t n_levels);

CurriculumIndex build_curriculum(const Corpus& corpus, const PairingReport& pairing,
                                 size_t n_levels = 3);

void save_curriculum(const CurriculumIndex& index, const std::string& path);
CurriculumIndex load_curriculum(const std::string& path, const Corpus& corpus);

/// One triple per usable anchor, sampled for the given epoch under the
/// schedule. Deterministic given the rng state.
std::vector<Triple> make_triples(const Corpus& corpus, const CurriculumIndex& index,
                                 const ScheduleConfig& schedule, size_t epoch, Rng& rng);

struct AuditResult {
    size_t satisfied = 0;
    size_t total = 0;
    double fraction = 0.0;
};

/// Fraction of triples whose anchor is already closer (cosine over raw
/// sentence embeddings) to its positive than to its negative.
AuditResult audit(const std::vector<Triple>& triples, const Corpus& corpus);

}  // namespace cscl
