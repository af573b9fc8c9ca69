#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cscl/contrastive.hpp"
#include "cscl/corpus.hpp"
#include "cscl/encoder.hpp"
#include "cscl/metrics.hpp"
#include "cscl/seq2seq.hpp"
#include "cscl/synthgen.hpp"

namespace cscl {

/// One pooled embedding row per trial, evaluation mode.
Mat encode_corpus(const PreEncoderModel& model, const Corpus& corpus);

/// Mean word-feature row per trial (the pre-encoder's input space).
Mat raw_embeddings(const Corpus& corpus);

/// Per-point silhouette with cosine distance. Points in singleton clusters
/// score 0 by convention. Rows must have nonzero norm.
std::vector<double> silhouette_samples(const Mat& embeddings, const std::vector<int>& labels);

/// How strongly the embedding space clusters by sentence versus by subject.
/// Each silhouette needs at least two labels with at least two members each.
/// intra_over_inter is mean same-sentence cosine over mean cross-sentence
/// cosine, so values above 1 mean sentence identity dominates the geometry.
struct ClusterReport {
    double silhouette_by_sentence = 0.0;
    double silhouette_by_subject = 0.0;
    double intra_over_inter = 0.0;
};

ClusterReport cluster_report(const Mat& embeddings, const std::vector<uint32_t>& sentence_labels,
                             const std::vector<std::string>& subject_labels);

/// Connected components of the graph joining pairs with cosine >= min_cosine.
/// Diagnostic only; nothing downstream branches on it.
size_t component_count(const Mat& embeddings, double min_cosine);

/// PCA onto the top two principal components. Deterministic: each component's
/// largest-magnitude coordinate is made positive, ties broken by lowest index.
struct Projection {
    Mat points;                              // n x 2
    std::array<double, 2> explained{};       // variance ratio per component
};

Projection project2d(const Mat& embeddings);

/// Shared knobs for the experiment protocols. `seed` drives model init and
/// both training stages; the corpus comes from synth.seed, so reruns with a
/// new seed retrain on the same data unless synth.seed changes too.
struct ExperimentConfig {
    SynthConfig synth;
    SplitFractions fractions;
    PreEncoderConfig pre;
    ContrastiveConfig contrastive;
    Seq2SeqConfig seq2seq;                   // vocab is filled per run
    size_t finetune_epochs = 6;
    size_t finetune_batch = 8;
    uint64_t seed = 1;

    void validate() const;
};

/// Contrastive-then-finetune against the same stack finetuned from the
/// untrained pre-encoder. Both arms share every seed, so the initialization
/// of the pre-encoder is the only difference.
struct PairedOutcome {
    ScoreReport with_cscl;
    ScoreReport without_cscl;
    ClusterReport cluster_before;            // test embeddings, untrained pre-encoder
    ClusterReport cluster_after;             // test embeddings, pretrained pre-encoder
    size_t train_trials = 0;
};

PairedOutcome paired_run(const ExperimentConfig& config);

/// Cluster structure of the test split in three spaces: raw features, the
/// untrained pre-encoder, and the contrastively pretrained pre-encoder.
struct RecalibrationOutcome {
    ClusterReport raw;
    ClusterReport before;
    ClusterReport after;
};

RecalibrationOutcome recalibration(const ExperimentConfig& config);

/// Paired runs on nested sentence-prefix subsets of the training split.
/// Fraction 1.0 keeps the split untouched and reproduces paired_run exactly.
struct LowResourcePoint {
    double fraction = 0.0;
    size_t train_trials = 0;
    PairedOutcome outcome;
};

std::vector<LowResourcePoint> low_resource(const ExperimentConfig& config,
                                           const std::vector<double>& fractions);

/// Drop one subject from both training stages, then measure how well that
/// subject's trials land in the right sentence clusters of the full-corpus
/// embedding: mean per-point sentence silhouette over the held-out trials,
/// before and after contrastive pretraining.
struct ZeroShotOutcome {
    std::string subject;
    size_t held_out_trials = 0;
    double silhouette_before = 0.0;
    double silhouette_after = 0.0;
};

ZeroShotOutcome zero_shot(const ExperimentConfig& config, const std::string& held_out_subject);

/// Fine-tune and evaluate on one subject's trials only. The contrastive
/// stage still sees the full multi-subject training split: positives need a
/// second reading of the sentence and negatives a different subject, so a
/// single subject's data alone can satisfy neither.
struct SubjectOutcome {
    std::string subject;
    size_t test_trials = 0;
    ScoreReport with_cscl;
    ScoreReport without_cscl;
};

SubjectOutcome single_subject(const ExperimentConfig& config, const std::string& subject);

/// One full pipeline per curriculum arm: each difficulty level alone plus the
/// uniform per-anchor mix. Every arm draws one triple per anchor per epoch,
/// so all arms train on the same amount of contrastive data.
struct CurriculumArm {
    std::string name;
    double final_pretrain_loss = 0.0;
    ScoreReport scores;
};

std::vector<CurriculumArm> single_curriculum(const ExperimentConfig& config);

/// (reference tokens, greedy decode) per trial, in corpus order.
std::vector<ScorePair> generation_pairs(const Seq2SeqModel& model, const Corpus& corpus);

}  // namespace cscl
