#pragma once

#include <cstdint>
#include <vector>

#include "cscl/corpus.hpp"
#include "cscl/curriculum.hpp"
#include "cscl/encoder.hpp"
#include "cscl/mat.hpp"

namespace cscl {

/// Denominator reading for the batched contrastive objective. in_batch sums
/// the positive and negative terms of every batch row (the cited-framework
/// reading); per_example keeps only the row's own positive and negative.
enum class DenominatorMode { in_batch, per_example };

struct ContrastiveConfig {
    double tau = 1e-5;
    size_t batch_size = 32;
    size_t epochs = 9;
    double lr = 1e-3;
    uint64_t seed = 1;
    ScheduleConfig schedule;
    DenominatorMode denominator = DenominatorMode::in_batch;

    void validate() const;
};

struct ContrastiveLoss {
    double loss = 0.0;
    Mat d_anchor;    // N x d
    Mat d_positive;  // N x d
    Mat d_negative;  // N x d
};

/// Batched loss over pooled embeddings with cosine similarity and
/// temperature tau, evaluated entirely in the log domain so temperatures as
/// small as 1e-5 neither overflow nor flush the loss to zero. Gradients are
/// the analytic softmax-weight form.
ContrastiveLoss contrastive_loss(const Mat& anchors, const Mat& positives, const Mat& negatives,
                                 double tau, DenominatorMode mode = DenominatorMode::in_batch);

struct EpochStats {
    size_t epoch = 0;
    int level = -1;  // -1 when the schedule has no single active level
    double mean_loss = 0.0;
};

/// Stage-1 training: per epoch, triples from the curriculum stream, batched
/// Adam updates on the pre-encoder parameters only. Deterministic given the
/// config seed.
std::vector<EpochStats> pretrain(PreEncoderModel& model, const Corpus& corpus,
                                 const CurriculumIndex& index, const ContrastiveConfig& config);

}  // namespace cscl
