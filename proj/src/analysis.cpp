#include "cscl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include "cscl/curriculum.hpp"
#include "cscl/pairing.hpp"

namespace cscl {

namespace {

std::vector<double> row_norms(const Mat& m) {
    std::vector<double> norms(m.rows);
    for (size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (double v : m.row(i)) s += v * v;
        norms[i] = std::sqrt(s);
        require(norms[i] > 1e-12, "zero-norm embedding at row " + std::to_string(i));
    }
    return norms;
}

/// Dense pairwise cosine; n is desk-scale so quadratic cost is fine.
Mat cosine_matrix(const Mat& m) {
    auto norms = row_norms(m);
    Mat cos(m.rows, m.rows, 1.0);
    for (size_t i = 0; i < m.rows; ++i) {
        for (size_t j = i + 1; j < m.rows; ++j) {
            double dot = 0.0;
            auto ri = m.row(i), rj = m.row(j);
            for (size_t k = 0; k < m.cols; ++k) dot += ri[k] * rj[k];
            double c = dot / (norms[i] * norms[j]);
            cos.at(i, j) = c;
            cos.at(j, i) = c;
        }
    }
    return cos;
}

std::vector<double> silhouette_from_cosine(const Mat& cos, const std::vector<int>& labels) {
    size_t n = cos.rows;
    std::map<int, size_t> counts;
    for (int l : labels) ++counts[l];

    std::vector<double> s(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        int own = labels[i];
        if (counts.at(own) < 2) continue;  // singleton cluster scores 0
        std::map<int, double> dist_sum;
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            dist_sum[labels[j]] += 1.0 - cos.at(i, j);
        }
        double a = dist_sum[own] / static_cast<double>(counts.at(own) - 1);
        double b = 0.0;
        bool first = true;
        for (const auto& [label, sum] : dist_sum) {
            if (label == own) continue;
            double mean = sum / static_cast<double>(counts.at(label));
            if (first || mean < b) b = mean;
            first = false;
        }
        if (first) continue;  // single label overall
        double denom = std::max(a, b);
        s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return s;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// At least two labels must have at least two members for a(i) and b(i) to
/// both be defined on some point.
void require_clusterable(const std::vector<int>& labels, const std::string& what) {
    std::map<int, size_t> counts;
    for (int l : labels) ++counts[l];
    size_t populated = 0;
    for (const auto& [label, c] : counts)
        if (c >= 2) ++populated;
    require(populated >= 2,
            what + " need at least two labels with at least two members (got " +
                std::to_string(populated) + ")");
}

std::vector<int> subject_label_ids(const std::vector<std::string>& subjects) {
    std::map<std::string, int> ids;
    for (const auto& s : subjects) ids.emplace(s, static_cast<int>(ids.size()));
    std::vector<int> out(subjects.size());
    for (size_t i = 0; i < subjects.size(); ++i) out[i] = ids.at(subjects[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Symmetric eigen-decomposition via cyclic Jacobi rotations. d stays small
// (feature/model width), so cubic sweeps are cheap and dependency-free.
// ---------------------------------------------------------------------------

void jacobi_eigen(Mat a, std::vector<double>& values, Mat& vectors) {
    size_t n = a.rows;
    vectors = Mat::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (size_t p = 0; p < n; ++p) {
            diag += a.at(p, p) * a.at(p, p);
            for (size_t q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        }
        if (std::sqrt(off) < 1e-14 * std::max(1e-30, std::sqrt(diag))) break;
        for (size_t p = 0; p < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                double apq = a.at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (size_t k = 0; k < n; ++k) {
                    double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (size_t k = 0; k < n; ++k) {
                    double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (size_t k = 0; k < n; ++k) {
                    double vkp = vectors.at(k, p), vkq = vectors.at(k, q);
                    vectors.at(k, p) = c * vkp - s * vkq;
                    vectors.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    values.resize(n);
    for (size_t i = 0; i < n; ++i) values[i] = a.at(i, i);
}

std::vector<uint32_t> sentence_labels_of(const Corpus& corpus) {
    std::vector<uint32_t> labels(corpus.trials.size());
    for (size_t i = 0; i < corpus.trials.size(); ++i) labels[i] = corpus.trials[i].sentence_id;
    return labels;
}

std::vector<std::string> subject_labels_of(const Corpus& corpus) {
    std::vector<std::string> labels(corpus.trials.size());
    for (size_t i = 0; i < corpus.trials.size(); ++i) labels[i] = corpus.trials[i].subject;
    return labels;
}

ClusterReport report_of(const PreEncoderModel& pre, const Corpus& corpus) {
    return cluster_report(encode_corpus(pre, corpus), sentence_labels_of(corpus),
                          subject_labels_of(corpus));
}

// ---------------------------------------------------------------------------
// Experiment pipeline. Seeds derive from config.seed at fixed offsets so the
// two arms of a paired run differ only in the pre-encoder initialization.
// ---------------------------------------------------------------------------

struct SplitSet {
    Corpus train, valid, test;
};

SplitSet raw_corpora(const ExperimentConfig& config) {
    Corpus full = generate(config.synth);
    auto [train, valid, test] = split(full, config.fractions, config.synth.seed);
    return {std::move(train), std::move(valid), std::move(test)};
}

/// Standardizes with statistics of the (possibly subsampled) training split.
SplitSet standardize(const Corpus& train, const Corpus& valid, const Corpus& test) {
    Corpus ztrain = zscore(train);
    Corpus zvalid = apply_zscore(valid, *ztrain.zscore_stats);
    Corpus ztest = apply_zscore(test, *ztrain.zscore_stats);
    return {std::move(ztrain), std::move(zvalid), std::move(ztest)};
}

struct PretrainedPair {
    PreEncoderModel untrained;
    PreEncoderModel trained;
    std::vector<EpochStats> history;
};

PretrainedPair pretrain_pair(const ExperimentConfig& config, const Corpus& train,
                             const ContrastiveConfig& contrastive) {
    Rng init_rng(config.seed);
    PretrainedPair out{PreEncoderModel::init(config.pre, init_rng), {}, {}};
    CorpusIndex index = build_index(train);
    PairingReport pairing = build_all_candidates(train, index, NegativeRule::both_conditions);
    CurriculumIndex curriculum = build_curriculum(train, pairing, contrastive.schedule.n_levels);
    out.trained = out.untrained;
    out.history = pretrain(out.trained, train, curriculum, contrastive);
    return out;
}

ContrastiveConfig arm_contrastive(const ExperimentConfig& config) {
    ContrastiveConfig cc = config.contrastive;
    cc.seed = config.seed + 1;
    return cc;
}

ScoreReport finetune_and_score(const ExperimentConfig& config, const PreEncoderModel& pre,
                               const SplitSet& data) {
    Seq2SeqConfig sc = config.seq2seq;
    sc.d_model = config.pre.d_model;
    sc.seed = config.seed + 2;
    Vocab vocab = build_vocab(data.train, data.valid);
    sc.vocab = vocab.tokens;
    Rng stack_rng(config.seed + 3);
    Seq2SeqModel model = Seq2SeqModel::init(sc, pre, stack_rng);
    finetune(model, data.train, data.valid, config.finetune_epochs, config.finetune_batch);
    return corpus_scores(generation_pairs(model, data.test));
}

PairedOutcome paired_on(const ExperimentConfig& config, const Corpus& raw_train,
                        const Corpus& raw_valid, const Corpus& raw_test) {
    SplitSet data = standardize(raw_train, raw_valid, raw_test);
    PretrainedPair pre = pretrain_pair(config, data.train, arm_contrastive(config));

    PairedOutcome out;
    out.train_trials = data.train.trials.size();
    out.cluster_before = report_of(pre.untrained, data.test);
    out.cluster_after = report_of(pre.trained, data.test);
    out.with_cscl = finetune_and_score(config, pre.trained, data);
    out.without_cscl = finetune_and_score(config, pre.untrained, data);
    return out;
}

Corpus filter_trials(const Corpus& corpus, const std::function<bool(const Trial&)>& keep) {
    Corpus out = corpus;
    out.trials.clear();
    for (const Trial& t : corpus.trials)
        if (keep(t)) out.trials.push_back(t);
    return out;
}

std::set<std::string> subjects_of(const Corpus& corpus) {
    std::set<std::string> subjects;
    for (const Trial& t : corpus.trials) subjects.insert(t.subject);
    return subjects;
}

}  // namespace

Mat encode_corpus(const PreEncoderModel& model, const Corpus& corpus) {
    require(!corpus.trials.empty(), "encode_corpus needs a non-empty corpus");
    Mat out(corpus.trials.size(), model.config.d_model);
    for (size_t i = 0; i < corpus.trials.size(); ++i) {
        EncodeResult enc = encode(model, corpus.trials[i].features);
        std::copy(enc.pooled.begin(), enc.pooled.end(), out.row(i).begin());
    }
    return out;
}

Mat raw_embeddings(const Corpus& corpus) {
    require(!corpus.trials.empty(), "raw_embeddings needs a non-empty corpus");
    Mat out(corpus.trials.size(), corpus.feature_dim);
    for (size_t i = 0; i < corpus.trials.size(); ++i) {
        auto emb = sentence_embedding(corpus.trials[i]);
        std::copy(emb.begin(), emb.end(), out.row(i).begin());
    }
    return out;
}

std::vector<double> silhouette_samples(const Mat& embeddings, const std::vector<int>& labels) {
    require(embeddings.rows == labels.size(), "silhouette needs one label per embedding row");
    require(embeddings.rows >= 2, "silhouette needs at least two points");
    return silhouette_from_cosine(cosine_matrix(embeddings), labels);
}

ClusterReport cluster_report(const Mat& embeddings, const std::vector<uint32_t>& sentence_labels,
                             const std::vector<std::string>& subject_labels) {
    require(embeddings.rows == sentence_labels.size() && embeddings.rows == subject_labels.size(),
            "cluster_report needs one sentence and subject label per row");
    require(embeddings.rows >= 4, "cluster_report needs at least four points");

    std::vector<int> sent(sentence_labels.size());
    for (size_t i = 0; i < sentence_labels.size(); ++i) sent[i] = static_cast<int>(sentence_labels[i]);
    std::vector<int> subj = subject_label_ids(subject_labels);
    require_clusterable(sent, "sentence labels");
    require_clusterable(subj, "subject labels");

    Mat cos = cosine_matrix(embeddings);
    ClusterReport report;
    report.silhouette_by_sentence = mean_of(silhouette_from_cosine(cos, sent));
    report.silhouette_by_subject = mean_of(silhouette_from_cosine(cos, subj));

    double intra = 0.0, inter = 0.0;
    size_t n_intra = 0, n_inter = 0;
    for (size_t i = 0; i < cos.rows; ++i) {
        for (size_t j = i + 1; j < cos.rows; ++j) {
            if (sent[i] == sent[j]) {
                intra += cos.at(i, j);
                ++n_intra;
            } else {
                inter += cos.at(i, j);
                ++n_inter;
            }
        }
    }
    report.intra_over_inter = (intra / static_cast<double>(n_intra)) /
                              (inter / static_cast<double>(n_inter));
    return report;
}

size_t component_count(const Mat& embeddings, double min_cosine) {
    require(embeddings.rows >= 1, "component_count needs at least one point");
    Mat cos = cosine_matrix(embeddings);
    std::vector<size_t> parent(cos.rows);
    std::iota(parent.begin(), parent.end(), size_t{0});
    std::function<size_t(size_t)> find = [&](size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (size_t i = 0; i < cos.rows; ++i)
        for (size_t j = i + 1; j < cos.rows; ++j)
            if (cos.at(i, j) >= min_cosine) parent[find(i)] = find(j);
    std::set<size_t> roots;
    for (size_t i = 0; i < cos.rows; ++i) roots.insert(find(i));
    return roots.size();
}

Projection project2d(const Mat& embeddings) {
    require(embeddings.rows >= 2, "project2d needs at least two points");
    require(embeddings.cols >= 2, "project2d needs at least two feature dimensions");
    size_t n = embeddings.rows, d = embeddings.cols;

    std::vector<double> mean(d, 0.0);
    for (size_t i = 0; i < n; ++i) {
        auto r = embeddings.row(i);
        for (size_t k = 0; k < d; ++k) mean[k] += r[k];
    }
    for (double& m : mean) m /= static_cast<double>(n);

    Mat centered(n, d);
    for (size_t i = 0; i < n; ++i)
        for (size_t k = 0; k < d; ++k) centered.at(i, k) = embeddings.at(i, k) - mean[k];

    Mat cov(d, d);
    for (size_t a = 0; a < d; ++a) {
        for (size_t b = a; b < d; ++b) {
            double s = 0.0;
            for (size_t i = 0; i < n; ++i) s += centered.at(i, a) * centered.at(i, b);
            s /= static_cast<double>(n);
            cov.at(a, b) = s;
            cov.at(b, a) = s;
        }
    }

    std::vector<double> values;
    Mat vectors;
    jacobi_eigen(cov, values, vectors);

    std::vector<size_t> order(d);
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return values[a] > values[b]; });

    double total = 0.0;
    for (double v : values) total += std::max(v, 0.0);

    Projection proj;
    proj.points = Mat(n, 2);
    for (size_t c = 0; c < 2; ++c) {
        size_t col = order[c];
        std::vector<double> axis(d);
        for (size_t k = 0; k < d; ++k) axis[k] = vectors.at(k, col);
        size_t peak = 0;
        for (size_t k = 1; k < d; ++k)
            if (std::abs(axis[k]) > std::abs(axis[peak])) peak = k;
        if (axis[peak] < 0.0)
            for (double& v : axis) v = -v;
        for (size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (size_t k = 0; k < d; ++k) s += centered.at(i, k) * axis[k];
            proj.points.at(i, c) = s;
        }
        proj.explained[c] = total > 0.0 ? std::max(values[col], 0.0) / total : 0.0;
    }
    return proj;
}

void ExperimentConfig::validate() const {
    synth.validate();
    pre.validate();
    contrastive.validate();
    require(pre.feature_dim == synth.feature_dim,
            "pre-encoder feature_dim must match the synthetic corpus");
    require(seq2seq.d_model == pre.d_model, "seq2seq d_model must match the pre-encoder");
    require(seq2seq.max_target_len >= synth.max_sentence_len + 1,
            "max_target_len too small for the longest sentence plus its end token");
    require(pre.max_seq_len >= synth.max_sentence_len,
            "pre-encoder max_seq_len shorter than the longest sentence");
    require(finetune_epochs >= 1 && finetune_batch >= 1,
            "finetune epochs and batch size must be >= 1");
}

PairedOutcome paired_run(const ExperimentConfig& config) {
    config.validate();
    SplitSet raw = raw_corpora(config);
    return paired_on(config, raw.train, raw.valid, raw.test);
}

RecalibrationOutcome recalibration(const ExperimentConfig& config) {
    config.validate();
    SplitSet raw = raw_corpora(config);
    SplitSet data = standardize(raw.train, raw.valid, raw.test);
    PretrainedPair pre = pretrain_pair(config, data.train, arm_contrastive(config));

    RecalibrationOutcome out;
    out.raw = cluster_report(raw_embeddings(data.test), sentence_labels_of(data.test),
                             subject_labels_of(data.test));
    out.before = report_of(pre.untrained, data.test);
    out.after = report_of(pre.trained, data.test);
    return out;
}

std::vector<LowResourcePoint> low_resource(const ExperimentConfig& config,
                                           const std::vector<double>& fractions) {
    config.validate();
    require(!fractions.empty(), "low_resource needs at least one fraction");
    for (double f : fractions) require(f > 0.0 && f <= 1.0, "fractions must lie in (0, 1]");
    SplitSet raw = raw_corpora(config);

    std::set<uint32_t> sentence_set;
    for (const Trial& t : raw.train.trials) sentence_set.insert(t.sentence_id);
    std::vector<uint32_t> sentences(sentence_set.begin(), sentence_set.end());
    Rng order_rng = Rng(config.seed).derive(777);
    order_rng.shuffle(sentences);

    std::vector<LowResourcePoint> out;
    for (double f : fractions) {
        size_t keep = static_cast<size_t>(
            std::ceil(f * static_cast<double>(sentences.size()) - 1e-12));
        keep = std::min(std::max<size_t>(keep, 1), sentences.size());
        std::set<uint32_t> kept(sentences.begin(), sentences.begin() + keep);
        Corpus sub = filter_trials(raw.train,
                                   [&](const Trial& t) { return kept.count(t.sentence_id) > 0; });
        LowResourcePoint point;
        point.fraction = f;
        point.outcome = paired_on(config, sub, raw.valid, raw.test);
        point.train_trials = point.outcome.train_trials;
        out.push_back(std::move(point));
    }
    return out;
}

ZeroShotOutcome zero_shot(const ExperimentConfig& config, const std::string& held_out_subject) {
    config.validate();
    Corpus full = generate(config.synth);
    size_t held_trials = 0;
    for (const Trial& t : full.trials)
        if (t.subject == held_out_subject) ++held_trials;
    require(held_trials > 0, "held-out subject has no trials: " + held_out_subject);

    auto [train, valid, test] = split(full, config.fractions, config.synth.seed);
    auto drop = [&](const Trial& t) { return t.subject != held_out_subject; };
    Corpus train_rest = filter_trials(train, drop);
    Corpus valid_rest = filter_trials(valid, drop);
    require(subjects_of(train_rest).size() >= 2,
            "zero_shot needs at least two remaining training subjects");

    SplitSet data = standardize(train_rest, valid_rest, full);
    PretrainedPair pre = pretrain_pair(config, data.train, arm_contrastive(config));

    const Corpus& pool = data.test;  // full corpus under train-only statistics
    std::vector<int> sent(pool.trials.size());
    for (size_t i = 0; i < pool.trials.size(); ++i)
        sent[i] = static_cast<int>(pool.trials[i].sentence_id);

    auto held_mean = [&](const PreEncoderModel& model) {
        auto s = silhouette_samples(encode_corpus(model, pool), sent);
        double sum = 0.0;
        size_t count = 0;
        for (size_t i = 0; i < pool.trials.size(); ++i) {
            if (pool.trials[i].subject != held_out_subject) continue;
            sum += s[i];
            ++count;
        }
        return sum / static_cast<double>(count);
    };

    ZeroShotOutcome out;
    out.subject = held_out_subject;
    out.held_out_trials = held_trials;
    out.silhouette_before = held_mean(pre.untrained);
    out.silhouette_after = held_mean(pre.trained);
    return out;
}

SubjectOutcome single_subject(const ExperimentConfig& config, const std::string& subject) {
    config.validate();
    SplitSet raw = raw_corpora(config);
    auto keep = [&](const Trial& t) { return t.subject == subject; };
    Corpus train_s = filter_trials(raw.train, keep);
    Corpus valid_s = filter_trials(raw.valid, keep);
    Corpus test_s = filter_trials(raw.test, keep);
    require(!train_s.trials.empty(), "subject has no training trials: " + subject);
    require(!test_s.trials.empty(), "subject has no test trials: " + subject);

    // Standardize and pretrain on the full multi-subject split, then narrow
    // the fine-tuning data to the one subject.
    SplitSet data = standardize(raw.train, raw.valid, raw.test);
    PretrainedPair pre = pretrain_pair(config, data.train, arm_contrastive(config));
    const ZscoreStats& stats = *data.train.zscore_stats;
    SplitSet narrowed{apply_zscore(train_s, stats), apply_zscore(valid_s, stats),
                      apply_zscore(test_s, stats)};

    SubjectOutcome out;
    out.subject = subject;
    out.test_trials = test_s.trials.size();
    out.with_cscl = finetune_and_score(config, pre.trained, narrowed);
    out.without_cscl = finetune_and_score(config, pre.untrained, narrowed);
    return out;
}

std::vector<CurriculumArm> single_curriculum(const ExperimentConfig& config) {
    config.validate();
    SplitSet raw = raw_corpora(config);
    SplitSet data = standardize(raw.train, raw.valid, raw.test);

    struct ArmSpec {
        std::string name;
        ScheduleMode mode;
        size_t level;
    };
    std::vector<ArmSpec> specs{{"easy", ScheduleMode::fixed_level, 0},
                               {"medium", ScheduleMode::fixed_level, 1},
                               {"hard", ScheduleMode::fixed_level, 2},
                               {"mixed_thirds", ScheduleMode::mixed_thirds, 0}};

    std::vector<CurriculumArm> out;
    for (const ArmSpec& spec : specs) {
        ContrastiveConfig cc = arm_contrastive(config);
        cc.schedule.mode = spec.mode;
        cc.schedule.fixed_level = spec.level;
        PretrainedPair pre = pretrain_pair(config, data.train, cc);
        CurriculumArm arm;
        arm.name = spec.name;
        arm.final_pretrain_loss = pre.history.back().mean_loss;
        arm.scores = finetune_and_score(config, pre.trained, data);
        out.push_back(std::move(arm));
    }
    return out;
}

std::vector<ScorePair> generation_pairs(const Seq2SeqModel& model, const Corpus& corpus) {
    std::vector<ScorePair> pairs;
    pairs.reserve(corpus.trials.size());
    for (const Trial& t : corpus.trials)
        pairs.emplace_back(t.tokens, generate(model, t.features));
    return pairs;
}

}  // namespace cscl
