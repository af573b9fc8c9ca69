#include "cscl/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cscl/common.hpp"
#include "cscl/optim.hpp"
#include "cscl/tape.hpp"

namespace cscl {

namespace {

// Row norms with the zero-norm guard demanded by the cosine similarity.
std::vector<double> row_norms(const Mat& m, const char* label) {
    std::vector<double> norms(m.rows);
    for (size_t i = 0; i < m.rows; ++i) {
        double s = 0;
        for (size_t j = 0; j < m.cols; ++j) s += m.at(i, j) * m.at(i, j);
        norms[i] = std::sqrt(s);
        require(norms[i] > 0.0,
                std::string("zero-norm embedding at batch row ") + std::to_string(i) + " (" + label + ")");
    }
    return norms;
}

double rows_cosine(const Mat& a, size_t i, const Mat& b, size_t j, double na, double nb) {
    double dot = 0;
    for (size_t k = 0; k < a.cols; ++k) dot += a.at(i, k) * b.at(j, k);
    return dot / (na * nb);
}

// d cos(a,b) / da accumulated into ga with weight w.
void add_cosine_grad(Mat& ga, size_t gi, const Mat& a, size_t i, const Mat& b, size_t j,
                     double na, double nb, double sim, double w) {
    for (size_t k = 0; k < a.cols; ++k)
        ga.at(gi, k) += w * (b.at(j, k) / (na * nb) - sim * a.at(i, k) / (na * na));
}

}  // namespace

void ContrastiveConfig::validate() const {
    require(tau > 0.0, "tau must be positive");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(epochs >= 1, "epochs must be >= 1");
    require(lr > 0.0, "lr must be positive");
    ScheduleConfig s = schedule;
    s.total_epochs = epochs;
    s.validate();
}

ContrastiveLoss contrastive_loss(const Mat& anchors, const Mat& positives, const Mat& negatives,
                                 double tau, DenominatorMode mode) {
    const size_t n = anchors.rows;
    const size_t d = anchors.cols;
    require(tau > 0.0, "tau must be positive");
    require(n >= 1, "empty batch");
    require(positives.rows == n && negatives.rows == n && positives.cols == d && negatives.cols == d,
            "batch shape mismatch");

    auto na = row_norms(anchors, "anchor");
    auto np = row_norms(positives, "positive");
    auto nn = row_norms(negatives, "negative");

    // Pairwise cosine similarities (diagonal only in per_example mode).
    Mat sp(n, n), sn(n, n);
    for (size_t i = 0; i < n; ++i) {
        if (mode == DenominatorMode::per_example) {
            sp.at(i, i) = rows_cosine(anchors, i, positives, i, na[i], np[i]);
            sn.at(i, i) = rows_cosine(anchors, i, negatives, i, na[i], nn[i]);
            continue;
        }
        for (size_t j = 0; j < n; ++j) {
            sp.at(i, j) = rows_cosine(anchors, i, positives, j, na[i], np[j]);
            sn.at(i, j) = rows_cosine(anchors, i, negatives, j, na[i], nn[j]);
        }
    }

    ContrastiveLoss out;
    out.d_anchor = Mat(n, d);
    out.d_positive = Mat(n, d);
    out.d_negative = Mat(n, d);

    double total = 0.0;
    const double inv_n_tau = 1.0 / (static_cast<double>(n) * tau);
    for (size_t i = 0; i < n; ++i) {
        // Row logits: positives first, then negatives; target is column i.
        std::vector<double> z;
        std::vector<std::pair<bool, size_t>> src;  // (is_positive, j)
        if (mode == DenominatorMode::per_example) {
            z = {sp.at(i, i) / tau, sn.at(i, i) / tau};
            src = {{true, i}, {false, i}};
        } else {
            z.reserve(2 * n);
            for (size_t j = 0; j < n; ++j) {
                z.push_back(sp.at(i, j) / tau);
                src.emplace_back(true, j);
            }
            for (size_t j = 0; j < n; ++j) {
                z.push_back(sn.at(i, j) / tau);
                src.emplace_back(false, j);
            }
        }
        const size_t target = mode == DenominatorMode::per_example ? 0 : i;

        double m = z[0];
        for (double v : z) m = std::max(m, v);
        double sum_exp = 0.0;      // sum over all logits of exp(z - m)
        double sum_others = 0.0;   // same sum excluding the target
        for (size_t k = 0; k < z.size(); ++k) {
            double e = std::exp(z[k] - m);
            sum_exp += e;
            if (k != target) sum_others += e;
        }
        double li;
        if (z[target] == m) {
            // log1p keeps losses near zero exactly representable.
            li = std::log1p(sum_others);
        } else {
            li = std::log(sum_exp) + m - z[target];
        }
        require(std::isfinite(li), "contrastive loss is non-finite for batch row " + std::to_string(i));
        total += li;

        const double lse = m + std::log(sum_exp);
        for (size_t k = 0; k < z.size(); ++k) {
            double w = std::exp(z[k] - lse) - (k == target ? 1.0 : 0.0);
            if (w == 0.0) continue;
            double g = w * inv_n_tau;
            auto [is_pos, j] = src[k];
            if (is_pos) {
                add_cosine_grad(out.d_anchor, i, anchors, i, positives, j, na[i], np[j], sp.at(i, j), g);
                add_cosine_grad(out.d_positive, j, positives, j, anchors, i, np[j], na[i], sp.at(i, j), g);
            } else {
                add_cosine_grad(out.d_anchor, i, anchors, i, negatives, j, na[i], nn[j], sn.at(i, j), g);
                add_cosine_grad(out.d_negative, j, negatives, j, anchors, i, nn[j], na[i], sn.at(i, j), g);
            }
        }
    }
    out.loss = total / static_cast<double>(n);
    return out;
}

std::vector<EpochStats> pretrain(PreEncoderModel& model, const Corpus& corpus,
                                 const CurriculumIndex& index, const ContrastiveConfig& config) {
    config.validate();
    model.config.validate();
    require(corpus.feature_dim == model.config.feature_dim, "corpus feature_dim does not match the model");

    ScheduleConfig schedule = config.schedule;
    schedule.total_epochs = config.epochs;

    Rng root(config.seed);
    AdamState adam(config.lr);
    adam.init_for(model.params);

    const size_t n = config.batch_size;
    const size_t d = model.config.d_model;
    std::vector<EpochStats> history;

    for (size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng epoch_rng = root.derive(epoch);
        auto triples = make_triples(corpus, index, schedule, epoch, epoch_rng);
        require(!triples.empty(), "no eligible anchors for contrastive training");
        epoch_rng.shuffle(triples);
        const size_t n_batches = triples.size() / n;
        require(n_batches >= 1, "not enough triples (" + std::to_string(triples.size()) +
                                    ") for one batch of " + std::to_string(n));

        double loss_sum = 0.0;
        for (size_t b = 0; b < n_batches; ++b) {
            Rng dropout_rng = root.derive(1000000 + epoch * 4096 + b);
            Tape tape;
            auto param_nodes = register_params(tape, model.params);

            Mat h(n, d), hp(n, d), hn(n, d);
            std::vector<NodeId> pooled;
            pooled.reserve(3 * n);
            for (size_t k = 0; k < n; ++k) {
                const Triple& t = triples[b * n + k];
                const size_t ids[3] = {t.anchor, t.positive, t.negative};
                Mat* rows[3] = {&h, &hp, &hn};
                for (int s = 0; s < 3; ++s) {
                    const Trial& trial = corpus.trials[ids[s]];
                    std::vector<uint8_t> valid(trial.features.rows, 1);
                    EncodeNodes enc = encode_on_tape(tape, model, param_nodes, trial.features,
                                                     valid, &dropout_rng);
                    pooled.push_back(enc.pooled);
                    const Mat& pv = tape.value(enc.pooled);
                    for (size_t j = 0; j < d; ++j) rows[s]->at(k, j) = pv.at(0, j);
                }
            }

            ContrastiveLoss loss = contrastive_loss(h, hp, hn, config.tau, config.denominator);
            loss_sum += loss.loss;

            std::vector<Mat> parent_grads;
            parent_grads.reserve(3 * n);
            for (size_t k = 0; k < n; ++k) {
                const Mat* rows[3] = {&loss.d_anchor, &loss.d_positive, &loss.d_negative};
                for (int s = 0; s < 3; ++s) {
                    Mat g(1, d);
                    for (size_t j = 0; j < d; ++j) g.at(0, j) = rows[s]->at(k, j);
                    parent_grads.push_back(std::move(g));
                }
            }
            NodeId loss_node = tape.custom_scalar(loss.loss, pooled, parent_grads);
            tape.backward(loss_node);

            std::vector<Mat> grads;
            grads.reserve(param_nodes.size());
            for (size_t i = 0; i < param_nodes.size(); ++i) {
                const Mat& g = tape.grad(param_nodes[i]);
                if (g.rows == 0) {
                    const Mat& p = model.params.items[i].second;
                    grads.emplace_back(p.rows, p.cols);
                } else {
                    grads.push_back(g);
                }
            }
            adam_step(model.params, grads, adam);
            for (auto& [name, p] : model.params.items) p.quantize_f32();
        }

        int level = -1;
        if (schedule.mode == ScheduleMode::curriculum)
            level = static_cast<int>(epoch_level(epoch, schedule.total_epochs, schedule.n_levels));
        else if (schedule.mode == ScheduleMode::fixed_level)
            level = static_cast<int>(schedule.fixed_level);
        history.push_back({epoch, level, loss_sum / static_cast<double>(n_batches)});
        log_info("pretrain epoch " + std::to_string(epoch) + " level " + std::to_string(level) +
                 " mean loss " + std::to_string(history.back().mean_loss));
    }
    return history;
}

}  // namespace cscl
