#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cscl/common.hpp"
#include "cscl/contrastive.hpp"
#include "cscl/corpus.hpp"
#include "cscl/curriculum.hpp"
#include "cscl/encoder.hpp"
#include "cscl/pairing.hpp"
#include "cscl/rng.hpp"
#include "cscl/synthgen.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace cscl;

namespace {

Mat rows_of(std::initializer_list<std::vector<double>> rows) {
    size_t r = rows.size();
    size_t c = rows.begin()->size();
    Mat m(r, c);
    size_t i = 0;
    for (const auto& row : rows) {
        for (size_t j = 0; j < c; ++j) m.at(i, j) = row[j];
        ++i;
    }
    return m;
}

Mat randn(size_t r, size_t c, Rng& rng) {
    Mat m(r, c);
    for (auto& v : m.data) v = rng.normal();
    return m;
}

/// Straight-line long-double reimplementation of the loss and its gradients,
/// kept deliberately different from the production code path.
struct OracleOut {
    double loss;
    Mat da, dp, dn;
};

OracleOut oracle_loss(const Mat& a, const Mat& p, const Mat& n, double tau, DenominatorMode mode) {
    const size_t N = a.rows, d = a.cols;
    auto dot = [&](const Mat& x, size_t i, const Mat& y, size_t j) {
        long double s = 0;
        for (size_t k = 0; k < d; ++k) s += (long double)x.at(i, k) * y.at(j, k);
        return s;
    };
    auto nrm = [&](const Mat& x, size_t i) { return sqrtl(dot(x, i, x, i)); };

    OracleOut out{0.0, Mat(N, d), Mat(N, d), Mat(N, d)};
    long double total = 0;
    for (size_t i = 0; i < N; ++i) {
        std::vector<size_t> cols;
        if (mode == DenominatorMode::in_batch) {
            for (size_t j = 0; j < 2 * N; ++j) cols.push_back(j);
        } else {
            cols = {i, N + i};
        }
        size_t target = (mode == DenominatorMode::in_batch) ? i : 0;

        std::vector<long double> z(cols.size());
        for (size_t c = 0; c < cols.size(); ++c) {
            size_t j = cols[c];
            const Mat& other = j < N ? p : n;
            size_t row = j < N ? j : j - N;
            z[c] = dot(a, i, other, row) / (nrm(a, i) * nrm(other, row)) / (long double)tau;
        }
        long double m = z[0];
        for (long double v : z) m = std::max(m, v);
        long double sum = 0;
        for (long double v : z) sum += expl(v - m);
        long double lse = m + logl(sum);
        total += lse - z[target];

        for (size_t c = 0; c < cols.size(); ++c) {
            size_t j = cols[c];
            long double w = expl(z[c] - lse) - (c == target ? 1.0L : 0.0L);
            long double coef = w / ((long double)N * tau);
            const Mat& other = j < N ? p : n;
            Mat& dother = j < N ? out.dp : out.dn;
            size_t row = j < N ? j : j - N;
            long double na = nrm(a, i), nb = nrm(other, row);
            long double s = dot(a, i, other, row) / (na * nb);
            for (size_t k = 0; k < d; ++k) {
                long double ga = other.at(row, k) / (na * nb) - s * a.at(i, k) / (na * na);
                long double gb = a.at(i, k) / (na * nb) - s * other.at(row, k) / (nb * nb);
                out.da.at(i, k) += (double)(coef * ga);
                dother.at(row, k) += (double)(coef * gb);
            }
        }
    }
    out.loss = (double)(total / (long double)N);
    return out;
}

double max_grad_rel_err(const ContrastiveLoss& got, const OracleOut& want) {
    double worst = 0;
    auto scan = [&](const Mat& g, const Mat& w) {
        for (size_t k = 0; k < g.size(); ++k)
            worst = std::max(worst, gradcheck::relative_error(g.data[k], w.data[k]));
    };
    scan(got.d_anchor, want.da);
    scan(got.d_positive, want.dp);
    scan(got.d_negative, want.dn);
    return worst;
}

/// Central finite differences straight through the public loss function.
double fd_max_rel_err(const Mat& a, const Mat& p, const Mat& n, double tau, DenominatorMode mode,
                      double h) {
    ContrastiveLoss base = contrastive_loss(a, p, n, tau, mode);
    double worst = 0;
    auto probe = [&](const Mat& which, int slot) {
        for (size_t k = 0; k < which.size(); ++k) {
            Mat a2 = a, p2 = p, n2 = n;
            Mat& target = slot == 0 ? a2 : (slot == 1 ? p2 : n2);
            target.data[k] += h;
            double up = contrastive_loss(a2, p2, n2, tau, mode).loss;
            target.data[k] -= 2 * h;
            double dn_ = contrastive_loss(a2, p2, n2, tau, mode).loss;
            double numeric = (up - dn_) / (2 * h);
            const Mat& grad = slot == 0 ? base.d_anchor : (slot == 1 ? base.d_positive : base.d_negative);
            worst = std::max(worst, gradcheck::relative_error(grad.data[k], numeric));
        }
    };
    probe(a, 0);
    probe(p, 1);
    probe(n, 2);
    return worst;
}

template <typename Fn>
bool throws_containing(Fn fn, const std::string& needle) {
    try {
        fn();
    } catch (const Error& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
}

/// Standardization-free synthetic corpus whose positives are exact copies of
/// the anchor signal: no reader effect, no noise.
Corpus easy_corpus() {
    SynthConfig cfg;
    cfg.n_subjects = 6;
    cfg.n_sentences = 12;
    cfg.vocab_size = 30;
    cfg.min_sentence_len = 3;
    cfg.max_sentence_len = 5;
    cfg.feature_dim = 8;
    cfg.readings_per_sentence = 3;
    cfg.subject_gain = 0.0;
    cfg.semantic_gain = 1.0;
    cfg.noise_std = 0.0;
    cfg.seed = 11;
    return generate(cfg);
}

PreEncoderConfig small_encoder_config() {
    PreEncoderConfig e;
    e.feature_dim = 8;
    e.n_layers = 1;
    e.n_heads = 2;
    e.d_model = 16;
    e.d_ffn = 32;
    e.max_seq_len = 8;
    e.dropout = 0.1;
    return e;
}

/// Mean loss over a fixed probe batch: each usable anchor with its most
/// similar positive and least similar negative.
double probe_loss(const PreEncoderModel& model, const Corpus& corpus,
                  const CurriculumIndex& index, double tau, size_t max_anchors) {
    std::vector<std::vector<double>> ha, hp, hn;
    for (const auto& ac : index.anchors) {
        if (ac.positives_sorted.empty() || ac.negatives_sorted.empty()) continue;
        ha.push_back(encode(model, corpus.trials[ac.anchor].features).pooled);
        hp.push_back(encode(model, corpus.trials[ac.positives_sorted.front()].features).pooled);
        hn.push_back(encode(model, corpus.trials[ac.negatives_sorted.front()].features).pooled);
        if (ha.size() == max_anchors) break;
    }
    size_t N = ha.size(), d = ha[0].size();
    Mat A(N, d), P(N, d), G(N, d);
    for (size_t i = 0; i < N; ++i)
        for (size_t j = 0; j < d; ++j) {
            A.at(i, j) = ha[i][j];
            P.at(i, j) = hp[i][j];
            G.at(i, j) = hn[i][j];
        }
    return contrastive_loss(A, P, G, tau).loss;
}

bool params_identical(const ParamSet& a, const ParamSet& b) {
    if (a.items.size() != b.items.size()) return false;
    for (size_t i = 0; i < a.items.size(); ++i) {
        if (a.items[i].first != b.items[i].first) return false;
        if (a.items[i].second.data != b.items[i].second.data) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("single pair with tied similarities costs ln 2") {
    Mat a = rows_of({{1.0, 0.0, 0.0}});
    Mat p = rows_of({{0.0, 1.0, 0.0}});
    Mat n = rows_of({{0.0, 0.0, 1.0}});
    ContrastiveLoss out = contrastive_loss(a, p, n, 1.0);
    CHECK(std::abs(out.loss - std::log(2.0)) < 1e-15);
}

TEST_CASE("fully tied batch costs ln(2N)") {
    for (size_t N : {2u, 4u, 7u}) {
        Mat a(N, 3), p(N, 3), n(N, 3);
        for (size_t i = 0; i < N; ++i) {
            a.at(i, 0) = p.at(i, 0) = n.at(i, 0) = 0.5;
            a.at(i, 2) = p.at(i, 2) = n.at(i, 2) = -1.5;
        }
        ContrastiveLoss out = contrastive_loss(a, p, n, 0.25);
        CHECK(std::abs(out.loss - std::log(2.0 * N)) < 1e-12);
        ContrastiveLoss per = contrastive_loss(a, p, n, 0.25, DenominatorMode::per_example);
        CHECK(std::abs(per.loss - std::log(2.0)) < 1e-12);
    }
}

TEST_CASE("tiny temperature with a small margin stays positive and tiny") {
    double c = 0.999;
    Mat a = rows_of({{1.0, 0.0}});
    Mat p = rows_of({{1.0, 0.0}});
    Mat n = rows_of({{c, std::sqrt(1.0 - c * c)}});
    ContrastiveLoss out = contrastive_loss(a, p, n, 1e-5);
    CHECK(out.loss > 0.0);
    CHECK(out.loss < 1e-30);
    CHECK(std::isfinite(out.d_anchor.at(0, 0)));
}

TEST_CASE("analytic gradients match central differences") {
    Rng rng(21);
    Mat a = randn(3, 5, rng), p = randn(3, 5, rng), n = randn(3, 5, rng);
    CHECK(fd_max_rel_err(a, p, n, 1.0, DenominatorMode::in_batch, 1e-4) < 1e-4);
    CHECK(fd_max_rel_err(a, p, n, 1.0, DenominatorMode::per_example, 1e-4) < 1e-4);

    // Small temperatures are only finite-difference friendly when the
    // similarities are spread on the temperature's own scale; far-apart
    // similarities saturate the softmax and the truncation error explodes.
    // The saturated regime is covered by the long-double oracle instead.
    Mat base = randn(1, 5, rng);
    auto near_tied = [&](Mat& m) {
        for (size_t i = 0; i < m.rows; ++i)
            for (size_t j = 0; j < m.cols; ++j) m.at(i, j) = base.at(0, j) + 0.1 * rng.normal();
    };
    Mat a2(3, 5), p2(3, 5), n2(3, 5);
    near_tied(a2);
    near_tied(p2);
    near_tied(n2);
    CHECK(fd_max_rel_err(a2, p2, n2, 0.01, DenominatorMode::in_batch, 1e-4) < 1e-4);
    CHECK(fd_max_rel_err(a2, p2, n2, 0.01, DenominatorMode::per_example, 1e-4) < 1e-4);
}

TEST_CASE("gradients agree with an independent long-double oracle") {
    Rng rng(22);
    SUBCASE("moderate temperature, random batch") {
        Mat a = randn(4, 6, rng), p = randn(4, 6, rng), n = randn(4, 6, rng);
        for (double tau : {1.0, 0.05}) {
            for (auto mode : {DenominatorMode::in_batch, DenominatorMode::per_example}) {
                ContrastiveLoss got = contrastive_loss(a, p, n, tau, mode);
                OracleOut want = oracle_loss(a, p, n, tau, mode);
                CHECK(gradcheck::relative_error(got.loss, want.loss) < 1e-12);
                CHECK(max_grad_rel_err(got, want) < 1e-9);
            }
        }
    }
    SUBCASE("tiny temperature with near-tied similarities") {
        // Angles a few 1e-3 apart put similarity gaps at the 1e-5 scale, so
        // tau = 1e-5 yields balanced softmax weights instead of a hard max.
        auto unit = [](double t) { return std::vector<double>{std::cos(t), std::sin(t)}; };
        Mat a = rows_of({unit(0.000), unit(0.100)});
        Mat p = rows_of({unit(0.004), unit(0.104)});
        Mat n = rows_of({unit(0.005), unit(0.0995)});
        ContrastiveLoss got = contrastive_loss(a, p, n, 1e-5);
        OracleOut want = oracle_loss(a, p, n, 1e-5, DenominatorMode::in_batch);
        CHECK(std::isfinite(got.loss));
        CHECK(gradcheck::relative_error(got.loss, want.loss) < 1e-9);
        CHECK(max_grad_rel_err(got, want) < 1e-9);
    }
}

TEST_CASE("loss is invariant to positive rescaling of any embedding") {
    Rng rng(23);
    Mat a = randn(3, 4, rng), p = randn(3, 4, rng), n = randn(3, 4, rng);
    double base = contrastive_loss(a, p, n, 0.5).loss;
    Mat a2 = a, p2 = p, n2 = n;
    for (size_t j = 0; j < 4; ++j) {
        a2.at(1, j) *= 37.0;
        p2.at(0, j) *= 0.001;
        n2.at(2, j) *= 5.0;
    }
    double scaled = contrastive_loss(a2, p2, n2, 0.5).loss;
    CHECK(std::abs(base - scaled) < 1e-9);
}

TEST_CASE("anchor gradients are orthogonal to the anchor") {
    Rng rng(24);
    Mat a = randn(4, 6, rng), p = randn(4, 6, rng), n = randn(4, 6, rng);
    ContrastiveLoss out = contrastive_loss(a, p, n, 0.1);
    for (size_t i = 0; i < 4; ++i) {
        double dot = 0, ga = 0, na = 0;
        for (size_t j = 0; j < 6; ++j) {
            dot += out.d_anchor.at(i, j) * a.at(i, j);
            ga += out.d_anchor.at(i, j) * out.d_anchor.at(i, j);
            na += a.at(i, j) * a.at(i, j);
        }
        CHECK(std::abs(dot) <= 1e-10 * std::max(1.0, std::sqrt(ga * na)));
    }
}

TEST_CASE("adversarial batches at tiny temperature stay finite") {
    Rng rng(25);
    Mat a = randn(8, 6, rng), p = randn(8, 6, rng), n = randn(8, 6, rng);
    // Exact ties: one negative duplicates the anchor, one positive does too.
    for (size_t j = 0; j < 6; ++j) {
        n.at(0, j) = a.at(0, j);
        p.at(1, j) = a.at(1, j);
    }
    ContrastiveLoss out = contrastive_loss(a, p, n, 1e-5);
    CHECK(std::isfinite(out.loss));
    CHECK(out.loss >= 0.0);
    CHECK(out.d_anchor.all_finite());
    CHECK(out.d_positive.all_finite());
    CHECK(out.d_negative.all_finite());
}

TEST_CASE("zero-norm embeddings are rejected with the row named") {
    Mat a = rows_of({{1.0, 0.0}, {0.0, 0.0}});
    Mat p = rows_of({{1.0, 0.0}, {1.0, 0.0}});
    Mat n = rows_of({{0.0, 1.0}, {0.0, 1.0}});
    CHECK(throws_containing([&] { contrastive_loss(a, p, n, 1.0); }, "zero-norm"));
    CHECK(throws_containing([&] { contrastive_loss(a, p, n, 1.0); }, "1"));
}

TEST_CASE("shape and config validation") {
    Mat a(2, 3), p(2, 3), n(3, 3);
    for (auto* m : {&a, &p, &n})
        for (auto& v : m->data) v = 1.0;
    CHECK_THROWS_AS(contrastive_loss(a, p, n, 1.0), Error);
    ContrastiveConfig cfg;
    cfg.tau = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = ContrastiveConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("pretraining on separable data lowers the probe loss") {
    Corpus corpus = easy_corpus();
    PairingReport pairing = build_all_candidates(corpus, build_index(corpus), NegativeRule::both_conditions);
    CurriculumIndex index = build_curriculum(corpus, pairing);

    Rng init_rng(42);
    PreEncoderModel model = PreEncoderModel::init(small_encoder_config(), init_rng);

    ContrastiveConfig cfg;
    cfg.tau = 1.0;
    cfg.batch_size = 8;
    cfg.epochs = 9;
    cfg.lr = 2e-3;
    cfg.seed = 7;

    double before = probe_loss(model, corpus, index, cfg.tau, 16);
    std::vector<EpochStats> history = pretrain(model, corpus, index, cfg);
    double after = probe_loss(model, corpus, index, cfg.tau, 16);

    CHECK(after < before);
    REQUIRE(history.size() == 9);
    for (size_t e = 0; e < 9; ++e) {
        CHECK(history[e].epoch == e + 1);
        CHECK(history[e].level == (int)(e / 3));
        CHECK(std::isfinite(history[e].mean_loss));
    }

    // Every parameter stays exactly representable in 32 bits.
    for (const auto& [name, m] : model.params.items) {
        Mat q = m;
        q.quantize_f32();
        CHECK(q.data == m.data);
    }
}

TEST_CASE("pretraining is deterministic in the seed") {
    Corpus corpus = easy_corpus();
    PairingReport pairing = build_all_candidates(corpus, build_index(corpus), NegativeRule::both_conditions);
    CurriculumIndex index = build_curriculum(corpus, pairing);

    ContrastiveConfig cfg;
    cfg.tau = 0.5;
    cfg.batch_size = 8;
    cfg.epochs = 3;
    cfg.seed = 3;

    auto run = [&]() {
        Rng init_rng(42);
        PreEncoderModel model = PreEncoderModel::init(small_encoder_config(), init_rng);
        std::vector<EpochStats> h = pretrain(model, corpus, index, cfg);
        return std::make_pair(model, h);
    };
    auto [m1, h1] = run();
    auto [m2, h2] = run();
    CHECK(params_identical(m1.params, m2.params));
    REQUIRE(h1.size() == h2.size());
    for (size_t i = 0; i < h1.size(); ++i) CHECK(h1[i].mean_loss == h2[i].mean_loss);
}

TEST_CASE("schedule modes label epochs as promised") {
    Corpus corpus = easy_corpus();
    PairingReport pairing = build_all_candidates(corpus, build_index(corpus), NegativeRule::both_conditions);
    CurriculumIndex index = build_curriculum(corpus, pairing);

    ContrastiveConfig cfg;
    cfg.tau = 1.0;
    cfg.batch_size = 8;
    cfg.epochs = 2;
    cfg.seed = 5;
    cfg.schedule.mode = ScheduleMode::fixed_level;
    cfg.schedule.fixed_level = 1;

    Rng init_rng(1);
    PreEncoderModel model = PreEncoderModel::init(small_encoder_config(), init_rng);
    auto history = pretrain(model, corpus, index, cfg);
    for (const auto& h : history) CHECK(h.level == 1);

    cfg.schedule.mode = ScheduleMode::random;
    Rng init_rng2(1);
    PreEncoderModel model2 = PreEncoderModel::init(small_encoder_config(), init_rng2);
    auto history2 = pretrain(model2, corpus, index, cfg);
    for (const auto& h : history2) CHECK(h.level == -1);
}

TEST_CASE("too few triples for one batch is an error") {
    Corpus corpus = easy_corpus();
    PairingReport pairing = build_all_candidates(corpus, build_index(corpus), NegativeRule::both_conditions);
    CurriculumIndex index = build_curriculum(corpus, pairing);

    ContrastiveConfig cfg;
    cfg.batch_size = 4096;
    cfg.epochs = 1;
    cfg.schedule.mode = ScheduleMode::random;

    Rng init_rng(1);
    PreEncoderModel model = PreEncoderModel::init(small_encoder_config(), init_rng);
    CHECK(throws_containing([&] { pretrain(model, corpus, index, cfg); }, "not enough triples"));
}
