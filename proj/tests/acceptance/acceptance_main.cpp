// Acceptance gates for the pipeline. Each criterion prints one PASS/FAIL
// line; the process exits nonzero if any gate fails. Thresholds are pinned
// here, not configurable.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cscl/analysis.hpp"
#include "cscl/cli.hpp"
#include "cscl/common.hpp"
#include "cscl/contrastive.hpp"
#include "cscl/corpus.hpp"
#include "cscl/curriculum.hpp"
#include "cscl/encoder.hpp"
#include "cscl/metrics.hpp"
#include "cscl/pairing.hpp"
#include "cscl/seq2seq.hpp"
#include "cscl/synthgen.hpp"

#include "gradcheck.hpp"
#include "naive_metrics.hpp"

#include "json.hpp"

using namespace cscl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Gate {
    bool ok = true;
    std::string detail;

    void expect(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

Mat randn(size_t r, size_t c, Rng& rng) {
    Mat m(r, c);
    for (auto& v : m.data) v = rng.normal();
    m.quantize_f32();
    return m;
}

// ---------------------------------------------------------------------------
// 1. Gradient fidelity
// ---------------------------------------------------------------------------

/// Central differences restricted to a subset of the parameter list, against
/// the analytic gradients of the full graph.
double subset_max_rel_error(const std::vector<Mat>& params, const gradcheck::GraphFn& fn,
                            const std::vector<size_t>& subset, double step = 1e-4) {
    Tape tape;
    std::vector<NodeId> ids;
    ids.reserve(params.size());
    for (const auto& p : params) ids.push_back(tape.param(p));
    NodeId loss = fn(tape, ids);
    tape.backward(loss);

    double worst = 0.0;
    std::vector<Mat> work = params;
    for (size_t p : subset) {
        const Mat analytic = tape.grad(ids[p]);
        for (size_t k = 0; k < work[p].size(); ++k) {
            const double saved = work[p].data[k];
            work[p].data[k] = saved + step;
            const double up = gradcheck::eval_loss(work, fn);
            work[p].data[k] = saved - step;
            const double down = gradcheck::eval_loss(work, fn);
            work[p].data[k] = saved;
            const double numeric = (up - down) / (2.0 * step);
            worst = std::max(worst, gradcheck::relative_error(analytic.data[k], numeric));
        }
    }
    return worst;
}

double contrastive_fd_error(const Mat& a, const Mat& p, const Mat& n, double tau,
                            DenominatorMode mode, double h) {
    ContrastiveLoss base = contrastive_loss(a, p, n, tau, mode);
    double worst = 0.0;
    auto probe = [&](int slot) {
        const Mat& grad = slot == 0 ? base.d_anchor : (slot == 1 ? base.d_positive : base.d_negative);
        for (size_t k = 0; k < grad.size(); ++k) {
            Mat a2 = a, p2 = p, n2 = n;
            Mat& target = slot == 0 ? a2 : (slot == 1 ? p2 : n2);
            target.data[k] += h;
            double up = contrastive_loss(a2, p2, n2, tau, mode).loss;
            target.data[k] -= 2 * h;
            double down = contrastive_loss(a2, p2, n2, tau, mode).loss;
            double numeric = (up - down) / (2 * h);
            worst = std::max(worst, gradcheck::relative_error(grad.data[k], numeric));
        }
    };
    probe(0);
    probe(1);
    probe(2);
    return worst;
}

void check_gradient_fidelity(Gate& g) {
    // Per-block checks on the pre-encoder: perturbing only one block's
    // parameters exercises that block's backward path end to end. The
    // sequence includes a padded position so masked pooling is in play.
    PreEncoderConfig pc;
    pc.feature_dim = 3;
    pc.n_layers = 1;
    pc.n_heads = 2;
    pc.d_model = 8;
    pc.d_ffn = 8;
    pc.max_seq_len = 6;
    pc.dropout = 0.0;
    Rng rng(101);
    PreEncoderModel model = PreEncoderModel::init(pc, rng);
    Mat features = randn(4, 3, rng);
    std::vector<uint8_t> valid = {1, 1, 1, 0};
    Mat head = randn(1, pc.d_model, rng);

    std::vector<Mat> params;
    for (const auto& [name, m] : model.params.items) params.push_back(m);
    auto fn = [&](Tape& t, const std::vector<NodeId>& ids) {
        EncodeNodes enc = encode_on_tape(t, model, ids, features, valid, nullptr);
        return t.sum_all(t.hadamard(enc.pooled, t.constant(head)));
    };

    auto block = [&](const std::vector<std::string>& needles, const std::string& label) {
        std::vector<size_t> subset;
        for (size_t i = 0; i < model.params.items.size(); ++i)
            for (const auto& needle : needles)
                if (model.params.items[i].first.find(needle) != std::string::npos) {
                    subset.push_back(i);
                    break;
                }
        g.expect(!subset.empty(), label + " matched no parameters");
        g.expect(subset_max_rel_error(params, fn, subset) < 1e-4, label + " exceeds 1e-4");
    };
    block({"attn/"}, "attention block");
    block({"ffn/"}, "feed-forward block");
    block({"ln1/", "ln2/", "final_ln/"}, "layernorm blocks");
    block({"input_proj/"}, "projection-through-pooling");

    // Contrastive loss at a moderate and a small temperature. The small
    // temperature needs similarities spread on its own scale or the central
    // difference saturates.
    Rng crng(102);
    Mat a = randn(3, 5, crng), p = randn(3, 5, crng), n = randn(3, 5, crng);
    g.expect(contrastive_fd_error(a, p, n, 1.0, DenominatorMode::in_batch, 1e-4) < 1e-4,
             "contrastive tau=1.0 exceeds 1e-4");
    Mat base_row = randn(1, 5, crng);
    auto near_tied = [&](Mat& m) {
        for (size_t i = 0; i < m.rows; ++i)
            for (size_t j = 0; j < m.cols; ++j) m.at(i, j) = base_row.at(0, j) + 0.1 * crng.normal();
    };
    Mat a2(3, 5), p2(3, 5), n2(3, 5);
    near_tied(a2);
    near_tied(p2);
    near_tied(n2);
    g.expect(contrastive_fd_error(a2, p2, n2, 0.01, DenominatorMode::in_batch, 1e-4) < 1e-4,
             "contrastive tau=0.01 exceeds 1e-4");

    // Teacher-forced cross-entropy through the full translation stack.
    Seq2SeqConfig sc;
    sc.n_enc_layers = 1;
    sc.n_dec_layers = 1;
    sc.n_heads = 2;
    sc.d_model = 8;
    sc.d_ffn = 8;
    sc.max_target_len = 6;
    sc.dropout = 0.0;
    sc.seed = 1;
    sc.vocab = {kPadToken, kBosToken, kEosToken, "wa", "wb", "wc"};
    Rng srng(103);
    Seq2SeqModel s2s = Seq2SeqModel::init(sc, model, srng);
    Mat src = randn(2, 3, srng);
    std::vector<int> labels = target_ids(s2s.vocab, {"wa", "wb"}, sc.max_target_len);
    std::vector<int> input = {s2s.vocab.bos_id, labels[0], labels[1]};

    std::vector<Mat> all_params;
    for (const auto& [name, m] : s2s.pre.params.items) all_params.push_back(m);
    for (const auto& [name, m] : s2s.stack.items) all_params.push_back(m);
    const size_t n_pre = s2s.pre.params.items.size();
    auto ce_fn = [&](Tape& t, const std::vector<NodeId>& ids) {
        std::vector<NodeId> pre_nodes(ids.begin(), ids.begin() + static_cast<long>(n_pre));
        std::vector<NodeId> stack_nodes(ids.begin() + static_cast<long>(n_pre), ids.end());
        std::vector<uint8_t> src_valid(src.rows, 1);
        NodeId memory = encode_source_on_tape(t, s2s, pre_nodes, stack_nodes, src, src_valid, nullptr);
        NodeId logits = decoder_logits_on_tape(t, s2s, stack_nodes, memory, input, src_valid, nullptr);
        NodeId ce = sequence_ce_on_tape(t, logits, labels);
        return t.scale(ce, 1.0 / static_cast<double>(labels.size()));
    };
    g.expect(gradcheck::max_rel_error(all_params, ce_fn) < 1e-4,
             "sequence cross-entropy exceeds 1e-4");
}

// ---------------------------------------------------------------------------
// 2. Loss identities
// ---------------------------------------------------------------------------

void check_loss_identities(Gate& g) {
    Mat one(1, 4);
    one.at(0, 0) = 0.5;
    one.at(0, 1) = -0.5;
    one.at(0, 2) = 0.5;
    one.at(0, 3) = -0.5;
    ContrastiveLoss single = contrastive_loss(one, one, one, 1.0);
    g.expect(std::abs(single.loss - std::log(2.0)) < 1e-6, "N=1 equal-similarity loss is not ln 2");

    const size_t n = 8;
    Mat batch(n, 4);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < 4; ++j) batch.at(i, j) = one.at(0, j);
    ContrastiveLoss full = contrastive_loss(batch, batch, batch, 1.0);
    g.expect(std::abs(full.loss - std::log(2.0 * static_cast<double>(n))) < 1e-6,
             "equal-similarity batch loss is not ln 2N");

    Mat a(1, 2), p(1, 2), neg(1, 2);
    a.at(0, 0) = 1.0;
    a.at(0, 1) = 0.0;
    p = a;
    neg.at(0, 0) = 0.999;
    neg.at(0, 1) = std::sqrt(1.0 - 0.999 * 0.999);
    ContrastiveLoss sharp = contrastive_loss(a, p, neg, 1e-5);
    g.expect(std::isfinite(sharp.loss), "sharp loss is not finite");
    g.expect(sharp.loss < 1e-30, "0.001-margin loss at tau=1e-5 is not below 1e-30");
    g.expect(sharp.loss >= 0.0, "loss went negative");
    for (const Mat* m : {&sharp.d_anchor, &sharp.d_positive, &sharp.d_negative})
        for (double v : m->data)
            g.expect(std::isfinite(v), "sharp gradient has a non-finite entry");
}

// ---------------------------------------------------------------------------
// 3. Curriculum correctness
// ---------------------------------------------------------------------------

void check_curriculum(Gate& g) {
    SynthConfig sc;
    sc.n_subjects = 10;
    sc.n_sentences = 50;
    sc.vocab_size = 60;
    sc.min_sentence_len = 4;
    sc.max_sentence_len = 8;
    sc.feature_dim = 16;
    sc.readings_per_sentence = 10;
    sc.seed = 42;
    Corpus corpus = generate(sc);
    g.expect(corpus.trials.size() == 500, "expected a 500-trial corpus");

    CorpusIndex index = build_index(corpus);
    PairingReport pairing = build_all_candidates(corpus, index);
    CurriculumIndex cur = build_curriculum(corpus, pairing, 3);

    size_t bad_anchors = 0;
    for (const AnchorCurriculum& anchor : cur.anchors) {
        bool good = true;
        for (size_t i = 1; i < anchor.positives_sorted.size(); ++i)
            if (trial_similarity(corpus, anchor.anchor, anchor.positives_sorted[i - 1]) <
                trial_similarity(corpus, anchor.anchor, anchor.positives_sorted[i]))
                good = false;
        for (size_t i = 1; i < anchor.negatives_sorted.size(); ++i)
            if (trial_similarity(corpus, anchor.anchor, anchor.negatives_sorted[i - 1]) >
                trial_similarity(corpus, anchor.anchor, anchor.negatives_sorted[i]))
                good = false;
        if (!good) ++bad_anchors;
    }
    g.expect(bad_anchors == 0,
             "sorted candidate lists are not monotone for " + std::to_string(bad_anchors) +
                 " anchors");

    for (size_t n = 1; n <= 30; ++n) {
        std::vector<size_t> items(n);
        for (size_t i = 0; i < n; ++i) items[i] = i;
        auto levels = cur_lev(items, 3);
        size_t base = n / 3, rem = n % 3, back = 0;
        for (size_t l = 0; l < 3; ++l) {
            size_t want = base + (l < rem ? 1 : 0);
            if (levels[l].size() != want)
                g.expect(false, "level sizes break the remainder rule at n=" + std::to_string(n));
            for (size_t v : levels[l])
                if (v != back++)
                    g.expect(false, "levels are not contiguous at n=" + std::to_string(n));
        }
    }

    for (size_t epoch = 1; epoch <= 9; ++epoch) {
        size_t want = (epoch - 1) / 3;
        g.expect(epoch_level(epoch, 9, 3) == want,
                 "epoch " + std::to_string(epoch) + " maps to the wrong level");
    }
}

// ---------------------------------------------------------------------------
// 4. Triple validity
// ---------------------------------------------------------------------------

void check_triple_validity(Gate& g) {
    SynthConfig sc;
    sc.seed = 4;
    Corpus corpus = generate(sc);
    CorpusIndex index = build_index(corpus);
    CurriculumIndex cur = build_curriculum(corpus, build_all_candidates(corpus, index), 3);

    ScheduleConfig schedule;
    schedule.n_levels = 3;
    schedule.total_epochs = 45;
    Rng rng(7);
    size_t total = 0, valid_count = 0;
    for (size_t epoch = 1; epoch <= schedule.total_epochs; ++epoch) {
        for (const Triple& t : make_triples(corpus, cur, schedule, epoch, rng)) {
            ++total;
            const Trial& a = corpus.trials[t.anchor];
            const Trial& p = corpus.trials[t.positive];
            const Trial& n = corpus.trials[t.negative];
            if (a.sentence_id == p.sentence_id && n.sentence_id != a.sentence_id &&
                n.subject != a.subject)
                ++valid_count;
        }
    }
    g.expect(total >= 10000, "only " + std::to_string(total) + " triples streamed");
    g.expect(valid_count == total,
             std::to_string(total - valid_count) + " of " + std::to_string(total) +
                 " triples violate the pairing conditions");
}

// ---------------------------------------------------------------------------
// 5. Audit
// ---------------------------------------------------------------------------

std::vector<Triple> sample_triples(const Corpus& corpus, const CurriculumIndex& cur,
                                   ScheduleMode mode, size_t fixed_level, size_t anchors,
                                   uint64_t seed) {
    ScheduleConfig sc;
    sc.n_levels = cur.n_levels;
    sc.total_epochs = std::max<size_t>(cur.n_levels, 1);
    sc.mode = mode;
    sc.fixed_level = fixed_level;
    Rng rng(seed);
    std::vector<Triple> triples;
    for (size_t epoch = 1; triples.size() < anchors && epoch <= 1000; ++epoch) {
        auto batch = make_triples(corpus, cur, sc, epoch, rng);
        triples.insert(triples.end(), batch.begin(), batch.end());
    }
    return triples;
}

void check_audit(Gate& g) {
    // The published pair counts must render as 45.93% at four significant
    // figures under the same satisfied/total ratio the auditor uses.
    AuditResult published;
    published.satisfied = 66906;
    published.total = 145670;
    published.fraction =
        static_cast<double>(published.satisfied) / static_cast<double>(published.total);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", published.fraction * 100.0);
    g.expect(std::string(buf) == "45.93",
             std::string("published counts render as ") + buf + " not 45.93");

    SynthConfig sc;
    sc.seed = 5;
    Corpus corpus = generate(sc);
    CorpusIndex index = build_index(corpus);
    CurriculumIndex cur = build_curriculum(corpus, build_all_candidates(corpus, index), 3);

    AuditResult easy =
        audit(sample_triples(corpus, cur, ScheduleMode::fixed_level, 0, 1000, 9), corpus);
    AuditResult hard =
        audit(sample_triples(corpus, cur, ScheduleMode::fixed_level, 2, 1000, 9), corpus);
    g.expect(easy.total >= 1000 && hard.total >= 1000, "fewer than 1000 audited anchors");
    g.expect(easy.fraction >= hard.fraction,
             "easy-level satisfaction " + std::to_string(easy.fraction) +
                 " fell below hard-level " + std::to_string(hard.fraction));
}

// ---------------------------------------------------------------------------
// 6-8. Experiment protocols on the default synthetic corpus
// ---------------------------------------------------------------------------

/// Default corpus and model geometry; only the training seed and the
/// contrastive epoch budget vary. The decode cap is the tightest legal one.
ExperimentConfig experiment_base(uint64_t seed, size_t contrastive_epochs) {
    ExperimentConfig cfg;
    cfg.contrastive.epochs = contrastive_epochs;
    cfg.seq2seq.d_model = cfg.pre.d_model;
    cfg.seq2seq.max_target_len = cfg.synth.max_sentence_len + 1;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

void check_recalibration(Gate& g) {
    int moved = 0;
    for (uint64_t seed : {1, 2, 3}) {
        RecalibrationOutcome r = recalibration(experiment_base(seed, 9));
        bool sentence_up = r.after.silhouette_by_sentence > r.before.silhouette_by_sentence;
        bool subject_down = r.after.silhouette_by_subject < r.before.silhouette_by_subject;
        if (sentence_up && subject_down) ++moved;
    }
    g.expect(moved >= 2, "re-calibration held in only " + std::to_string(moved) + " of 3 seeds");
}

void check_downstream(Gate& g) {
    double with_sum = 0.0, without_sum = 0.0;
    for (uint64_t seed : {1, 2, 3}) {
        PairedOutcome p = paired_run(experiment_base(seed, 18));
        with_sum += p.with_cscl.wer;
        without_sum += p.without_cscl.wer;
    }
    g.expect(with_sum / 3.0 < without_sum / 3.0,
             "mean WER with pretraining " + std::to_string(with_sum / 3.0) +
                 " is not below the random-init " + std::to_string(without_sum / 3.0));
}

void check_zero_shot(Gate& g) {
    int improved = 0;
    for (uint64_t seed : {1, 2, 3}) {
        ZeroShotOutcome z = zero_shot(experiment_base(seed, 9), "S0");
        if (z.silhouette_after > z.silhouette_before) ++improved;
    }
    g.expect(improved >= 2,
             "held-out silhouette improved in only " + std::to_string(improved) + " of 3 seeds");
}

// ---------------------------------------------------------------------------
// 9. Metric correctness
// ---------------------------------------------------------------------------

void check_metrics(Gate& g) {
    g.expect(std::abs(wer(normalize_text("the cat sat"), normalize_text("the dog sat on")) -
                      2.0 / 3.0) < 1e-12,
             "WER fixture is not 2/3");
    double short_hyp = bleu_n({{"a", "b", "c"}}, {"a", "b"}, 1);
    g.expect(std::abs(short_hyp - std::exp(-0.5)) < 1e-12, "brevity BLEU-1 is not e^-1/2");
    g.expect(std::abs(short_hyp - 0.6065) < 1e-4, "brevity BLEU-1 is not 0.6065");
    g.expect(std::abs(rouge({"a", "b", "c"}, {"a", "b"}, RougeVariant::one).f1 - 0.8) < 1e-12,
             "ROUGE-1 F1 fixture is not 0.8");
    g.expect(bleu_n({{"a", "b"}}, {"a", "a", "a", "a"}, 1) == 0.25,
             "clipped unigram precision is not exactly 1/4");

    Rng rng(77);
    std::vector<ScorePair> pairs;
    for (int i = 0; i < 100; ++i) {
        naive::Tokens ref = naive::random_tokens(rng, 1, 8);
        naive::Tokens hyp = naive::random_tokens(rng, 0, 8);
        pairs.push_back({ref, hyp});

        g.expect(std::abs(wer(ref, hyp) - naive::naive_wer(ref, hyp)) < 1e-9,
                 "WER diverges from the naive scorer");
        for (int n = 1; n <= 4; ++n) {
            std::vector<naive::NaiveCounts> per_k;
            for (int k = 1; k <= n; ++k)
                per_k.push_back(naive::naive_clipped(ref, hyp, static_cast<size_t>(k)));
            g.expect(std::abs(bleu_n({ref}, hyp, n) -
                              naive::naive_bleu(per_k, hyp.size(), ref.size())) < 1e-9,
                     "BLEU diverges from the naive scorer");
        }
        for (auto v : {RougeVariant::one, RougeVariant::two, RougeVariant::lcs}) {
            RougeScore got = rouge(ref, hyp, v);
            RougeScore want = naive::naive_rouge(ref, hyp, v);
            g.expect(std::abs(got.precision - want.precision) < 1e-9 &&
                         std::abs(got.recall - want.recall) < 1e-9 &&
                         std::abs(got.f1 - want.f1) < 1e-9,
                     "ROUGE diverges from the naive scorer");
        }
    }
    ScoreReport got = corpus_scores(pairs);
    ScoreReport want = naive::naive_corpus(pairs);
    for (auto [a, b] : {std::pair<double, double>{got.wer, want.wer},
                        {got.bleu1, want.bleu1},
                        {got.bleu2, want.bleu2},
                        {got.bleu3, want.bleu3},
                        {got.bleu4, want.bleu4},
                        {got.rouge1.f1, want.rouge1.f1},
                        {got.rouge2.f1, want.rouge2.f1},
                        {got.rougeL.f1, want.rougeL.f1}})
        g.expect(std::abs(a - b) < 1e-9, "corpus aggregate diverges from the naive scorer");
}

// ---------------------------------------------------------------------------
// 10. Determinism
// ---------------------------------------------------------------------------

std::string path_str(const fs::path& dir, const char* name) { return (dir / name).string(); }

bool run_pipeline(const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto step = [&](std::vector<std::string> args) { return run(args) == 0; };
    return step({"gen-data", "--out", path_str(dir, "full.jsonl"), "--train",
                 path_str(dir, "tr.jsonl"), "--valid", path_str(dir, "va.jsonl"), "--test",
                 path_str(dir, "te.jsonl"), "--subjects", "6", "--sentences", "24", "--vocab",
                 "40", "--min-len", "4", "--max-len", "7", "--dim", "32", "--readings", "6",
                 "--seed", "11"}) &&
           step({"build-curriculum", "--corpus", path_str(dir, "tr.jsonl"), "--out",
                 path_str(dir, "cur.cidx"), "--levels", "3", "--seed", "11"}) &&
           step({"pretrain", "--corpus", path_str(dir, "tr.jsonl"), "--index",
                 path_str(dir, "cur.cidx"), "--out", path_str(dir, "pre.ckpt"), "--layers", "1",
                 "--heads", "4", "--d-model", "32", "--ffn", "64", "--tau", "1.0", "--batch",
                 "16", "--epochs", "3", "--lr", "1e-3", "--seed", "11"}) &&
           step({"finetune", "--train", path_str(dir, "tr.jsonl"), "--valid",
                 path_str(dir, "va.jsonl"), "--pre", path_str(dir, "pre.ckpt"), "--out",
                 path_str(dir, "s2s.ckpt"), "--heads", "4", "--ffn", "64", "--max-target", "8",
                 "--epochs", "2", "--batch", "8", "--seed", "11"}) &&
           step({"generate", "--model", path_str(dir, "s2s.ckpt"), "--corpus",
                 path_str(dir, "te.jsonl"), "--out", path_str(dir, "hyp.jsonl")}) &&
           step({"eval", "--pairs", path_str(dir, "hyp.jsonl"), "--out",
                 path_str(dir, "eval.json")});
}

bool json_close(const json& a, const json& b, double tol) {
    if (a.is_number() && b.is_number())
        return std::abs(a.get<double>() - b.get<double>()) <= tol;
    if (a.type() != b.type()) return false;
    if (a.is_object()) {
        if (a.size() != b.size()) return false;
        for (const auto& [key, value] : a.items())
            if (!b.contains(key) || !json_close(value, b.at(key), tol)) return false;
        return true;
    }
    if (a.is_array()) {
        if (a.size() != b.size()) return false;
        for (size_t i = 0; i < a.size(); ++i)
            if (!json_close(a[i], b[i], tol)) return false;
        return true;
    }
    return a == b;
}

json load_json(const fs::path& path) {
    std::ifstream in(path);
    return json::parse(in);
}

void check_determinism(Gate& g) {
    fs::path root = fs::temp_directory_path() / "cscl_acceptance";
    fs::path one = root / "run1";
    fs::path two = root / "run2";
    g.expect(run_pipeline(one), "first pipeline run failed");
    g.expect(run_pipeline(two), "second pipeline run failed");
    if (!g.ok) return;

    g.expect(json_close(load_json(one / "eval.json"), load_json(two / "eval.json"), 1e-6),
             "eval reports differ beyond 1e-6");
    for (const char* name : {"full.jsonl", "tr.jsonl", "va.jsonl", "te.jsonl", "cur.cidx"})
        g.expect(file_hash(path_str(one, name)) == file_hash(path_str(two, name)),
                 std::string(name) + " hashes differ between runs");
}

}  // namespace

int main() {
    set_log_level(LogLevel::warn);

    struct Criterion {
        int id;
        const char* name;
        std::function<void(Gate&)> body;
        double budget_seconds;  // 0 = unbudgeted
    };
    const std::vector<Criterion> criteria = {
        {1, "gradient fidelity", check_gradient_fidelity, 60.0},
        {2, "loss identities", check_loss_identities, 0.0},
        {3, "curriculum correctness", check_curriculum, 0.0},
        {4, "triple validity", check_triple_validity, 0.0},
        {5, "audit ratio and ordering", check_audit, 0.0},
        {6, "re-calibration direction", check_recalibration, 300.0},
        {7, "downstream WER direction", check_downstream, 0.0},
        {8, "zero-shot direction", check_zero_shot, 0.0},
        {9, "metric correctness", check_metrics, 0.0},
        {10, "pipeline determinism", check_determinism, 0.0},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        Gate gate;
        auto start = std::chrono::steady_clock::now();
        try {
            c.body(gate);
        } catch (const std::exception& e) {
            gate.expect(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_seconds > 0.0 && secs >= c.budget_seconds)
            gate.expect(false, "exceeded the " + std::to_string(c.budget_seconds) + "s budget");

        char line[256];
        std::snprintf(line, sizeof line, "%s %2d  %s (%.1fs)%s%s", gate.ok ? "PASS" : "FAIL",
                      c.id, c.name, secs, gate.ok ? "" : ": ", gate.ok ? "" : gate.detail.c_str());
        std::cout << line << "\n" << std::flush;
        if (!gate.ok) ++failures;
    }

    if (failures == 0) {
        std::cout << "all 10 criteria hold\n";
        return 0;
    }
    std::cout << failures << " criteria failed\n";
    return 1;
}
