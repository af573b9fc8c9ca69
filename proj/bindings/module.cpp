#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "cscl/analysis.hpp"
#include "cscl/checkpoint.hpp"
#include "cscl/cli.hpp"
#include "cscl/common.hpp"
#include "cscl/contrastive.hpp"
#include "cscl/corpus.hpp"
#include "cscl/curriculum.hpp"
#include "cscl/metrics.hpp"
#include "cscl/pairing.hpp"
#include "cscl/seq2seq.hpp"
#include "cscl/synthgen.hpp"

namespace py = pybind11;
using namespace cscl;

namespace {

std::vector<std::vector<double>> mat_rows(const Mat& m) {
    std::vector<std::vector<double>> out(m.rows, std::vector<double>(m.cols));
    for (size_t r = 0; r < m.rows; ++r)
        for (size_t c = 0; c < m.cols; ++c) out[r][c] = m.at(r, c);
    return out;
}

py::dict rouge_dict(const RougeScore& r) {
    py::dict d;
    d["precision"] = r.precision;
    d["recall"] = r.recall;
    d["f1"] = r.f1;
    return d;
}

py::dict score_dict(const ScoreReport& s) {
    py::dict d;
    d["wer"] = s.wer;
    d["bleu1"] = s.bleu1;
    d["bleu2"] = s.bleu2;
    d["bleu3"] = s.bleu3;
    d["bleu4"] = s.bleu4;
    d["rouge1"] = rouge_dict(s.rouge1);
    d["rouge2"] = rouge_dict(s.rouge2);
    d["rougeL"] = rouge_dict(s.rougeL);
    return d;
}

py::dict cluster_dict(const ClusterReport& r) {
    py::dict d;
    d["silhouette_by_sentence"] = r.silhouette_by_sentence;
    d["silhouette_by_subject"] = r.silhouette_by_subject;
    d["intra_over_inter"] = r.intra_over_inter;
    return d;
}

Corpus corpus_from_file(const std::string& path) {
    return load_corpus(path, format_from_path(path));
}

Mat embedding_space(const Corpus& corpus, const PreEncoderModel* pre) {
    if (pre == nullptr) return raw_embeddings(corpus);
    require(pre->config.feature_dim == corpus.feature_dim,
            "pre-encoder feature_dim does not match the corpus");
    return encode_corpus(*pre, corpus);
}

std::vector<uint32_t> sentence_labels(const Corpus& corpus) {
    std::vector<uint32_t> labels;
    labels.reserve(corpus.trials.size());
    for (const Trial& t : corpus.trials) labels.push_back(t.sentence_id);
    return labels;
}

std::vector<std::string> subject_labels(const Corpus& corpus) {
    std::vector<std::string> labels;
    labels.reserve(corpus.trials.size());
    for (const Trial& t : corpus.trials) labels.push_back(t.subject);
    return labels;
}

}  // namespace

PYBIND11_MODULE(_cscl, m) {
    m.doc() = "curriculum contrastive EEG-to-text pipeline";

    py::class_<Corpus>(m, "Corpus")
        .def("__len__", [](const Corpus& c) { return c.trials.size(); })
        .def_readonly("feature_dim", &Corpus::feature_dim)
        .def_readonly("split", &Corpus::split)
        .def_property_readonly("standardized", &Corpus::standardized)
        .def_property_readonly("subjects",
                               [](const Corpus& c) {
                                   std::set<std::string> s;
                                   for (const Trial& t : c.trials) s.insert(t.subject);
                                   return std::vector<std::string>(s.begin(), s.end());
                               })
        .def_property_readonly("sentence_ids",
                               [](const Corpus& c) {
                                   std::set<uint32_t> s;
                                   for (const Trial& t : c.trials) s.insert(t.sentence_id);
                                   return std::vector<uint32_t>(s.begin(), s.end());
                               })
        .def("tokens",
             [](const Corpus& c, size_t i) {
                 require(i < c.trials.size(), "trial index out of range");
                 return c.trials[i].tokens;
             },
             py::arg("trial"))
        .def("save",
             [](const Corpus& c, const std::string& path) {
                 save_corpus(c, path, format_from_path(path));
             },
             py::arg("path"))
        .def_static("load", &corpus_from_file, py::arg("path"));

    py::class_<CurriculumIndex>(m, "CurriculumIndex")
        .def_readonly("n_levels", &CurriculumIndex::n_levels)
        .def("__len__", [](const CurriculumIndex& i) { return i.anchors.size(); })
        .def("save",
             [](const CurriculumIndex& i, const std::string& path) { save_curriculum(i, path); },
             py::arg("path"))
        .def_static("load",
                    [](const std::string& path, const Corpus& corpus) {
                        return load_curriculum(path, corpus);
                    },
                    py::arg("path"), py::arg("corpus"));

    py::class_<PreEncoderModel>(m, "PreEncoder")
        .def_property_readonly("d_model",
                               [](const PreEncoderModel& p) { return p.config.d_model; })
        .def_property_readonly("feature_dim",
                               [](const PreEncoderModel& p) { return p.config.feature_dim; })
        .def("encode",
             [](const PreEncoderModel& p, const Corpus& corpus) {
                 return mat_rows(embedding_space(corpus, &p));
             },
             py::arg("corpus"), "Pooled embedding per trial, row-aligned with the corpus.")
        .def("save",
             [](const PreEncoderModel& p, const std::string& path) { save_pre_encoder(p, path); },
             py::arg("path"))
        .def_static("load", &load_pre_encoder, py::arg("path"));

    py::class_<Seq2SeqModel>(m, "Seq2Seq")
        .def_property_readonly("vocab_size",
                               [](const Seq2SeqModel& s) { return s.vocab.size(); })
        .def("save",
             [](const Seq2SeqModel& s, const std::string& path) { save_seq2seq(s, path); },
             py::arg("path"))
        .def_static("load", &load_seq2seq, py::arg("path"));

    m.def(
        "generate",
        [](size_t subjects, size_t sentences, size_t vocab, size_t min_len, size_t max_len,
           size_t feature_dim, double subject_gain, double semantic_gain, double noise,
           size_t readings, uint64_t seed) {
            SynthConfig c;
            c.n_subjects = subjects;
            c.n_sentences = sentences;
            c.vocab_size = vocab;
            c.min_sentence_len = min_len;
            c.max_sentence_len = max_len;
            c.feature_dim = feature_dim;
            c.subject_gain = subject_gain;
            c.semantic_gain = semantic_gain;
            c.noise_std = noise;
            c.readings_per_sentence = readings;
            c.seed = seed;
            return generate(c);
        },
        py::arg("subjects") = 8, py::arg("sentences") = 60, py::arg("vocab") = 120,
        py::arg("min_len") = 5, py::arg("max_len") = 12, py::arg("feature_dim") = 64,
        py::arg("subject_gain") = 1.0, py::arg("semantic_gain") = 0.4, py::arg("noise") = 0.2,
        py::arg("readings") = 4, py::arg("seed") = 1,
        "Synthetic multi-subject reading corpus.");

    m.def(
        "split",
        [](const Corpus& corpus, double train, double valid, double test, uint64_t seed) {
            return split(corpus, SplitFractions{train, valid, test}, seed);
        },
        py::arg("corpus"), py::arg("train") = 0.8, py::arg("valid") = 0.1, py::arg("test") = 0.1,
        py::arg("seed") = 1, "Sentence-disjoint train/valid/test partition.");

    m.def("zscore", &zscore, py::arg("corpus"),
          "Standardize per feature dimension; the result carries its statistics.");
    m.def(
        "apply_zscore",
        [](const Corpus& corpus, const Corpus& reference) {
            require(reference.zscore_stats.has_value(),
                    "reference corpus carries no standardization statistics");
            return apply_zscore(corpus, *reference.zscore_stats);
        },
        py::arg("corpus"), py::arg("reference"),
        "Standardize with the statistics carried by an already-standardized corpus.");

    m.def(
        "build_curriculum",
        [](const Corpus& corpus, size_t levels, const std::string& negative_rule) {
            NegativeRule rule;
            if (negative_rule == "both_conditions") {
                rule = NegativeRule::both_conditions;
            } else if (negative_rule == "sentence_only") {
                rule = NegativeRule::sentence_only;
            } else {
                fail("unknown negative rule: " + negative_rule);
            }
            CorpusIndex index = build_index(corpus);
            PairingReport pairing = build_all_candidates(corpus, index, rule);
            return build_curriculum(corpus, pairing, levels);
        },
        py::arg("corpus"), py::arg("levels") = 3, py::arg("negative_rule") = "both_conditions",
        "Similarity-sorted candidate lists with contiguous difficulty levels.");

    m.def(
        "init_pre_encoder",
        [](size_t feature_dim, size_t layers, size_t heads, size_t d_model, size_t ffn,
           size_t max_seq, double dropout, uint64_t seed) {
            PreEncoderConfig pc{feature_dim, layers, heads, d_model, ffn, max_seq, dropout};
            Rng rng(seed);
            return PreEncoderModel::init(pc, rng);
        },
        py::arg("feature_dim"), py::arg("layers") = 2, py::arg("heads") = 4,
        py::arg("d_model") = 64, py::arg("ffn") = 256, py::arg("max_seq") = 64,
        py::arg("dropout") = 0.1, py::arg("seed") = 1,
        "Randomly initialized pre-encoder (the no-pretraining baseline).");

    m.def(
        "pretrain",
        [](const Corpus& corpus, const CurriculumIndex& index, size_t layers, size_t heads,
           size_t d_model, size_t ffn, size_t max_seq, double dropout, double tau, size_t batch,
           size_t epochs, double lr, const std::string& schedule, size_t level,
           const std::string& denominator, uint64_t seed) {
            size_t longest = 0;
            for (const Trial& t : corpus.trials) longest = std::max(longest, t.tokens.size());
            if (max_seq == 0) max_seq = longest;
            PreEncoderConfig pc{corpus.feature_dim, layers, heads, d_model, ffn, max_seq, dropout};
            Rng init_rng(seed);
            PreEncoderModel model = PreEncoderModel::init(pc, init_rng);

            ContrastiveConfig cc;
            cc.tau = tau;
            cc.batch_size = batch;
            cc.epochs = epochs;
            cc.lr = lr;
            cc.seed = seed + 1;  // model init consumes the base seed
            cc.schedule.n_levels = index.n_levels;
            cc.schedule.mode = schedule_mode_from_string(schedule);
            if (schedule == "easy") {
                cc.schedule.fixed_level = 0;
            } else if (schedule == "medium") {
                cc.schedule.fixed_level = 1;
            } else if (schedule == "hard") {
                cc.schedule.fixed_level = 2;
            } else {
                cc.schedule.fixed_level = level;
            }
            cc.denominator = denominator == "per_example" ? DenominatorMode::per_example
                                                          : DenominatorMode::in_batch;
            pretrain(model, corpus, index, cc);
            return model;
        },
        py::arg("corpus"), py::arg("index"), py::kw_only(), py::arg("layers") = 2,
        py::arg("heads") = 4, py::arg("d_model") = 64, py::arg("ffn") = 256,
        py::arg("max_seq") = 0, py::arg("dropout") = 0.1, py::arg("tau") = 1e-5,
        py::arg("batch") = 32, py::arg("epochs") = 9, py::arg("lr") = 1e-3,
        py::arg("schedule") = "curriculum", py::arg("level") = 0,
        py::arg("denominator") = "in_batch", py::arg("seed") = 1,
        "Contrastive pre-encoder training; max_seq=0 fits the corpus.");

    m.def(
        "finetune",
        [](const Corpus& train, const Corpus& valid, const PreEncoderModel& pre,
           size_t enc_layers, size_t dec_layers, size_t heads, size_t ffn, size_t max_target,
           double dropout, double lr, size_t epochs, size_t batch, size_t warmup, uint64_t seed) {
            Seq2SeqConfig sc;
            sc.n_enc_layers = enc_layers;
            sc.n_dec_layers = dec_layers;
            sc.n_heads = heads;
            sc.d_model = pre.config.d_model;
            sc.d_ffn = ffn;
            sc.max_target_len = max_target;
            sc.dropout = dropout;
            sc.lr = lr;
            sc.seed = seed + 2;  // matches the command-line seed layout
            sc.vocab = build_vocab(train, valid).tokens;
            Rng stack_rng(seed + 3);
            Seq2SeqModel model = Seq2SeqModel::init(sc, pre, stack_rng);
            if (warmup > 0) warmup_autoencode(model, train, warmup, batch);
            finetune(model, train, valid, epochs, batch);
            return model;
        },
        py::arg("train"), py::arg("valid"), py::arg("pre"), py::kw_only(),
        py::arg("enc_layers") = 1, py::arg("dec_layers") = 1, py::arg("heads") = 4,
        py::arg("ffn") = 256, py::arg("max_target") = 16, py::arg("dropout") = 0.1,
        py::arg("lr") = 1e-3, py::arg("epochs") = 6, py::arg("batch") = 8,
        py::arg("warmup") = 0, py::arg("seed") = 1,
        "Train the translation stack on top of a pre-encoder.");

    m.def(
        "translate",
        [](const Seq2SeqModel& model, const Corpus& corpus) {
            return generation_pairs(model, corpus);
        },
        py::arg("model"), py::arg("corpus"),
        "Greedy decodes; one (reference_tokens, hypothesis_tokens) pair per trial.");

    m.def(
        "score_pairs",
        [](const std::vector<ScorePair>& pairs) { return score_dict(corpus_scores(pairs)); },
        py::arg("pairs"), "Corpus-level WER, BLEU-1..4 and ROUGE-1/2/L.");

    m.def(
        "evaluate",
        [](const Seq2SeqModel& model, const Corpus& corpus) {
            return score_dict(corpus_scores(generation_pairs(model, corpus)));
        },
        py::arg("model"), py::arg("corpus"), "translate + score_pairs in one step.");

    m.def(
        "cluster_report",
        [](const Corpus& corpus, const PreEncoderModel* pre) {
            Mat emb = embedding_space(corpus, pre);
            return cluster_dict(cluster_report(emb, sentence_labels(corpus),
                                               subject_labels(corpus)));
        },
        py::arg("corpus"), py::arg("pre").none(true) = nullptr,
        "Silhouettes by sentence and by subject; raw space unless a pre-encoder is given.");

    m.def(
        "project2d",
        [](const Corpus& corpus, const PreEncoderModel* pre) {
            Projection proj = project2d(embedding_space(corpus, pre));
            return py::make_tuple(mat_rows(proj.points), proj.explained);
        },
        py::arg("corpus"), py::arg("pre").none(true) = nullptr,
        "Two principal components; returns (points, explained_variance_ratios).");

    m.def(
        "audit",
        [](const Corpus& corpus, const CurriculumIndex& index, const std::string& mode,
           size_t anchors, uint64_t seed) {
            ScheduleConfig sc;
            sc.n_levels = index.n_levels;
            sc.total_epochs = std::max<size_t>(index.n_levels, 1);
            if (mode == "random") {
                sc.mode = ScheduleMode::random;
            } else {
                sc.mode = ScheduleMode::fixed_level;
                sc.fixed_level = mode == "easy" ? 0 : mode == "medium" ? 1 : 2;
                require(mode == "easy" || mode == "medium" || mode == "hard",
                        "unknown audit mode: " + mode);
                require(sc.fixed_level < index.n_levels, "curriculum has no level for " + mode);
            }
            Rng rng(seed);
            std::vector<Triple> triples;
            for (size_t epoch = 1; triples.size() < anchors && epoch <= 1000; ++epoch) {
                auto batch = make_triples(corpus, index, sc, epoch, rng);
                triples.insert(triples.end(), batch.begin(), batch.end());
            }
            AuditResult result = audit(triples, corpus);
            py::dict d;
            d["mode"] = mode;
            d["satisfied"] = result.satisfied;
            d["total"] = result.total;
            d["fraction"] = result.fraction;
            return d;
        },
        py::arg("corpus"), py::arg("index"), py::arg("mode") = "random",
        py::arg("anchors") = 1000, py::arg("seed") = 1,
        "Fraction of sampled triples already ordered anchor-positive over anchor-negative.");

    m.def("run_cli", &run, py::arg("args"),
          "Full command-line surface; returns the exit code (0 ok, 1 error, 2 usage).");

    m.def(
        "set_log_level",
        [](const std::string& level) {
            if (level == "debug") {
                set_log_level(LogLevel::debug);
            } else if (level == "info") {
                set_log_level(LogLevel::info);
            } else if (level == "warn") {
                set_log_level(LogLevel::warn);
            } else {
                fail("unknown log level: " + level);
            }
        },
        py::arg("level"), "debug, info or warn.");
}
