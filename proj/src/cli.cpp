#include "cscl/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cscl/analysis.hpp"
#include "cscl/checkpoint.hpp"
#include "cscl/curriculum.hpp"
#include "cscl/pairing.hpp"

namespace cscl {

namespace {

using nlohmann::json;

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    require(out.good(), "cannot write " + path);
    out << content;
    require(out.good(), "write failed: " + path);
}

/// Collects paths while the command runs, then hashes everything and drops
/// the manifest beside the first registered output.
class ManifestBuilder {
public:
    ManifestBuilder(const CLI::App& app, std::string command, uint64_t seed)
        : app_(app), start_(std::chrono::steady_clock::now()) {
        manifest_.command = std::move(command);
        manifest_.seed = seed;
    }

    void input(const std::string& role, const std::string& path) {
        if (!path.empty()) manifest_.inputs[role] = path;
    }
    void output(const std::string& role, const std::string& path) {
        if (!path.empty()) manifest_.outputs[role] = path;
    }

    void finish() {
        manifest_.resolved_config = app_.config_to_str(true, false);
        for (const auto& [role, path] : manifest_.inputs) manifest_.hashes[path] = file_hash(path);
        for (const auto& [role, path] : manifest_.outputs) manifest_.hashes[path] = file_hash(path);
        manifest_.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        if (manifest_.outputs.empty()) {
            log_info("manifest (no file outputs): " + manifest_json(manifest_));
            return;
        }
        std::string beside = manifest_.outputs.begin()->second + ".manifest.json";
        write_text(beside, manifest_json(manifest_) + "\n");
        log_info("manifest written to " + beside);
    }

private:
    const CLI::App& app_;
    std::chrono::steady_clock::time_point start_;
    RunManifest manifest_;
};

json score_json(const ScoreReport& s) {
    auto rouge_json = [](const RougeScore& r) {
        return json{{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
    };
    return json{{"wer", s.wer},          {"bleu1", s.bleu1},
                {"bleu2", s.bleu2},      {"bleu3", s.bleu3},
                {"bleu4", s.bleu4},      {"rouge1", rouge_json(s.rouge1)},
                {"rouge2", rouge_json(s.rouge2)}, {"rougeL", rouge_json(s.rougeL)}};
}

json cluster_json(const ClusterReport& r) {
    return json{{"silhouette_by_sentence", r.silhouette_by_sentence},
                {"silhouette_by_subject", r.silhouette_by_subject},
                {"intra_over_inter", r.intra_over_inter}};
}

// ---------------------------------------------------------------------------
// Shared option groups. Defaults mirror the library structs so the CLI and
// the in-process API agree.
// ---------------------------------------------------------------------------

struct SynthOpts {
    SynthConfig cfg;

    void attach(CLI::App* cmd) {
        cmd->add_option("--subjects", cfg.n_subjects, "number of synthetic subjects")
            ->capture_default_str();
        cmd->add_option("--sentences", cfg.n_sentences, "number of sentences")
            ->capture_default_str();
        cmd->add_option("--vocab", cfg.vocab_size, "vocabulary size")->capture_default_str();
        cmd->add_option("--min-len", cfg.min_sentence_len, "shortest sentence length")
            ->capture_default_str();
        cmd->add_option("--max-len", cfg.max_sentence_len, "longest sentence length")
            ->capture_default_str();
        cmd->add_option("--dim", cfg.feature_dim, "feature dimension")->capture_default_str();
        cmd->add_option("--subject-gain", cfg.subject_gain, "subject direction gain")
            ->capture_default_str();
        cmd->add_option("--semantic-gain", cfg.semantic_gain, "word direction gain")
            ->capture_default_str();
        cmd->add_option("--noise", cfg.noise_std, "noise standard deviation")
            ->capture_default_str();
        cmd->add_option("--readings", cfg.readings_per_sentence, "subjects reading each sentence")
            ->capture_default_str();
    }
};

struct EncoderOpts {
    PreEncoderConfig cfg;
    size_t max_seq = 0;  // 0 = fit the corpus

    /// prefix disambiguates when a command carries several option groups.
    void attach(CLI::App* cmd, const std::string& prefix = "") {
        auto flag = [&](const char* name) { return "--" + prefix + name; };
        cmd->add_option(flag("layers"), cfg.n_layers, "pre-encoder layers")->capture_default_str();
        cmd->add_option(flag("heads"), cfg.n_heads, "attention heads")->capture_default_str();
        cmd->add_option(flag("d-model"), cfg.d_model, "model width")->capture_default_str();
        cmd->add_option(flag("ffn"), cfg.d_ffn, "feed-forward width")->capture_default_str();
        cmd->add_option(flag("max-seq"), max_seq, "position table length (0 fits the data)")
            ->capture_default_str();
        cmd->add_option(flag("dropout"), cfg.dropout, "dropout probability")
            ->capture_default_str();
    }

    PreEncoderConfig config(size_t feature_dim, size_t longest) const {
        PreEncoderConfig out = cfg;
        out.feature_dim = feature_dim;
        out.max_seq_len = max_seq ? max_seq : longest;
        out.validate();
        return out;
    }
};

struct ContrastiveOpts {
    ContrastiveConfig cfg;
    ScheduleMode mode = ScheduleMode::curriculum;
    size_t level = 0;
    DenominatorMode denom = DenominatorMode::in_batch;

    void attach(CLI::App* cmd, const std::string& prefix = "") {
        auto flag = [&](const char* name) { return "--" + prefix + name; };
        cmd->add_option(flag("tau"), cfg.tau, "contrastive temperature")->capture_default_str();
        cmd->add_option(flag("batch"), cfg.batch_size, "triples per batch")->capture_default_str();
        cmd->add_option(flag("epochs"), cfg.epochs, "pre-training epochs")->capture_default_str();
        cmd->add_option(flag("lr"), cfg.lr, "learning rate")->capture_default_str();
        cmd->add_option(flag("schedule"), mode, "triple schedule")
            ->transform(CLI::CheckedTransformer(
                std::map<std::string, ScheduleMode>{{"curriculum", ScheduleMode::curriculum},
                                                    {"random", ScheduleMode::random},
                                                    {"fixed_level", ScheduleMode::fixed_level},
                                                    {"mixed_thirds", ScheduleMode::mixed_thirds}},
                CLI::ignore_case));
        cmd->add_option(flag("level"), level, "level for fixed_level schedule")
            ->capture_default_str();
        cmd->add_option(flag("denominator"), denom, "loss denominator form")
            ->transform(CLI::CheckedTransformer(
                std::map<std::string, DenominatorMode>{{"in_batch", DenominatorMode::in_batch},
                                                       {"per_example", DenominatorMode::per_example}},
                CLI::ignore_case));
    }

    ContrastiveConfig config(uint64_t seed, size_t n_levels) const {
        ContrastiveConfig out = cfg;
        out.seed = seed;
        out.schedule.mode = mode;
        out.schedule.fixed_level = level;
        out.schedule.n_levels = n_levels;
        return out;
    }
};

struct Seq2SeqOpts {
    Seq2SeqConfig cfg;
    size_t epochs = 6;
    size_t batch = 8;
    size_t warmup = 0;

    void attach(CLI::App* cmd, const std::string& prefix = "") {
        auto flag = [&](const char* name) { return "--" + prefix + name; };
        cmd->add_option(flag("enc-layers"), cfg.n_enc_layers, "extra encoder layers")
            ->capture_default_str();
        cmd->add_option(flag("dec-layers"), cfg.n_dec_layers, "decoder layers")
            ->capture_default_str();
        cmd->add_option(flag("heads"), cfg.n_heads, "attention heads")->capture_default_str();
        cmd->add_option(flag("ffn"), cfg.d_ffn, "feed-forward width")->capture_default_str();
        cmd->add_option(flag("max-target"), cfg.max_target_len, "decode length cap")
            ->capture_default_str();
        cmd->add_option(flag("dropout"), cfg.dropout, "dropout probability")
            ->capture_default_str();
        cmd->add_option(flag("lr"), cfg.lr, "learning rate")->capture_default_str();
        cmd->add_option(flag("epochs"), epochs, "fine-tuning epochs")->capture_default_str();
        cmd->add_option(flag("batch"), batch, "pairs per batch")->capture_default_str();
        cmd->add_option(flag("warmup"), warmup, "token-autoencode warm-up epochs")
            ->capture_default_str();
    }
};

size_t longest_trial(const Corpus& corpus) {
    size_t longest = 0;
    for (const Trial& t : corpus.trials) longest = std::max(longest, t.word_count());
    return longest;
}

Corpus load_corpus_auto(const std::string& path) {
    return load_corpus(path, format_from_path(path));
}

Mat embedding_space(const Corpus& corpus, const std::string& model_path, std::string* space) {
    if (model_path.empty()) {
        *space = "raw";
        return raw_embeddings(corpus);
    }
    PreEncoderModel pre = load_pre_encoder(model_path);
    require(pre.config.feature_dim == corpus.feature_dim,
            "model feature_dim does not match the corpus");
    *space = "encoded";
    return encode_corpus(pre, corpus);
}

std::string csv_of(const Projection& proj, const Corpus& corpus) {
    std::string csv = "x,y,sentence_id,subject\n";
    char buf[64];
    for (size_t i = 0; i < proj.points.rows; ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g", proj.points.at(i, 0), proj.points.at(i, 1));
        csv += buf;
        csv += "," + std::to_string(corpus.trials[i].sentence_id) + "," +
               corpus.trials[i].subject + "\n";
    }
    return csv;
}

std::string svg_scatter(const Projection& proj, const Corpus& corpus, bool color_by_sentence) {
    double xmin = proj.points.at(0, 0), xmax = xmin;
    double ymin = proj.points.at(0, 1), ymax = ymin;
    for (size_t i = 0; i < proj.points.rows; ++i) {
        xmin = std::min(xmin, proj.points.at(i, 0));
        xmax = std::max(xmax, proj.points.at(i, 0));
        ymin = std::min(ymin, proj.points.at(i, 1));
        ymax = std::max(ymax, proj.points.at(i, 1));
    }
    if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
    if (ymax - ymin < 1e-12) ymax = ymin + 1.0;

    const double w = 640.0, h = 480.0, pad = 24.0;
    auto sx = [&](double x) { return pad + (x - xmin) / (xmax - xmin) * (w - 2 * pad); };
    auto sy = [&](double y) { return h - pad - (y - ymin) / (ymax - ymin) * (h - 2 * pad); };

    std::map<std::string, int> color_ids;
    auto color_key = [&](const Trial& t) {
        return color_by_sentence ? std::to_string(t.sentence_id) : t.subject;
    };
    for (const Trial& t : corpus.trials) color_ids.emplace(color_key(t), color_ids.size());

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
           "viewBox=\"0 0 640 480\">\n"
        << "<rect width=\"640\" height=\"480\" fill=\"white\" stroke=\"#444\"/>\n"
        << "<text x=\"24\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">"
        << "2-component projection, colored by " << (color_by_sentence ? "sentence" : "subject")
        << "</text>\n";
    char buf[256];
    for (size_t i = 0; i < proj.points.rows; ++i) {
        const Trial& t = corpus.trials[i];
        int hue = (color_ids.at(color_key(t)) * 137) % 360;
        std::snprintf(buf, sizeof(buf),
                      "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"hsl(%d,70%%,45%%)\" "
                      "fill-opacity=\"0.85\"><title>sentence %u, %s</title></circle>\n",
                      sx(proj.points.at(i, 0)), sy(proj.points.at(i, 1)), hue, t.sentence_id,
                      t.subject.c_str());
        svg << buf;
    }
    svg << "</svg>\n";
    return svg.str();
}

// ---------------------------------------------------------------------------
// Subcommand bodies.
// ---------------------------------------------------------------------------

struct GenDataOpts {
    SynthOpts synth;
    std::string out, train, valid, test;
    SplitFractions fractions;
    bool no_zscore = false;
};

void run_gen_data(const CLI::App& app, GenDataOpts& o, uint64_t seed) {
    ManifestBuilder mb(app, "gen-data", seed);
    o.synth.cfg.seed = seed;
    Corpus corpus = generate(o.synth.cfg);
    save_corpus(corpus, o.out, format_from_path(o.out));
    mb.output("corpus", o.out);

    bool any_split = !o.train.empty() || !o.valid.empty() || !o.test.empty();
    if (any_split) {
        require(!o.train.empty() && !o.valid.empty() && !o.test.empty(),
                "--train/--valid/--test must be given together");
        auto [tr, va, te] = split(corpus, o.fractions, seed);
        if (!o.no_zscore) {
            // Split files ship standardized with train statistics; downstream
            // commands consume them as-is.
            Corpus ztr = zscore(tr);
            va = apply_zscore(va, *ztr.zscore_stats);
            te = apply_zscore(te, *ztr.zscore_stats);
            tr = std::move(ztr);
        }
        save_corpus(tr, o.train, format_from_path(o.train));
        save_corpus(va, o.valid, format_from_path(o.valid));
        save_corpus(te, o.test, format_from_path(o.test));
        mb.output("train", o.train);
        mb.output("valid", o.valid);
        mb.output("test", o.test);
    }
    log_info("generated " + std::to_string(corpus.trials.size()) + " trials");
    mb.finish();
}

struct CurriculumOpts {
    std::string corpus, out;
    size_t levels = 3;
    NegativeRule rule = NegativeRule::both_conditions;
};

void run_build_curriculum(const CLI::App& app, CurriculumOpts& o, uint64_t seed) {
    ManifestBuilder mb(app, "build-curriculum", seed);
    mb.input("corpus", o.corpus);
    Corpus corpus = load_corpus_auto(o.corpus);
    CorpusIndex index = build_index(corpus);
    PairingReport pairing = build_all_candidates(corpus, index, o.rule);
    CurriculumIndex curriculum = build_curriculum(corpus, pairing, o.levels);
    save_curriculum(curriculum, o.out);
    mb.output("index", o.out);
    log_info("curriculum over " + std::to_string(curriculum.anchors.size()) + " anchors");
    mb.finish();
}

struct PretrainOpts {
    std::string corpus, index, out;
    EncoderOpts encoder;
    ContrastiveOpts contrastive;
};

void run_pretrain(const CLI::App& app, PretrainOpts& o, uint64_t seed) {
    ManifestBuilder mb(app, "pretrain", seed);
    mb.input("corpus", o.corpus);
    mb.input("index", o.index);
    Corpus corpus = load_corpus_auto(o.corpus);
    CurriculumIndex index = load_curriculum(o.index, corpus);

    PreEncoderConfig pc = o.encoder.config(corpus.feature_dim, longest_trial(corpus));
    Rng init_rng(seed);
    PreEncoderModel model = PreEncoderModel::init(pc, init_rng);
    ContrastiveConfig cc = o.contrastive.config(seed + 1, index.n_levels);
    pretrain(model, corpus, index, cc);
    save_pre_encoder(model, o.out);
    mb.output("model", o.out);
    mb.finish();
}

struct FinetuneOpts {
    std::string train, valid, pre, out;
    bool random_init = false;
    EncoderOpts encoder;  // used only with --random-init
    Seq2SeqOpts seq2seq;
};

void run_finetune(const CLI::App& app, FinetuneOpts& o, uint64_t seed) {
    ManifestBuilder mb(app, "finetune", seed);
    mb.input("train", o.train);
    mb.input("valid", o.valid);
    Corpus train = load_corpus_auto(o.train);
    Corpus valid = load_corpus_auto(o.valid);

    PreEncoderModel pre = [&] {
        if (!o.pre.empty()) {
            require(!o.random_init, "--pre and --random-init are mutually exclusive");
            mb.input("pre", o.pre);
            return load_pre_encoder(o.pre);
        }
        require(o.random_init, "either --pre or --random-init is required");
        PreEncoderConfig pc = o.encoder.config(train.feature_dim, longest_trial(train));
        Rng init_rng(seed);
        return PreEncoderModel::init(pc, init_rng);
    }();

    Seq2SeqConfig sc = o.seq2seq.cfg;
    sc.d_model = pre.config.d_model;
    sc.seed = seed + 2;
    sc.vocab = build_vocab(train, valid).tokens;
    Rng stack_rng(seed + 3);
    Seq2SeqModel model = Seq2SeqModel::init(sc, pre, stack_rng);
    if (o.seq2seq.warmup > 0)
        warmup_autoencode(model, train, o.seq2seq.warmup, o.seq2seq.batch);
    finetune(model, train, valid, o.seq2seq.epochs, o.seq2seq.batch);
    save_seq2seq(model, o.out);
    mb.output("model", o.out);
    mb.finish();
}

struct GenerateOpts {
    std::string model, corpus, out;
};

void run_generate(const CLI::App& app, GenerateOpts& o, uint64_t seed) {
    ManifestBuilder mb(app, "generate", seed);
    mb.input("model", o.model);
    mb.input("corpus", o.corpus);
    Seq2SeqModel model = load_seq2seq(o.model);
    Corpus corpus = load_corpus_auto(o.corpus);

    std::ostringstream lines;
    for (const Trial& t : corpus.trials) {
        json rec{{"sentence_id", t.sentence_id},
                 {"subject", t.subject},
                 {"ref", t.tokens},
                 {"hyp", generate(model, t.features)}};
        lines << rec.dump() << "\n";
    }
    write_text(o.out, lines.str());
    mb.output("pairs", o.out);
    log_info("decoded " + std::to_string(corpus.trials.size()) + " trials");
    mb.finish();
}

struct EvalOpts {
    std::string pairs, out;
};

void run_eval(const CLI::App& app, EvalOpts& o, uint64_t seed) {
    ManifestBuilder mb(app, "eval", seed);
    mb.input("pairs", o.pairs);

    std::ifstream in(o.pairs);
    require(in.good(), "cannot open " + o.pairs);
    std::vector<ScorePair> pairs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
            pairs.emplace_back(rec.at("ref").get<std::vector<std::string>>(),
                               rec.at("hyp").get<std::vector<std::string>>());
        } catch (const json::exception& e) {
            fail(o.pairs + ":" + std::to_string(line_no) + ": malformed pair: " + e.what());
        }
    }
    require(!pairs.empty(), "no pairs in " + o.pairs);

    json out = score_json(corpus_scores(pairs));
    out["pairs"] = pairs.size();
    write_text(o.out, out.dump(2) + "\n");
    mb.output("scores", o.out);
    mb.finish();
}

struct ClusterOpts {
    std::string corpus, model, out;
    double threshold = 0.9;
};

void run_analyze_cluster(const CLI::App& app, ClusterOpts& o, uint64_t seed) {
    ManifestBuilder mb(app, "analyze cluster", seed);
    mb.input("corpus", o.corpus);
    if (!o.model.empty()) mb.input("model", o.model);
    Corpus corpus = load_corpus_auto(o.corpus);
    std::string space;
    Mat emb = embedding_space(corpus, o.model, &space);

    std::vector<uint32_t> sent;
    std::vector<std::string> subj;
    for (const Trial& t : corpus.trials) {
        sent.push_back(t.sentence_id);
        subj.push_back(t.subject);
    }
    json out = cluster_json(cluster_report(emb, sent, subj));
    out["space"] = space;
    out["trials"] = corpus.trials.size();
    out["component_threshold"] = o.threshold;
    out["components"] = component_count(emb, o.threshold);
    write_text(o.out, out.dump(2) + "\n");
    mb.output("report", o.out);
    mb.finish();
}

struct ProjectOpts {
    std::string corpus, model, out, svg;
    bool color_by_subject = false;
};

void run_analyze_project(const CLI::App& app, ProjectOpts& o, uint64_t seed) {
    ManifestBuilder mb(app, "analyze project", seed);
    mb.input("corpus", o.corpus);
    if (!o.model.empty()) mb.input("model", o.model);
    Corpus corpus = load_corpus_auto(o.corpus);
    std::string space;
    Mat emb = embedding_space(corpus, o.model, &space);
    Projection proj = project2d(emb);

    write_text(o.out, csv_of(proj, corpus));
    mb.output("points", o.out);
    if (!o.svg.empty()) {
        write_text(o.svg, svg_scatter(proj, corpus, !o.color_by_subject));
        mb.output("scatter", o.svg);
    }
    log_info("explained variance " + std::to_string(proj.explained[0]) + " + " +
             std::to_string(proj.explained[1]));
    mb.finish();
}

struct ExperimentOpts {
    std::string protocol, out, subject, held_out;
    std::vector<double> fractions{0.25, 0.5, 0.75, 1.0};
    SynthOpts synth;
    EncoderOpts encoder;
    ContrastiveOpts contrastive;
    Seq2SeqOpts seq2seq;
    SplitFractions split_fractions;
};

ExperimentConfig experiment_config(const ExperimentOpts& o, uint64_t seed) {
    ExperimentConfig cfg;
    cfg.synth = o.synth.cfg;
    cfg.fractions = o.split_fractions;
    cfg.pre = o.encoder.config(cfg.synth.feature_dim, cfg.synth.max_sentence_len);
    cfg.contrastive = o.contrastive.config(seed, o.contrastive.cfg.schedule.n_levels);
    cfg.seq2seq = o.seq2seq.cfg;
    cfg.seq2seq.d_model = cfg.pre.d_model;
    cfg.finetune_epochs = o.seq2seq.epochs;
    cfg.finetune_batch = o.seq2seq.batch;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

json paired_json(const PairedOutcome& p) {
    return json{{"train_trials", p.train_trials},
                {"with_cscl", score_json(p.with_cscl)},
                {"without_cscl", score_json(p.without_cscl)},
                {"cluster_before", cluster_json(p.cluster_before)},
                {"cluster_after", cluster_json(p.cluster_after)}};
}

void run_analyze_experiment(const CLI::App& app, ExperimentOpts& o, uint64_t seed) {
    ManifestBuilder mb(app, "analyze experiment", seed);
    ExperimentConfig cfg = experiment_config(o, seed);

    json out{{"protocol", o.protocol}, {"seed", seed}};
    if (o.protocol == "paired") {
        out.update(paired_json(paired_run(cfg)));
    } else if (o.protocol == "recalibration") {
        RecalibrationOutcome r = recalibration(cfg);
        out["raw"] = cluster_json(r.raw);
        out["before"] = cluster_json(r.before);
        out["after"] = cluster_json(r.after);
    } else if (o.protocol == "low-resource") {
        json points = json::array();
        for (const LowResourcePoint& p : low_resource(cfg, o.fractions)) {
            json entry = paired_json(p.outcome);
            entry["fraction"] = p.fraction;
            points.push_back(std::move(entry));
        }
        out["points"] = std::move(points);
    } else if (o.protocol == "zero-shot") {
        require(!o.held_out.empty(), "zero-shot needs --held-out");
        ZeroShotOutcome z = zero_shot(cfg, o.held_out);
        out["subject"] = z.subject;
        out["held_out_trials"] = z.held_out_trials;
        out["silhouette_before"] = z.silhouette_before;
        out["silhouette_after"] = z.silhouette_after;
    } else if (o.protocol == "single-subject") {
        require(!o.subject.empty(), "single-subject needs --subject");
        SubjectOutcome s = single_subject(cfg, o.subject);
        out["subject"] = s.subject;
        out["test_trials"] = s.test_trials;
        out["with_cscl"] = score_json(s.with_cscl);
        out["without_cscl"] = score_json(s.without_cscl);
    } else if (o.protocol == "single-curriculum") {
        json arms = json::array();
        for (const CurriculumArm& arm : single_curriculum(cfg)) {
            arms.push_back(json{{"name", arm.name},
                                {"final_pretrain_loss", arm.final_pretrain_loss},
                                {"scores", score_json(arm.scores)}});
        }
        out["arms"] = std::move(arms);
    } else {
        fail("unknown protocol: " + o.protocol);
    }
    write_text(o.out, out.dump(2) + "\n");
    mb.output("report", o.out);
    mb.finish();
}

struct AuditOpts {
    std::string corpus, index, out;
    std::string mode = "random";
    size_t anchors = 1000;
};

void run_audit(const CLI::App& app, AuditOpts& o, uint64_t seed) {
    ManifestBuilder mb(app, "audit", seed);
    mb.input("corpus", o.corpus);
    mb.input("index", o.index);
    Corpus corpus = load_corpus_auto(o.corpus);
    CurriculumIndex index = load_curriculum(o.index, corpus);

    ScheduleConfig sc;
    sc.n_levels = index.n_levels;
    sc.total_epochs = std::max<size_t>(index.n_levels, 1);
    if (o.mode == "random") {
        sc.mode = ScheduleMode::random;
    } else {
        sc.mode = ScheduleMode::fixed_level;
        sc.fixed_level = o.mode == "easy" ? 0 : o.mode == "medium" ? 1 : 2;
        require(sc.fixed_level < index.n_levels, "curriculum has no level for mode " + o.mode);
    }

    Rng rng(seed);
    std::vector<Triple> triples;
    for (size_t epoch = 1; triples.size() < o.anchors && epoch <= 1000; ++epoch) {
        auto batch = make_triples(corpus, index, sc, epoch, rng);
        triples.insert(triples.end(), batch.begin(), batch.end());
    }

    AuditResult result = audit(triples, corpus);
    json line{{"mode", o.mode},
              {"satisfied", result.satisfied},
              {"total", result.total},
              {"fraction", result.fraction}};
    std::cout << line.dump() << "\n";
    if (!o.out.empty()) {
        write_text(o.out, line.dump(2) + "\n");
        mb.output("report", o.out);
    }
    mb.finish();
}

}  // namespace

std::string manifest_json(const RunManifest& manifest) {
    json j{{"command", manifest.command},
           {"seed", manifest.seed},
           {"resolved_config", manifest.resolved_config},
           {"inputs", manifest.inputs},
           {"outputs", manifest.outputs},
           {"hashes", manifest.hashes},
           {"wall_seconds", manifest.wall_seconds}};
    return j.dump(2);
}

std::string file_hash(const std::string& path) {
    std::string bytes = read_bytes(path);
    return hex64(fnv1a64(bytes.data(), bytes.size()));
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"curriculum contrastive EEG-to-text pipeline"};
    app.require_subcommand(1);
    app.set_config("--config", "", "layered config file; flags override file values");

    uint64_t seed = 1;
    app.add_option("--seed", seed, "seed for every stochastic stage")->capture_default_str();

    GenDataOpts gen;
    CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
    cmd_gen->fallthrough();
    gen.synth.attach(cmd_gen);
    cmd_gen->add_option("--out", gen.out, "full corpus path (.jsonl or binary)")->required();
    cmd_gen->add_option("--train", gen.train, "standardized train split path");
    cmd_gen->add_option("--valid", gen.valid, "standardized valid split path");
    cmd_gen->add_option("--test", gen.test, "standardized test split path");
    cmd_gen->add_option("--train-frac", gen.fractions.train, "train fraction")
        ->capture_default_str();
    cmd_gen->add_option("--valid-frac", gen.fractions.valid, "valid fraction")
        ->capture_default_str();
    cmd_gen->add_option("--test-frac", gen.fractions.test, "test fraction")
        ->capture_default_str();
    cmd_gen->add_flag("--no-zscore", gen.no_zscore, "write splits without standardization");

    CurriculumOpts cur;
    CLI::App* cmd_cur = app.add_subcommand("build-curriculum", "sort and level candidate pairs");
    cmd_cur->fallthrough();
    cmd_cur->add_option("--corpus", cur.corpus, "training corpus")->required();
    cmd_cur->add_option("--out", cur.out, "curriculum index path")->required();
    cmd_cur->add_option("--levels", cur.levels, "difficulty levels")->capture_default_str();
    cmd_cur->add_option("--negative-rule", cur.rule, "negative candidate rule")
        ->transform(CLI::CheckedTransformer(
            std::map<std::string, NegativeRule>{{"both_conditions", NegativeRule::both_conditions},
                                                {"sentence_only", NegativeRule::sentence_only}},
            CLI::ignore_case));

    PretrainOpts pre;
    CLI::App* cmd_pre = app.add_subcommand("pretrain", "contrastive pre-encoder training");
    cmd_pre->fallthrough();
    cmd_pre->add_option("--corpus", pre.corpus, "training corpus")->required();
    cmd_pre->add_option("--index", pre.index, "curriculum index")->required();
    cmd_pre->add_option("--out", pre.out, "pre-encoder checkpoint path")->required();
    pre.encoder.attach(cmd_pre);
    pre.contrastive.attach(cmd_pre);

    FinetuneOpts fin;
    CLI::App* cmd_fin = app.add_subcommand("finetune", "train the translation stack");
    cmd_fin->fallthrough();
    cmd_fin->add_option("--train", fin.train, "training corpus")->required();
    cmd_fin->add_option("--valid", fin.valid, "validation corpus")->required();
    cmd_fin->add_option("--pre", fin.pre, "pre-encoder checkpoint");
    cmd_fin->add_flag("--random-init", fin.random_init, "start from an untrained pre-encoder");
    cmd_fin->add_option("--out", fin.out, "seq2seq checkpoint path")->required();
    fin.encoder.attach(cmd_fin->add_option_group("encoder", "geometry for --random-init"), "pre-");
    fin.seq2seq.attach(cmd_fin);

    GenerateOpts dec;
    CLI::App* cmd_dec = app.add_subcommand("generate", "greedy-decode a corpus");
    cmd_dec->fallthrough();
    cmd_dec->add_option("--model", dec.model, "seq2seq checkpoint")->required();
    cmd_dec->add_option("--corpus", dec.corpus, "corpus to decode")->required();
    cmd_dec->add_option("--out", dec.out, "pairs JSONL path")->required();

    EvalOpts ev;
    CLI::App* cmd_ev = app.add_subcommand("eval", "score decoded pairs");
    cmd_ev->fallthrough();
    cmd_ev->add_option("--pairs", ev.pairs, "pairs JSONL from generate")->required();
    cmd_ev->add_option("--out", ev.out, "score JSON path")->required();

    CLI::App* cmd_an = app.add_subcommand("analyze", "representation and protocol reports");
    cmd_an->require_subcommand(1);
    cmd_an->fallthrough();

    ClusterOpts cl;
    CLI::App* cmd_cl = cmd_an->add_subcommand("cluster", "silhouette cluster report");
    cmd_cl->fallthrough();
    cmd_cl->add_option("--corpus", cl.corpus, "corpus to embed")->required();
    cmd_cl->add_option("--model", cl.model, "pre-encoder checkpoint (raw features if absent)");
    cmd_cl->add_option("--out", cl.out, "report JSON path")->required();
    cmd_cl->add_option("--component-threshold", cl.threshold, "cosine for the component graph")
        ->capture_default_str();

    ProjectOpts pj;
    CLI::App* cmd_pj = cmd_an->add_subcommand("project", "2-component projection export");
    cmd_pj->fallthrough();
    cmd_pj->add_option("--corpus", pj.corpus, "corpus to embed")->required();
    cmd_pj->add_option("--model", pj.model, "pre-encoder checkpoint (raw features if absent)");
    cmd_pj->add_option("--out", pj.out, "CSV path (x,y,sentence_id,subject)")->required();
    cmd_pj->add_option("--svg", pj.svg, "scatter SVG path");
    cmd_pj->add_flag("--color-by-subject", pj.color_by_subject,
                     "color the SVG by subject instead of sentence");

    ExperimentOpts ex;
    CLI::App* cmd_ex = cmd_an->add_subcommand("experiment", "end-to-end protocol runs");
    cmd_ex->fallthrough();
    cmd_ex->add_option("--protocol", ex.protocol, "paired|recalibration|low-resource|zero-shot|single-subject|single-curriculum")
        ->required()
        ->check(CLI::IsMember({"paired", "recalibration", "low-resource", "zero-shot",
                               "single-subject", "single-curriculum"}));
    cmd_ex->add_option("--out", ex.out, "report JSON path")->required();
    cmd_ex->add_option("--fractions", ex.fractions, "low-resource sentence fractions")
        ->delimiter(',');
    cmd_ex->add_option("--held-out", ex.held_out, "held-out subject for zero-shot");
    cmd_ex->add_option("--subject", ex.subject, "subject for single-subject");
    cmd_ex->add_option("--train-frac", ex.split_fractions.train, "train fraction")
        ->capture_default_str();
    cmd_ex->add_option("--valid-frac", ex.split_fractions.valid, "valid fraction")
        ->capture_default_str();
    cmd_ex->add_option("--test-frac", ex.split_fractions.test, "test fraction")
        ->capture_default_str();
    ex.synth.attach(cmd_ex);
    ex.encoder.attach(cmd_ex->add_option_group("encoder", "pre-encoder geometry"), "pre-");
    ex.contrastive.attach(cmd_ex->add_option_group("contrastive", "stage-1 training"), "cl-");
    ex.seq2seq.attach(cmd_ex->add_option_group("seq2seq", "stage-2 training"), "ft-");

    AuditOpts au;
    CLI::App* cmd_au = app.add_subcommand("audit", "check triple similarity assumption");
    cmd_au->fallthrough();
    cmd_au->add_option("--corpus", au.corpus, "corpus behind the index")->required();
    cmd_au->add_option("--index", au.index, "curriculum index")->required();
    cmd_au->add_option("--mode", au.mode, "triple source level")
        ->check(CLI::IsMember({"random", "easy", "medium", "hard"}))
        ->capture_default_str();
    cmd_au->add_option("--anchors", au.anchors, "minimum triples to audit")
        ->capture_default_str();
    cmd_au->add_option("--out", au.out, "optional report JSON path");

    cmd_gen->callback([&] { run_gen_data(app, gen, seed); });
    cmd_cur->callback([&] { run_build_curriculum(app, cur, seed); });
    cmd_pre->callback([&] { run_pretrain(app, pre, seed); });
    cmd_fin->callback([&] { run_finetune(app, fin, seed); });
    cmd_dec->callback([&] { run_generate(app, dec, seed); });
    cmd_ev->callback([&] { run_eval(app, ev, seed); });
    cmd_cl->callback([&] { run_analyze_cluster(app, cl, seed); });
    cmd_pj->callback([&] { run_analyze_project(app, pj, seed); });
    cmd_ex->callback([&] { run_analyze_experiment(app, ex, seed); });
    cmd_au->callback([&] { run_audit(app, au, seed); });

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("cscl");
    for (const std::string& a : args) argv.push_back(a.c_str());

    std::string active = "none";
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << app.help() << "\n";
        return 2;
    } catch (const std::exception& e) {
        const CLI::App* node = &app;
        while (!node->get_subcommands().empty()) {
            node = node->get_subcommands().back();
            active = node->get_name();
        }
        json err{{"error", e.what()}, {"command", active}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace cscl
