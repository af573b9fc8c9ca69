#include "doctest.h"

#include "cscl/cli.hpp"
#include "cscl/common.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace cscl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// The pipeline commands log per-epoch progress; keep the test output readable.
const struct QuietLogs {
    QuietLogs() { set_log_level(LogLevel::warn); }
} quiet_logs;

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "cscl_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "cannot open " << path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json jload(const fs::path& path) { return json::parse(slurp(path)); }

size_t line_count(const fs::path& path) {
    std::istringstream in(slurp(path));
    size_t n = 0;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) ++n;
    return n;
}

json manifest_of(const fs::path& output) { return jload(output.string() + ".manifest.json"); }

/// Hashes keyed by manifest role rather than by absolute path, so runs in
/// different directories can be compared.
std::map<std::string, std::string> output_hashes(const json& manifest) {
    std::map<std::string, std::string> out;
    for (const auto& [role, path] : manifest.at("outputs").items())
        out[role] = manifest.at("hashes").at(path.get<std::string>());
    return out;
}

std::vector<std::string> gen_args(const fs::path& dir) {
    return {"gen-data",  "--out",    (dir / "full.jsonl").string(),
            "--train",   (dir / "tr.jsonl").string(),
            "--valid",   (dir / "va.jsonl").string(),
            "--test",    (dir / "te.jsonl").string(),
            "--subjects", "4",  "--sentences", "12", "--vocab", "20",
            "--min-len", "3",   "--max-len", "5",    "--dim", "16",
            "--readings", "4",  "--seed", "7"};
}

int gen_and_curriculum(const fs::path& dir) {
    int rc = run(gen_args(dir));
    if (rc != 0) return rc;
    return run({"build-curriculum", "--corpus", (dir / "tr.jsonl").string(),
                "--out", (dir / "cur.cidx").string(), "--levels", "3", "--seed", "7"});
}

std::vector<std::string> experiment_args(const fs::path& out, const std::string& protocol) {
    return {"analyze", "experiment", "--protocol", protocol, "--out", out.string(),
            "--seed", "3",
            "--train-frac", "0.6", "--valid-frac", "0.1", "--test-frac", "0.3",
            "--subjects", "6", "--sentences", "12", "--vocab", "16",
            "--min-len", "3", "--max-len", "4", "--dim", "12", "--readings", "6",
            "--subject-gain", "2.0", "--semantic-gain", "0.2", "--noise", "0.05",
            "--pre-layers", "1", "--pre-heads", "2", "--pre-d-model", "12",
            "--pre-ffn", "24", "--pre-max-seq", "6", "--pre-dropout", "0.05",
            "--cl-tau", "1.0", "--cl-batch", "8", "--cl-epochs", "3", "--cl-lr", "2e-3",
            "--ft-heads", "2", "--ft-ffn", "24", "--ft-max-target", "6",
            "--ft-epochs", "1", "--ft-batch", "4"};
}

bool in_unit(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

}  // namespace

TEST_CASE("command pipeline chains into scored output with manifests") {
    fs::path dir = fresh_dir("pipeline");
    REQUIRE(gen_and_curriculum(dir) == 0);

    REQUIRE(run({"pretrain", "--corpus", (dir / "tr.jsonl").string(),
                 "--index", (dir / "cur.cidx").string(),
                 "--out", (dir / "pre.ckpt").string(),
                 "--layers", "1", "--heads", "2", "--d-model", "16", "--ffn", "32",
                 "--tau", "1.0", "--batch", "8", "--epochs", "3", "--lr", "2e-3",
                 "--seed", "7"}) == 0);
    REQUIRE(run({"finetune", "--train", (dir / "tr.jsonl").string(),
                 "--valid", (dir / "va.jsonl").string(),
                 "--pre", (dir / "pre.ckpt").string(),
                 "--out", (dir / "s2s.ckpt").string(),
                 "--heads", "2", "--ffn", "32", "--max-target", "7",
                 "--epochs", "2", "--batch", "4", "--seed", "7"}) == 0);
    REQUIRE(run({"generate", "--model", (dir / "s2s.ckpt").string(),
                 "--corpus", (dir / "te.jsonl").string(),
                 "--out", (dir / "hyp.jsonl").string()}) == 0);
    REQUIRE(run({"eval", "--pairs", (dir / "hyp.jsonl").string(),
                 "--out", (dir / "eval.json").string()}) == 0);

    json scores = jload(dir / "eval.json");
    CHECK(std::isfinite(scores.at("wer").get<double>()));
    CHECK(scores.at("wer").get<double>() >= 0.0);
    CHECK(in_unit(scores.at("bleu1").get<double>()));
    CHECK(in_unit(scores.at("rouge1").at("f1").get<double>()));
    CHECK(scores.at("pairs").get<size_t>() == line_count(dir / "te.jsonl"));
    CHECK(line_count(dir / "hyp.jsonl") == line_count(dir / "te.jsonl"));

    json pre_manifest = manifest_of(dir / "pre.ckpt");
    CHECK(pre_manifest.at("command") == "pretrain");
    CHECK(pre_manifest.at("seed").get<uint64_t>() == 7);
    CHECK(pre_manifest.at("inputs").contains("corpus"));
    CHECK(pre_manifest.at("inputs").contains("index"));
    CHECK(pre_manifest.at("outputs").contains("model"));
    CHECK(pre_manifest.at("hashes").size() == 3);
    for (const auto& [path, hash] : pre_manifest.at("hashes").items()) {
        CHECK(fs::exists(path));
        CHECK(hash.get<std::string>().size() == 16);
    }
    CHECK(pre_manifest.at("wall_seconds").get<double>() >= 0.0);
    std::string resolved = pre_manifest.at("resolved_config").get<std::string>();
    CHECK(resolved.find("epochs=3") != std::string::npos);

    json eval_manifest = manifest_of(dir / "eval.json");
    CHECK(eval_manifest.at("command") == "eval");
    CHECK(eval_manifest.at("inputs").at("pairs") == (dir / "hyp.jsonl").string());
    CHECK(eval_manifest.at("outputs").contains("scores"));
}

TEST_CASE("generated corpora are byte-identical across reruns") {
    fs::path a = fresh_dir("det_a");
    fs::path b = fresh_dir("det_b");
    REQUIRE(run(gen_args(a)) == 0);
    REQUIRE(run(gen_args(b)) == 0);

    for (const char* name : {"full.jsonl", "tr.jsonl", "va.jsonl", "te.jsonl"})
        CHECK(slurp(a / name) == slurp(b / name));
    CHECK(output_hashes(manifest_of(a / "full.jsonl")) ==
          output_hashes(manifest_of(b / "full.jsonl")));
}

TEST_CASE("usage errors exit 2 and help exits 0") {
    CHECK(run({}) == 2);
    CHECK(run({"frobnicate"}) == 2);
    CHECK(run({"gen-data", "--no-such-flag", "1"}) == 2);
    CHECK(run({"--help"}) == 0);
    CHECK(run({"eval", "--help"}) == 0);
}

TEST_CASE("domain errors exit 1") {
    fs::path dir = fresh_dir("domain");
    CHECK(run({"eval", "--pairs", (dir / "missing.jsonl").string(),
               "--out", (dir / "eval.json").string()}) == 1);

    REQUIRE(gen_and_curriculum(dir) == 0);
    // The curriculum index was built for the training split and refuses any
    // other corpus.
    CHECK(run({"pretrain", "--corpus", (dir / "va.jsonl").string(),
               "--index", (dir / "cur.cidx").string(),
               "--out", (dir / "pre.ckpt").string(),
               "--layers", "1", "--heads", "2", "--d-model", "16", "--ffn", "32",
               "--epochs", "3"}) == 1);
}

TEST_CASE("audit reports the satisfied-triple fraction") {
    fs::path dir = fresh_dir("audit");
    REQUIRE(gen_and_curriculum(dir) == 0);

    REQUIRE(run({"audit", "--corpus", (dir / "tr.jsonl").string(),
                 "--index", (dir / "cur.cidx").string(),
                 "--mode", "random", "--anchors", "200",
                 "--out", (dir / "audit.json").string(), "--seed", "7"}) == 0);
    json report = jload(dir / "audit.json");
    CHECK(report.at("mode") == "random");
    size_t satisfied = report.at("satisfied").get<size_t>();
    size_t total = report.at("total").get<size_t>();
    CHECK(total >= 200);
    CHECK(satisfied <= total);
    double fraction = report.at("fraction").get<double>();
    CHECK(in_unit(fraction));
    CHECK(fraction == doctest::Approx(double(satisfied) / double(total)).epsilon(1e-12));

    for (const char* mode : {"easy", "hard"}) {
        REQUIRE(run({"audit", "--corpus", (dir / "tr.jsonl").string(),
                     "--index", (dir / "cur.cidx").string(),
                     "--mode", mode, "--anchors", "200",
                     "--out", (dir / "audit2.json").string(), "--seed", "7"}) == 0);
        CHECK(in_unit(jload(dir / "audit2.json").at("fraction").get<double>()));
    }
}

TEST_CASE("cluster and projection reports describe the corpus") {
    fs::path dir = fresh_dir("reports");
    REQUIRE(gen_and_curriculum(dir) == 0);
    REQUIRE(run({"pretrain", "--corpus", (dir / "tr.jsonl").string(),
                 "--index", (dir / "cur.cidx").string(),
                 "--out", (dir / "pre.ckpt").string(),
                 "--layers", "1", "--heads", "2", "--d-model", "16", "--ffn", "32",
                 "--tau", "1.0", "--epochs", "3", "--seed", "7"}) == 0);

    REQUIRE(run({"analyze", "cluster", "--corpus", (dir / "full.jsonl").string(),
                 "--out", (dir / "clu_raw.json").string()}) == 0);
    json raw = jload(dir / "clu_raw.json");
    CHECK(raw.at("space") == "raw");
    CHECK(raw.at("trials").get<size_t>() == 48);
    CHECK(std::isfinite(raw.at("silhouette_by_sentence").get<double>()));
    CHECK(std::isfinite(raw.at("silhouette_by_subject").get<double>()));
    size_t components = raw.at("components").get<size_t>();
    CHECK(components >= 1);
    CHECK(components <= 48);

    REQUIRE(run({"analyze", "cluster", "--corpus", (dir / "full.jsonl").string(),
                 "--model", (dir / "pre.ckpt").string(),
                 "--out", (dir / "clu_enc.json").string()}) == 0);
    CHECK(jload(dir / "clu_enc.json").at("space") == "encoded");

    REQUIRE(run({"analyze", "project", "--corpus", (dir / "full.jsonl").string(),
                 "--out", (dir / "pts.csv").string(),
                 "--svg", (dir / "pts.svg").string()}) == 0);
    std::string csv = slurp(dir / "pts.csv");
    CHECK(csv.rfind("x,y,sentence_id,subject\n", 0) == 0);
    CHECK(line_count(dir / "pts.csv") == 49);
    std::string svg = slurp(dir / "pts.svg");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("<circle") != std::string::npos);
    json points_manifest = manifest_of(dir / "pts.csv");
    CHECK(points_manifest.at("outputs").contains("points"));
    CHECK(points_manifest.at("outputs").contains("scatter"));
}

TEST_CASE("config files layer under explicit flags") {
    fs::path dir = fresh_dir("config");
    REQUIRE(gen_and_curriculum(dir) == 0);
    std::ofstream(dir / "cfg.ini") << "[pretrain]\nepochs=4\ntau=0.5\n";

    REQUIRE(run({"pretrain", "--config", (dir / "cfg.ini").string(),
                 "--corpus", (dir / "tr.jsonl").string(),
                 "--index", (dir / "cur.cidx").string(),
                 "--out", (dir / "p1.ckpt").string(),
                 "--layers", "1", "--heads", "2", "--d-model", "16", "--ffn", "32"}) == 0);
    std::string from_file = manifest_of(dir / "p1.ckpt").at("resolved_config").get<std::string>();
    CHECK(from_file.find("epochs=4") != std::string::npos);
    CHECK(from_file.find("tau=0.5") != std::string::npos);

    REQUIRE(run({"pretrain", "--config", (dir / "cfg.ini").string(),
                 "--corpus", (dir / "tr.jsonl").string(),
                 "--index", (dir / "cur.cidx").string(),
                 "--out", (dir / "p2.ckpt").string(),
                 "--layers", "1", "--heads", "2", "--d-model", "16", "--ffn", "32",
                 "--epochs", "3"}) == 0);
    std::string overridden = manifest_of(dir / "p2.ckpt").at("resolved_config").get<std::string>();
    CHECK(overridden.find("epochs=3") != std::string::npos);
    CHECK(overridden.find("epochs=4") == std::string::npos);
}

TEST_CASE("experiment protocols run from the command line") {
    fs::path dir = fresh_dir("experiment");

    REQUIRE(run(experiment_args(dir / "paired.json", "paired")) == 0);
    json paired = jload(dir / "paired.json");
    CHECK(paired.at("protocol") == "paired");
    CHECK(paired.at("train_trials").get<size_t>() > 0);
    CHECK(paired.at("with_cscl").at("wer").get<double>() >= 0.0);
    CHECK(paired.at("without_cscl").at("wer").get<double>() >= 0.0);
    CHECK(std::isfinite(paired.at("cluster_before").at("silhouette_by_subject").get<double>()));
    CHECK(std::isfinite(paired.at("cluster_after").at("silhouette_by_sentence").get<double>()));

    auto zs_args = experiment_args(dir / "zs.json", "zero-shot");
    zs_args.insert(zs_args.end(), {"--held-out", "S1"});
    REQUIRE(run(zs_args) == 0);
    json zs = jload(dir / "zs.json");
    CHECK(zs.at("subject") == "S1");
    CHECK(zs.at("held_out_trials").get<size_t>() == 12);
    CHECK(std::isfinite(zs.at("silhouette_before").get<double>()));
    CHECK(std::isfinite(zs.at("silhouette_after").get<double>()));

    auto lr_args = experiment_args(dir / "lr.json", "low-resource");
    lr_args.insert(lr_args.end(), {"--fractions", "0.5,1.0"});
    REQUIRE(run(lr_args) == 0);
    json lr = jload(dir / "lr.json");
    REQUIRE(lr.at("points").size() == 2);
    CHECK(lr.at("points")[0].at("fraction").get<double>() == 0.5);
    CHECK(lr.at("points")[1].at("fraction").get<double>() == 1.0);
    CHECK(lr.at("points")[0].at("train_trials").get<size_t>() <
          lr.at("points")[1].at("train_trials").get<size_t>());
}
