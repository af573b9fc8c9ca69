#include "cscl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include "cscl/common.hpp"
#include "json.hpp"

namespace cscl {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'C', 'L'};
constexpr uint16_t kVersion = 1;

void append_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    append_u32(out, bits);
}

void append_str16(std::string& out, const std::string& s) {
    require(s.size() <= 0xffff, "string too long for 16-bit length prefix");
    append_u16(out, static_cast<uint16_t>(s.size()));
    out.append(s);
}

struct ByteReader {
    const std::string& buf;
    size_t pos = 0;
    const std::string& where;

    void need(size_t n) const {
        require(pos + n <= buf.size(), where + ": truncated file");
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint8_t>(buf[pos]) | (static_cast<uint16_t>(static_cast<uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + static_cast<size_t>(i)])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + static_cast<size_t>(i)])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str16() {
        uint16_t n = u16();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

bool trial_is_finite(const Trial& t) { return t.features.all_finite(); }

// Shared post-parse bookkeeping: dimension check, NaN drop, duplicate check.
void admit_trial(Corpus& corpus, Trial trial, std::set<std::pair<std::string, uint32_t>>& seen,
                 const std::string& where) {
    require(trial.tokens.size() >= 1, where + ": trial has no tokens");
    require(trial.features.rows == trial.tokens.size(), where + ": feature rows != token count");
    if (corpus.feature_dim == 0) corpus.feature_dim = trial.features.cols;
    require(trial.features.cols == corpus.feature_dim, where + ": dimension mismatch");
    if (!trial_is_finite(trial)) {
        corpus.dropped_count += 1;
        return;
    }
    auto key = std::make_pair(trial.subject, trial.sentence_id);
    require(seen.insert(key).second,
            where + ": duplicate (subject, sentence_id) pair " + trial.subject + "/" + std::to_string(trial.sentence_id));
    corpus.trials.push_back(std::move(trial));
}

Corpus load_jsonl(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open " + path);
    Corpus corpus;
    std::set<std::pair<std::string, uint32_t>> seen;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(where + ": malformed record: " + e.what());
        }
        try {
            Trial t;
            t.subject = rec.at("subject").get<std::string>();
            int64_t sid = rec.at("sentence_id").get<int64_t>();
            require(sid >= 0 && sid <= 0xffffffffLL, where + ": sentence_id out of range");
            t.sentence_id = static_cast<uint32_t>(sid);
            t.tokens = rec.at("tokens").get<std::vector<std::string>>();
            const auto& feats = rec.at("features");
            require(feats.is_array() && !feats.empty(), where + ": features must be a non-empty array");
            size_t dim = feats[0].size();
            t.features = Mat(feats.size(), dim);
            for (size_t i = 0; i < feats.size(); ++i) {
                require(feats[i].is_array() && feats[i].size() == dim, where + ": ragged feature rows");
                for (size_t j = 0; j < dim; ++j) {
                    // JSON has no NaN literal; null is its wire form here.
                    const auto& cell = feats[i][j];
                    t.features.at(i, j) =
                        cell.is_null() ? std::numeric_limits<double>::quiet_NaN() : cell.get<double>();
                }
            }
            admit_trial(corpus, std::move(t), seen, where);
        } catch (const nlohmann::json::exception& e) {
            fail(where + ": malformed record: " + e.what());
        }
    }
    require(!corpus.trials.empty() || corpus.dropped_count > 0, "empty corpus: " + path);
    require(!corpus.trials.empty(), "empty corpus after dropping non-finite trials: " + path);
    return corpus;
}

Corpus load_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();
    ByteReader r{buf, 0, path};
    r.need(4);
    require(std::memcmp(buf.data(), kMagic, 4) == 0, path + ": bad magic (not a corpus file)");
    r.pos = 4;
    uint16_t version = r.u16();
    require(version == kVersion, path + ": unsupported corpus version " + std::to_string(version));
    uint32_t dim = r.u32();
    require(dim >= 1, path + ": zero feature_dim");
    uint64_t count = r.u64();
    require(count >= 1, "empty corpus: " + path);

    Corpus corpus;
    corpus.feature_dim = dim;
    std::set<std::pair<std::string, uint32_t>> seen;
    for (uint64_t i = 0; i < count; ++i) {
        const std::string where = path + ": trial " + std::to_string(i);
        Trial t;
        t.subject = r.str16();
        t.sentence_id = r.u32();
        uint16_t n_tokens = r.u16();
        require(n_tokens >= 1, where + ": trial has no tokens");
        t.tokens.reserve(n_tokens);
        for (uint16_t k = 0; k < n_tokens; ++k) t.tokens.push_back(r.str16());
        t.features = Mat(n_tokens, dim);
        for (size_t e = 0; e < t.features.size(); ++e) t.features.data[e] = static_cast<double>(r.f32());
        admit_trial(corpus, std::move(t), seen, where);
    }
    require(r.pos == buf.size(), path + ": trailing bytes after last trial");
    require(!corpus.trials.empty(), "empty corpus after dropping non-finite trials: " + path);
    return corpus;
}

}  // namespace

CorpusFormat format_from_path(const std::string& path) {
    if (path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0) return CorpusFormat::jsonl;
    return CorpusFormat::binary;
}

Corpus load_corpus(const std::string& path, CorpusFormat format) {
    return format == CorpusFormat::jsonl ? load_jsonl(path) : load_binary(path);
}

std::string serialize_trials(const Corpus& corpus) {
    std::string out;
    out.append(kMagic, 4);
    append_u16(out, kVersion);
    append_u32(out, static_cast<uint32_t>(corpus.feature_dim));
    append_u64(out, corpus.trials.size());
    for (const Trial& t : corpus.trials) {
        append_str16(out, t.subject);
        append_u32(out, t.sentence_id);
        require(t.tokens.size() <= 0xffff, "too many tokens for 16-bit count");
        append_u16(out, static_cast<uint16_t>(t.tokens.size()));
        for (const auto& tok : t.tokens) append_str16(out, tok);
        for (double v : t.features.data) append_f32(out, static_cast<float>(v));
    }
    return out;
}

uint64_t corpus_hash(const Corpus& corpus) {
    std::string bytes = serialize_trials(corpus);
    return fnv1a64(bytes.data(), bytes.size());
}

void save_corpus(const Corpus& corpus, const std::string& path, CorpusFormat format) {
    require(!corpus.trials.empty(), "refusing to save an empty corpus");
    if (format == CorpusFormat::binary) {
        std::string bytes = serialize_trials(corpus);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        require(out.good(), "cannot write " + path);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require(out.good(), "write failed: " + path);
        return;
    }
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), "cannot write " + path);
    for (const Trial& t : corpus.trials) {
        nlohmann::json rec;
        rec["subject"] = t.subject;
        rec["sentence_id"] = t.sentence_id;
        rec["tokens"] = t.tokens;
        nlohmann::json rows = nlohmann::json::array();
        for (size_t i = 0; i < t.features.rows; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (size_t j = 0; j < t.features.cols; ++j) row.push_back(t.features.at(i, j));
            rows.push_back(std::move(row));
        }
        rec["features"] = std::move(rows);
        out << rec.dump() << "\n";
    }
    require(out.good(), "write failed: " + path);
}

Corpus zscore(const Corpus& corpus) {
    require(!corpus.standardized(), "corpus is already standardized");
    require(!corpus.trials.empty(), "cannot standardize an empty corpus");
    const size_t dim = corpus.feature_dim;

    ZscoreStats stats;
    stats.mean.assign(dim, 0.0);
    stats.stddev.assign(dim, 0.0);
    size_t n = 0;
    for (const Trial& t : corpus.trials) {
        for (size_t i = 0; i < t.features.rows; ++i)
            for (size_t j = 0; j < dim; ++j) stats.mean[j] += t.features.at(i, j);
        n += t.features.rows;
    }
    for (size_t j = 0; j < dim; ++j) stats.mean[j] /= static_cast<double>(n);
    for (const Trial& t : corpus.trials) {
        for (size_t i = 0; i < t.features.rows; ++i)
            for (size_t j = 0; j < dim; ++j) {
                double d = t.features.at(i, j) - stats.mean[j];
                stats.stddev[j] += d * d;
            }
    }
    for (size_t j = 0; j < dim; ++j) stats.stddev[j] = std::sqrt(stats.stddev[j] / static_cast<double>(n));

    Corpus out = apply_zscore(corpus, stats);
    out.zscore_stats = std::move(stats);
    return out;
}

Corpus apply_zscore(const Corpus& corpus, const ZscoreStats& stats) {
    require(!corpus.standardized(), "corpus is already standardized");
    require(stats.mean.size() == corpus.feature_dim && stats.stddev.size() == corpus.feature_dim,
            "zscore stats dimension mismatch");
    Corpus out = corpus;
    for (Trial& t : out.trials) {
        for (size_t i = 0; i < t.features.rows; ++i)
            for (size_t j = 0; j < t.features.cols; ++j) {
                double sd = stats.stddev[j];
                double v = sd < 1e-12 ? 0.0 : (t.features.at(i, j) - stats.mean[j]) / sd;
                t.features.at(i, j) = v;
            }
        t.features.quantize_f32();
    }
    out.zscore_stats = stats;
    return out;
}

CorpusIndex build_index(const Corpus& corpus) {
    CorpusIndex idx;
    for (size_t i = 0; i < corpus.trials.size(); ++i) {
        idx.by_sentence[corpus.trials[i].sentence_id].push_back(i);
        idx.by_subject[corpus.trials[i].subject].push_back(i);
    }
    return idx;
}

std::vector<double> sentence_embedding(const Trial& trial) {
    require(trial.features.rows >= 1, "trial has no feature rows");
    std::vector<double> mean(trial.features.cols, 0.0);
    for (size_t i = 0; i < trial.features.rows; ++i)
        for (size_t j = 0; j < trial.features.cols; ++j) mean[j] += trial.features.at(i, j);
    for (double& v : mean) v /= static_cast<double>(trial.features.rows);
    return mean;
}

void validate_benchmark(const Corpus& train, const Corpus& valid, const Corpus& test) {
    require(train.feature_dim == valid.feature_dim && train.feature_dim == test.feature_dim,
            "benchmark splits disagree on feature_dim");
    auto ids = [](const Corpus& c) {
        std::set<uint32_t> s;
        for (const Trial& t : c.trials) s.insert(t.sentence_id);
        return s;
    };
    std::set<uint32_t> a = ids(train), b = ids(valid), c = ids(test);
    for (uint32_t id : b)
        require(!a.count(id), "sentence " + std::to_string(id) + " appears in both train and valid");
    for (uint32_t id : c) {
        require(!a.count(id), "sentence " + std::to_string(id) + " appears in both train and test");
        require(!b.count(id), "sentence " + std::to_string(id) + " appears in both valid and test");
    }
}

}  // namespace cscl
