#include "cscl/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cscl/common.hpp"

namespace cscl {

namespace {

constexpr char kMagic[4] = {'C', 'I', 'D', 'X'};
constexpr uint16_t kVersion = 1;

std::vector<std::vector<double>> all_sentence_embeddings(const Corpus& corpus) {
    std::vector<std::vector<double>> out;
    out.reserve(corpus.trials.size());
    for (const Trial& t : corpus.trials) out.push_back(sentence_embedding(t));
    return out;
}

std::vector<size_t> sort_by_similarity(const std::vector<std::vector<double>>& emb, size_t anchor,
                                       std::vector<size_t> candidates, SortOrder order) {
    std::vector<std::pair<double, size_t>> keyed;
    keyed.reserve(candidates.size());
    for (size_t c : candidates) keyed.emplace_back(cosine_similarity(emb[anchor], emb[c]), c);
    std::sort(keyed.begin(), keyed.end(), [order](const auto& a, const auto& b) {
        if (a.first != b.first)
            return order == SortOrder::descending ? a.first > b.first : a.first < b.first;
        return a.second < b.second;
    });
    for (size_t i = 0; i < keyed.size(); ++i) candidates[i] = keyed[i].second;
    return candidates;
}

void append_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_list(std::string& out, const std::vector<size_t>& xs) {
    append_u64(out, xs.size());
    for (size_t x : xs) append_u64(out, x);
}

struct U64Reader {
    const std::string& buf;
    size_t pos = 0;
    const std::string& where;

    void need(size_t n) const { require(pos + n <= buf.size(), where + ": truncated file"); }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint8_t>(buf[pos]) | (static_cast<uint16_t>(static_cast<uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + static_cast<size_t>(i)])) << (8 * i);
        pos += 8;
        return v;
    }
    std::vector<size_t> list() {
        uint64_t n = u64();
        std::vector<size_t> xs(n);
        for (auto& x : xs) x = u64();
        return xs;
    }
};

}  // namespace

void ScheduleConfig::validate() const {
    require(n_levels >= 1, "n_levels must be >= 1");
    require(total_epochs >= 1, "total_epochs must be >= 1");
    if (mode == ScheduleMode::curriculum)
        require(total_epochs >= n_levels, "curriculum mode needs total_epochs >= n_levels");
    if (mode == ScheduleMode::fixed_level)
        require(fixed_level < n_levels, "fixed_level out of range");
}

ScheduleMode schedule_mode_from_string(const std::string& name) {
    if (name == "curriculum") return ScheduleMode::curriculum;
    if (name == "random") return ScheduleMode::random;
    if (name == "easy" || name == "medium" || name == "hard") return ScheduleMode::fixed_level;
    if (name == "mixed_thirds") return ScheduleMode::mixed_thirds;
    fail("unknown schedule mode: " + name);
}

std::string to_string(ScheduleMode mode) {
    switch (mode) {
        case ScheduleMode::curriculum: return "curriculum";
        case ScheduleMode::random: return "random";
        case ScheduleMode::fixed_level: return "fixed_level";
        case ScheduleMode::mixed_thirds: return "mixed_thirds";
    }
    return "unknown";
}

double trial_similarity(const Corpus& corpus, size_t a, size_t b) {
    require(a < corpus.trials.size() && b < corpus.trials.size(), "trial index out of range");
    return cosine_similarity(sentence_embedding(corpus.trials[a]), sentence_embedding(corpus.trials[b]));
}

std::vector<size_t> cur_cri(const Corpus& corpus, size_t anchor, std::vector<size_t> candidates,
                            SortOrder order) {
    require(!candidates.empty(), "cur_cri: empty candidate list");
    auto emb = all_sentence_embeddings(corpus);
    return sort_by_similarity(emb, anchor, std::move(candidates), order);
}

std::vector<size_t> level_offsets(size_t n, size_t n_levels) {
    require(n_levels >= 1, "n_levels must be >= 1");
    std::vector<size_t> offsets(n_levels + 1, 0);
    size_t base = n / n_levels;
    size_t rem = n % n_levels;
    for (size_t k = 0; k < n_levels; ++k) offsets[k + 1] = offsets[k] + base + (k < rem ? 1 : 0);
    return offsets;
}

std::vector<std::vector<size_t>> cur_lev(const std::vector<size_t>& sorted, size_t n_levels) {
    auto offsets = level_offsets(sorted.size(), n_levels);
    std::vector<std::vector<size_t>> segments(n_levels);
    for (size_t k = 0; k < n_levels; ++k)
        segments[k].assign(sorted.begin() + static_cast<std::ptrdiff_t>(offsets[k]),
                           sorted.begin() + static_cast<std::ptrdiff_t>(offsets[k + 1]));
    return segments;
}

size_t cur_sche(const std::vector<std::vector<size_t>>& levels, size_t current_level, Rng& rng,
                bool* fell_back) {
    require(current_level < levels.size(), "cur_sche: level out of range");
    if (fell_back) *fell_back = false;
    for (size_t k = current_level + 1; k-- > 0;) {
        if (!levels[k].empty()) {
            if (fell_back && k != current_level) *fell_back = true;
            return levels[k][rng.uniform_int(levels[k].size())];
        }
    }
    fail("cur_sche: all levels empty");
}

size_t epoch_level(size_t epoch, size_t total_epochs, size_t n_levels) {
    require(epoch >= 1 && epoch <= total_epochs, "epoch out of range");
    auto offsets = level_offsets(total_epochs, n_levels);
    for (size_t k = 0; k < n_levels; ++k)
        if (epoch <= offsets[k + 1]) return k;
    return n_levels - 1;
}

CurriculumIndex build_curriculum(const Corpus& corpus, const PairingReport& pairing,
                                 size_t n_levels) {
    require(pairing.anchors.size() == corpus.trials.size(), "pairing report does not cover the corpus");
    auto emb = all_sentence_embeddings(corpus);

    CurriculumIndex index;
    index.corpus_hash = corpus_hash(corpus);
    index.n_levels = n_levels;
    index.anchors.resize(corpus.trials.size());
    for (size_t i = 0; i < corpus.trials.size(); ++i) {
        AnchorCurriculum& a = index.anchors[i];
        a.anchor = i;
        a.positives_sorted = sort_by_similarity(emb, i, pairing.anchors[i].positives, SortOrder::descending);
        a.negatives_sorted = sort_by_similarity(emb, i, pairing.anchors[i].negatives, SortOrder::ascending);
        a.pos_offsets = level_offsets(a.positives_sorted.size(), n_levels);
        a.neg_offsets = level_offsets(a.negatives_sorted.size(), n_levels);
    }
    return index;
}

void save_curriculum(const CurriculumIndex& index, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    append_u16(out, kVersion);
    append_u64(out, index.corpus_hash);
    append_u64(out, index.n_levels);
    append_u64(out, index.anchors.size());
    for (const AnchorCurriculum& a : index.anchors) {
        append_u64(out, a.anchor);
        append_list(out, a.positives_sorted);
        append_list(out, a.pos_offsets);
        append_list(out, a.negatives_sorted);
        append_list(out, a.neg_offsets);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    require(f.good(), "write failed: " + path);
}

CurriculumIndex load_curriculum(const std::string& path, const Corpus& corpus) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();
    require(buf.size() >= 4 && std::memcmp(buf.data(), kMagic, 4) == 0,
            path + ": bad magic (not a curriculum index)");
    U64Reader r{buf, 4, path};
    uint16_t version = r.u16();
    require(version == kVersion, path + ": unsupported curriculum version " + std::to_string(version));

    CurriculumIndex index;
    index.corpus_hash = r.u64();
    require(index.corpus_hash == corpus_hash(corpus),
            path + ": curriculum index was built for a different corpus");
    index.n_levels = r.u64();
    uint64_t count = r.u64();
    require(count == corpus.trials.size(), path + ": anchor count does not match the corpus");
    index.anchors.resize(count);
    for (uint64_t i = 0; i < count; ++i) {
        AnchorCurriculum& a = index.anchors[i];
        a.anchor = r.u64();
        require(a.anchor == i, path + ": anchors out of order");
        a.positives_sorted = r.list();
        a.pos_offsets = r.list();
        a.negatives_sorted = r.list();
        a.neg_offsets = r.list();
        require(a.pos_offsets.size() == index.n_levels + 1 && a.neg_offsets.size() == index.n_levels + 1,
                path + ": malformed level offsets");
    }
    require(r.pos == buf.size(), path + ": trailing bytes");
    return index;
}

namespace {

std::vector<std::vector<size_t>> segments_of(const std::vector<size_t>& sorted,
                                             const std::vector<size_t>& offsets) {
    std::vector<std::vector<size_t>> segs(offsets.size() - 1);
    for (size_t k = 0; k + 1 < offsets.size(); ++k)
        segs[k].assign(sorted.begin() + static_cast<std::ptrdiff_t>(offsets[k]),
                       sorted.begin() + static_cast<std::ptrdiff_t>(offsets[k + 1]));
    return segs;
}

}  // namespace

std::vector<Triple> make_triples(const Corpus& corpus, const CurriculumIndex& index,
                                 const ScheduleConfig& schedule, size_t epoch, Rng& rng) {
    schedule.validate();
    require(index.anchors.size() == corpus.trials.size(), "curriculum index does not cover the corpus");
    require(schedule.n_levels == index.n_levels, "schedule level count differs from the index");

    std::vector<Triple> triples;
    size_t fallbacks = 0;
    for (const AnchorCurriculum& a : index.anchors) {
        if (a.positives_sorted.empty() || a.negatives_sorted.empty()) continue;

        size_t level = 0;
        switch (schedule.mode) {
            case ScheduleMode::curriculum:
                level = epoch_level(epoch, schedule.total_epochs, schedule.n_levels);
                break;
            case ScheduleMode::fixed_level:
                level = schedule.fixed_level;
                break;
            case ScheduleMode::mixed_thirds:
                level = rng.uniform_int(schedule.n_levels);
                break;
            case ScheduleMode::random:
                break;
        }

        Triple t;
        t.anchor = a.anchor;
        if (schedule.mode == ScheduleMode::random) {
            t.positive = a.positives_sorted[rng.uniform_int(a.positives_sorted.size())];
            t.negative = a.negatives_sorted[rng.uniform_int(a.negatives_sorted.size())];
        } else {
            bool fb = false;
            auto pos_segs = segments_of(a.positives_sorted, a.pos_offsets);
            auto neg_segs = segments_of(a.negatives_sorted, a.neg_offsets);
            t.positive = cur_sche(pos_segs, level, rng, &fb);
            fallbacks += fb ? 1 : 0;
            t.negative = cur_sche(neg_segs, level, rng, &fb);
            fallbacks += fb ? 1 : 0;
        }

        // Every emitted triple must satisfy the candidate-set rules.
        const Trial& anc = corpus.trials[t.anchor];
        const Trial& pos = corpus.trials[t.positive];
        const Trial& neg = corpus.trials[t.negative];
        require(t.positive != t.anchor && pos.sentence_id == anc.sentence_id,
                "triple violates the positive rule");
        require(neg.sentence_id != anc.sentence_id, "triple negative shares the anchor sentence");
        triples.push_back(t);
    }
    if (fallbacks > 0)
        log_info("epoch " + std::to_string(epoch) + ": " + std::to_string(fallbacks) +
                 " level draws fell back to an easier level");
    return triples;
}

AuditResult audit(const std::vector<Triple>& triples, const Corpus& corpus) {
    require(!triples.empty(), "audit: empty triple list");
    auto emb = all_sentence_embeddings(corpus);
    AuditResult r;
    r.total = triples.size();
    for (const Triple& t : triples) {
        double sp = cosine_similarity(emb[t.anchor], emb[t.positive]);
        double sn = cosine_similarity(emb[t.anchor], emb[t.negative]);
        if (sp > sn) r.satisfied += 1;
    }
    r.fraction = static_cast<double>(r.satisfied) / static_cast<double>(r.total);
    return r;
}

}  // namespace cscl
