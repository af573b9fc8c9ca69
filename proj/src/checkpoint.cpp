#include "cscl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "cscl/common.hpp"
#include "json.hpp"

namespace cscl {

namespace {

constexpr char kMagic[4] = {'C', 'K', 'P', 'T'};
constexpr uint16_t kVersion = 1;

void append_u16(std::string& out, uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    size_t pos;
    const std::string& where;

    void need(size_t n) const { require(pos + n <= buf.size(), where + ": truncated checkpoint"); }
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
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, CheckpointKind kind, const std::string& config_json,
                     const ParamSet& params) {
    std::string out;
    out.append(kMagic, 4);
    append_u16(out, kVersion);
    append_u16(out, static_cast<uint16_t>(kind));
    require(config_json.size() <= 0xffffffffu, "config blob too large");
    append_u32(out, static_cast<uint32_t>(config_json.size()));
    out.append(config_json);
    append_u32(out, static_cast<uint32_t>(params.items.size()));
    for (const auto& [name, m] : params.items) {
        require(name.size() <= 0xffff, "parameter name too long");
        append_u16(out, static_cast<uint16_t>(name.size()));
        out.append(name);
        append_u32(out, static_cast<uint32_t>(m.rows));
        append_u32(out, static_cast<uint32_t>(m.cols));
        for (double v : m.data) {
            float f = static_cast<float>(v);
            uint32_t bits;
            std::memcpy(&bits, &f, 4);
            append_u32(out, bits);
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    require(f.good(), "write failed: " + path);
}

RawCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();
    require(buf.size() >= 4 && std::memcmp(buf.data(), kMagic, 4) == 0,
            path + ": bad magic (not a checkpoint)");
    Reader r{buf, 4, path};
    uint16_t version = r.u16();
    require(version == kVersion, path + ": unsupported checkpoint version " + std::to_string(version));

    RawCheckpoint ck;
    uint16_t kind = r.u16();
    require(kind == 1 || kind == 2, path + ": unknown checkpoint kind " + std::to_string(kind));
    ck.kind = static_cast<CheckpointKind>(kind);
    ck.config_json = r.bytes(r.u32());
    uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.bytes(r.u16());
        uint32_t rows = r.u32();
        uint32_t cols = r.u32();
        Mat m(rows, cols);
        for (size_t k = 0; k < m.size(); ++k) m.data[k] = static_cast<double>(r.f32());
        ck.params.add(name, std::move(m));
    }
    require(r.pos == buf.size(), path + ": trailing bytes");
    return ck;
}

RawCheckpoint load_checkpoint(const std::string& path, CheckpointKind expected_kind) {
    RawCheckpoint ck = load_checkpoint(path);
    require(ck.kind == expected_kind, path + ": checkpoint kind mismatch");
    return ck;
}

std::string pre_encoder_config_json(const PreEncoderConfig& c) {
    nlohmann::json j;
    j["feature_dim"] = c.feature_dim;
    j["n_layers"] = c.n_layers;
    j["n_heads"] = c.n_heads;
    j["d_model"] = c.d_model;
    j["d_ffn"] = c.d_ffn;
    j["max_seq_len"] = c.max_seq_len;
    j["dropout"] = c.dropout;
    return j.dump();
}

PreEncoderConfig pre_encoder_config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("malformed pre-encoder config: ") + e.what());
    }
    PreEncoderConfig c;
    try {
        c.feature_dim = j.at("feature_dim").get<size_t>();
        c.n_layers = j.at("n_layers").get<size_t>();
        c.n_heads = j.at("n_heads").get<size_t>();
        c.d_model = j.at("d_model").get<size_t>();
        c.d_ffn = j.at("d_ffn").get<size_t>();
        c.max_seq_len = j.at("max_seq_len").get<size_t>();
        c.dropout = j.at("dropout").get<double>();
    } catch (const nlohmann::json::exception& e) {
        fail(std::string("malformed pre-encoder config: ") + e.what());
    }
    c.validate();
    return c;
}

void save_pre_encoder(const PreEncoderModel& model, const std::string& path) {
    save_checkpoint(path, CheckpointKind::pre_encoder, pre_encoder_config_json(model.config),
                    model.params);
}

PreEncoderModel load_pre_encoder(const std::string& path) {
    RawCheckpoint ck = load_checkpoint(path, CheckpointKind::pre_encoder);
    PreEncoderConfig config = pre_encoder_config_from_json(ck.config_json);

    // Rebuild via init so the layout is authoritative, then overwrite values.
    Rng rng(0);
    PreEncoderModel model = PreEncoderModel::init(config, rng);
    require(ck.params.items.size() == model.params.items.size(), path + ": config mismatch (parameter count)");
    for (size_t i = 0; i < model.params.items.size(); ++i) {
        auto& [name, dst] = model.params.items[i];
        const auto& [got_name, src] = ck.params.items[i];
        require(got_name == name, path + ": config mismatch (unexpected parameter " + got_name + ")");
        require(src.rows == dst.rows && src.cols == dst.cols,
                path + ": config mismatch (shape of " + name + ")");
        require(src.all_finite(), path + ": non-finite values in " + name);
        dst = src;
    }
    return model;
}

}  // namespace cscl
