#include "cscl/encoder.hpp"

#include <cmath>
#include <string>

#include "cscl/common.hpp"

namespace cscl {

namespace {

std::string layer_name(size_t layer, const char* suffix) {
    return "layer" + std::to_string(layer) + "/" + suffix;
}

Mat zeros(size_t r, size_t c) { return Mat(r, c); }

Mat ones_row(size_t c) {
    Mat m(1, c);
    for (auto& v : m.data) v = 1.0;
    return m;
}

}  // namespace

void PreEncoderConfig::validate() const {
    require(feature_dim >= 1 && n_layers >= 1 && n_heads >= 1 && d_model >= 1 && d_ffn >= 1 &&
                max_seq_len >= 1,
            "pre-encoder config fields must be positive");
    require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
}

Mat sinusoidal_positions(size_t max_len, size_t d_model) {
    Mat table(max_len, d_model);
    for (size_t p = 0; p < max_len; ++p) {
        for (size_t j = 0; j < d_model; ++j) {
            double exponent = static_cast<double>(2 * (j / 2)) / static_cast<double>(d_model);
            double angle = static_cast<double>(p) / std::pow(10000.0, exponent);
            table.at(p, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return table;
}

PreEncoderModel PreEncoderModel::init(const PreEncoderConfig& config, Rng& rng) {
    config.validate();
    PreEncoderModel m;
    m.config = config;
    m.pos_table = sinusoidal_positions(config.max_seq_len, config.d_model);

    m.params.add("input_proj/w", glorot_init(config.feature_dim, config.d_model, rng));
    m.params.add("input_proj/b", zeros(1, config.d_model));
    for (size_t l = 0; l < config.n_layers; ++l) {
        m.params.add(layer_name(l, "ln1/gain"), ones_row(config.d_model));
        m.params.add(layer_name(l, "ln1/bias"), zeros(1, config.d_model));
        m.params.add(layer_name(l, "attn/wq"), glorot_init(config.d_model, config.d_model, rng));
        m.params.add(layer_name(l, "attn/bq"), zeros(1, config.d_model));
        // Keys take no bias: softmax is invariant to a per-row constant shift,
        // so a key bias could never influence the output.
        m.params.add(layer_name(l, "attn/wk"), glorot_init(config.d_model, config.d_model, rng));
        m.params.add(layer_name(l, "attn/wv"), glorot_init(config.d_model, config.d_model, rng));
        m.params.add(layer_name(l, "attn/bv"), zeros(1, config.d_model));
        m.params.add(layer_name(l, "attn/wo"), glorot_init(config.d_model, config.d_model, rng));
        m.params.add(layer_name(l, "attn/bo"), zeros(1, config.d_model));
        m.params.add(layer_name(l, "ln2/gain"), ones_row(config.d_model));
        m.params.add(layer_name(l, "ln2/bias"), zeros(1, config.d_model));
        m.params.add(layer_name(l, "ffn/w1"), glorot_init(config.d_model, config.d_ffn, rng));
        m.params.add(layer_name(l, "ffn/b1"), zeros(1, config.d_ffn));
        m.params.add(layer_name(l, "ffn/w2"), glorot_init(config.d_ffn, config.d_model, rng));
        m.params.add(layer_name(l, "ffn/b2"), zeros(1, config.d_model));
    }
    m.params.add("final_ln/gain", ones_row(config.d_model));
    m.params.add("final_ln/bias", zeros(1, config.d_model));
    return m;
}

std::vector<NodeId> register_params(Tape& tape, const ParamSet& params) {
    std::vector<NodeId> ids;
    ids.reserve(params.items.size());
    for (const auto& [name, m] : params.items) ids.push_back(tape.param(m));
    return ids;
}

namespace {

size_t index_of(const ParamSet& params, const std::string& name) {
    for (size_t i = 0; i < params.items.size(); ++i)
        if (params.items[i].first == name) return i;
    fail("unknown parameter: " + name);
}

}  // namespace

EncodeNodes encode_on_tape(Tape& tape, const PreEncoderModel& model,
                           const std::vector<NodeId>& param_nodes, const Mat& features,
                           const std::vector<uint8_t>& valid, Rng* dropout_rng) {
    const PreEncoderConfig& cfg = model.config;
    const size_t len = features.rows;
    require(len >= 1, "cannot encode an empty sequence");
    require(len <= cfg.max_seq_len, "sequence longer than max_seq_len");
    require(features.cols == cfg.feature_dim, "feature width does not match the model");
    require(valid.size() == len, "validity mask length mismatch");
    require(param_nodes.size() == model.params.items.size(), "parameter nodes do not match the model");

    size_t n_valid = 0;
    for (uint8_t v : valid) n_valid += v ? 1 : 0;
    require(n_valid >= 1, "all positions are masked out");

    auto p = [&](const std::string& name) { return param_nodes[index_of(model.params, name)]; };

    // Input projection plus positional rows.
    Mat pos(len, cfg.d_model);
    for (size_t i = 0; i < len; ++i)
        for (size_t j = 0; j < cfg.d_model; ++j) pos.at(i, j) = model.pos_table.at(i, j);
    NodeId h = tape.add(tape.add_rowvec(tape.matmul(tape.constant(features), p("input_proj/w")),
                                        p("input_proj/b")),
                        tape.constant(pos));

    // Additive key mask: padded key columns get a large negative score.
    Mat key_mask(len, len);
    for (size_t i = 0; i < len; ++i)
        for (size_t j = 0; j < len; ++j) key_mask.at(i, j) = valid[j] ? 0.0 : -1e30;
    NodeId mask_node = tape.constant(key_mask);

    const size_t d_head = cfg.d_model / cfg.n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));
    for (size_t l = 0; l < cfg.n_layers; ++l) {
        auto lp = [&](const char* suffix) { return p(layer_name(l, suffix)); };

        NodeId a = tape.layernorm_rows(h, lp("ln1/gain"), lp("ln1/bias"));
        NodeId q = tape.add_rowvec(tape.matmul(a, lp("attn/wq")), lp("attn/bq"));
        NodeId k = tape.matmul(a, lp("attn/wk"));
        NodeId v = tape.add_rowvec(tape.matmul(a, lp("attn/wv")), lp("attn/bv"));

        std::vector<NodeId> heads;
        heads.reserve(cfg.n_heads);
        for (size_t hd = 0; hd < cfg.n_heads; ++hd) {
            NodeId qh = tape.slice_cols(q, hd * d_head, (hd + 1) * d_head);
            NodeId kh = tape.slice_cols(k, hd * d_head, (hd + 1) * d_head);
            NodeId vh = tape.slice_cols(v, hd * d_head, (hd + 1) * d_head);
            NodeId scores = tape.add(tape.scale(tape.matmul(qh, tape.transpose(kh)), scale), mask_node);
            heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
        }
        NodeId attn = tape.add_rowvec(tape.matmul(tape.concat_cols(heads), lp("attn/wo")),
                                      lp("attn/bo"));
        if (dropout_rng && cfg.dropout > 0.0) attn = tape.dropout(attn, cfg.dropout, *dropout_rng);
        h = tape.add(h, attn);

        NodeId b = tape.layernorm_rows(h, lp("ln2/gain"), lp("ln2/bias"));
        NodeId f = tape.add_rowvec(
            tape.matmul(tape.gelu(tape.add_rowvec(tape.matmul(b, lp("ffn/w1")), lp("ffn/b1"))),
                        lp("ffn/w2")),
            lp("ffn/b2"));
        if (dropout_rng && cfg.dropout > 0.0) f = tape.dropout(f, cfg.dropout, *dropout_rng);
        h = tape.add(h, f);
    }
    h = tape.layernorm_rows(h, p("final_ln/gain"), p("final_ln/bias"));

    // Mean over valid positions as a constant-weight matmul row.
    Mat pool(1, len);
    for (size_t i = 0; i < len; ++i)
        pool.at(0, i) = valid[i] ? 1.0 / static_cast<double>(n_valid) : 0.0;

    EncodeNodes out;
    out.states = h;
    out.pooled = tape.matmul(tape.constant(pool), h);
    return out;
}

EncodeResult encode(const PreEncoderModel& model, const Mat& features,
                    const std::vector<uint8_t>* valid) {
    std::vector<uint8_t> all_valid;
    if (!valid) {
        all_valid.assign(features.rows, 1);
        valid = &all_valid;
    }
    Tape tape;
    auto nodes = register_params(tape, model.params);
    EncodeNodes enc = encode_on_tape(tape, model, nodes, features, *valid, nullptr);
    EncodeResult r;
    r.states = tape.value(enc.states);
    const Mat& pooled = tape.value(enc.pooled);
    r.pooled.assign(pooled.data.begin(), pooled.data.end());
    return r;
}

}  // namespace cscl
