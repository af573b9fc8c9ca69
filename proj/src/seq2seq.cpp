#include "cscl/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cscl/checkpoint.hpp"
#include "cscl/common.hpp"
#include "json.hpp"

namespace cscl {

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
    require(tokens.size() >= 4, "vocabulary needs the three specials plus at least one word");
    require(tokens[0] == kPadToken && tokens[1] == kBosToken && tokens[2] == kEosToken,
            "vocabulary must start with <pad>, <bos>, <eos>");
    Vocab v;
    v.tokens = tokens;
    for (size_t i = 0; i < tokens.size(); ++i) {
        auto [it, fresh] = v.index.emplace(tokens[i], static_cast<int>(i));
        (void)it;
        require(fresh, "duplicate vocabulary token: " + tokens[i]);
    }
    return v;
}

int Vocab::id_of(const std::string& token) const {
    auto it = index.find(token);
    require(it != index.end(), "token outside vocabulary: " + token);
    return it->second;
}

Vocab build_vocab(const Corpus& train, const Corpus& valid) {
    std::set<std::string> words;
    for (const Corpus* c : {&train, &valid})
        for (const auto& t : c->trials)
            for (const auto& w : t.tokens) words.insert(w);
    for (const char* s : {kPadToken, kBosToken, kEosToken})
        require(!words.count(s), std::string("corpus word collides with special token ") + s);
    std::vector<std::string> tokens = {kPadToken, kBosToken, kEosToken};
    tokens.insert(tokens.end(), words.begin(), words.end());
    return Vocab::from_tokens(tokens);
}

void Seq2SeqConfig::validate() const {
    require(n_enc_layers >= 1 && n_dec_layers >= 1 && n_heads >= 1 && d_model >= 1 && d_ffn >= 1,
            "seq2seq config fields must be positive");
    require(d_model % n_heads == 0, "d_model must be divisible by n_heads");
    require(max_target_len >= 2, "max_target_len must be at least 2");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
    require(lr > 0.0, "lr must be positive");
    Vocab::from_tokens(vocab);
}

namespace {

std::string enc_name(size_t layer, const char* suffix) {
    return "enc" + std::to_string(layer) + "/" + suffix;
}

std::string dec_name(size_t layer, const char* suffix) {
    return "dec" + std::to_string(layer) + "/" + suffix;
}

Mat zeros(size_t r, size_t c) { return Mat(r, c); }

Mat ones_row(size_t c) {
    Mat m(1, c);
    for (auto& v : m.data) v = 1.0;
    return m;
}

void add_attention_params(ParamSet& p, const std::string& prefix, size_t d, Rng& rng) {
    // Keys take no bias: softmax is invariant to a per-row constant shift.
    p.add(prefix + "/wq", glorot_init(d, d, rng));
    p.add(prefix + "/bq", zeros(1, d));
    p.add(prefix + "/wk", glorot_init(d, d, rng));
    p.add(prefix + "/wv", glorot_init(d, d, rng));
    p.add(prefix + "/bv", zeros(1, d));
    p.add(prefix + "/wo", glorot_init(d, d, rng));
    p.add(prefix + "/bo", zeros(1, d));
}

void add_ln_params(ParamSet& p, const std::string& prefix, size_t d) {
    p.add(prefix + "/gain", ones_row(d));
    p.add(prefix + "/bias", zeros(1, d));
}

void add_ffn_params(ParamSet& p, const std::string& prefix, size_t d, size_t d_ffn, Rng& rng) {
    p.add(prefix + "/w1", glorot_init(d, d_ffn, rng));
    p.add(prefix + "/b1", zeros(1, d_ffn));
    p.add(prefix + "/w2", glorot_init(d_ffn, d, rng));
    p.add(prefix + "/b2", zeros(1, d));
}

size_t index_of(const ParamSet& params, const std::string& name) {
    for (size_t i = 0; i < params.items.size(); ++i)
        if (params.items[i].first == name) return i;
    fail("unknown parameter: " + name);
}

struct StackCtx {
    Tape& tape;
    const Seq2SeqModel& model;
    const std::vector<NodeId>& nodes;

    NodeId p(const std::string& name) const { return nodes[index_of(model.stack, name)]; }
};

/// Multi-head attention with an additive score mask (rows(q) x rows(kv)).
NodeId attention(const StackCtx& ctx, const std::string& prefix, NodeId q_in, NodeId kv_in,
                 NodeId mask) {
    Tape& t = ctx.tape;
    const size_t d = ctx.model.config.d_model;
    const size_t n_heads = ctx.model.config.n_heads;
    const size_t d_head = d / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));

    NodeId q = t.add_rowvec(t.matmul(q_in, ctx.p(prefix + "/wq")), ctx.p(prefix + "/bq"));
    NodeId k = t.matmul(kv_in, ctx.p(prefix + "/wk"));
    NodeId v = t.add_rowvec(t.matmul(kv_in, ctx.p(prefix + "/wv")), ctx.p(prefix + "/bv"));

    std::vector<NodeId> heads;
    heads.reserve(n_heads);
    for (size_t hd = 0; hd < n_heads; ++hd) {
        NodeId qh = t.slice_cols(q, hd * d_head, (hd + 1) * d_head);
        NodeId kh = t.slice_cols(k, hd * d_head, (hd + 1) * d_head);
        NodeId vh = t.slice_cols(v, hd * d_head, (hd + 1) * d_head);
        NodeId scores = t.add(t.scale(t.matmul(qh, t.transpose(kh)), scale), mask);
        heads.push_back(t.matmul(t.softmax_rows(scores), vh));
    }
    return t.add_rowvec(t.matmul(t.concat_cols(heads), ctx.p(prefix + "/wo")),
                        ctx.p(prefix + "/bo"));
}

NodeId ffn(const StackCtx& ctx, const std::string& prefix, NodeId x) {
    Tape& t = ctx.tape;
    return t.add_rowvec(
        t.matmul(t.gelu(t.add_rowvec(t.matmul(x, ctx.p(prefix + "/w1")), ctx.p(prefix + "/b1"))),
                 ctx.p(prefix + "/w2")),
        ctx.p(prefix + "/b2"));
}

NodeId maybe_dropout(const StackCtx& ctx, NodeId x, Rng* rng) {
    if (rng && ctx.model.config.dropout > 0.0)
        return ctx.tape.dropout(x, ctx.model.config.dropout, *rng);
    return x;
}

NodeId layernorm(const StackCtx& ctx, const std::string& prefix, NodeId x) {
    return ctx.tape.layernorm_rows(x, ctx.p(prefix + "/gain"), ctx.p(prefix + "/bias"));
}

Mat source_key_mask(const std::vector<uint8_t>& src_valid, size_t q_rows) {
    Mat m(q_rows, src_valid.size());
    for (size_t i = 0; i < q_rows; ++i)
        for (size_t j = 0; j < src_valid.size(); ++j) m.at(i, j) = src_valid[j] ? 0.0 : -1e30;
    return m;
}

/// Encoder stack over arbitrary input states.
NodeId encoder_stack(const StackCtx& ctx, NodeId h, const std::vector<uint8_t>& src_valid,
                     Rng* dropout_rng) {
    Tape& t = ctx.tape;
    NodeId mask = t.constant(source_key_mask(src_valid, src_valid.size()));
    for (size_t l = 0; l < ctx.model.config.n_enc_layers; ++l) {
        NodeId a = layernorm(ctx, enc_name(l, "ln1"), h);
        NodeId attn = attention(ctx, enc_name(l, "attn"), a, a, mask);
        h = t.add(h, maybe_dropout(ctx, attn, dropout_rng));
        NodeId b = layernorm(ctx, enc_name(l, "ln2"), h);
        h = t.add(h, maybe_dropout(ctx, ffn(ctx, enc_name(l, "ffn"), b), dropout_rng));
    }
    return layernorm(ctx, "enc_final", h);
}

NodeId decoder_stack(const StackCtx& ctx, const std::vector<int>& input_ids, NodeId memory,
                     const std::vector<uint8_t>& src_valid, Rng* dropout_rng) {
    Tape& t = ctx.tape;
    const Seq2SeqModel& model = ctx.model;
    const size_t T = input_ids.size();
    require(T >= 1, "decoder needs at least one input token");
    require(T <= model.config.max_target_len, "target longer than max_target_len");

    std::vector<size_t> rows;
    rows.reserve(T);
    for (int id : input_ids) {
        require(id >= 0 && static_cast<size_t>(id) < model.vocab.size(), "token id out of range");
        rows.push_back(static_cast<size_t>(id));
    }

    Mat pos(T, model.config.d_model);
    for (size_t i = 0; i < T; ++i)
        for (size_t j = 0; j < model.config.d_model; ++j) pos.at(i, j) = model.target_pos.at(i, j);

    NodeId h = t.add(t.gather_rows(ctx.p("embed/table"), rows), t.constant(pos));

    Mat causal(T, T);
    for (size_t i = 0; i < T; ++i)
        for (size_t j = 0; j < T; ++j) causal.at(i, j) = j <= i ? 0.0 : -1e30;
    NodeId causal_mask = t.constant(causal);
    NodeId cross_mask = t.constant(source_key_mask(src_valid, T));

    for (size_t l = 0; l < model.config.n_dec_layers; ++l) {
        NodeId a = layernorm(ctx, dec_name(l, "ln1"), h);
        h = t.add(h, maybe_dropout(ctx, attention(ctx, dec_name(l, "self"), a, a, causal_mask),
                                   dropout_rng));
        NodeId b = layernorm(ctx, dec_name(l, "ln2"), h);
        h = t.add(h, maybe_dropout(ctx, attention(ctx, dec_name(l, "cross"), b, memory, cross_mask),
                                   dropout_rng));
        NodeId c = layernorm(ctx, dec_name(l, "ln3"), h);
        h = t.add(h, maybe_dropout(ctx, ffn(ctx, dec_name(l, "ffn"), c), dropout_rng));
    }
    h = layernorm(ctx, "dec_final", h);
    return t.matmul(h, t.transpose(ctx.p("embed/table")));
}

}  // namespace

Seq2SeqModel Seq2SeqModel::init(const Seq2SeqConfig& config, const PreEncoderModel& pre,
                                Rng& rng) {
    config.validate();
    require(pre.config.d_model == config.d_model,
            "pre-encoder d_model must match the seq2seq d_model");
    Seq2SeqModel m;
    m.config = config;
    m.pre = pre;
    m.target_pos = sinusoidal_positions(config.max_target_len, config.d_model);
    m.vocab = Vocab::from_tokens(config.vocab);

    const size_t d = config.d_model;
    m.stack.add("embed/table", glorot_init(m.vocab.size(), d, rng));
    for (size_t l = 0; l < config.n_enc_layers; ++l) {
        add_ln_params(m.stack, enc_name(l, "ln1"), d);
        add_attention_params(m.stack, enc_name(l, "attn"), d, rng);
        add_ln_params(m.stack, enc_name(l, "ln2"), d);
        add_ffn_params(m.stack, enc_name(l, "ffn"), d, config.d_ffn, rng);
    }
    add_ln_params(m.stack, "enc_final", d);
    for (size_t l = 0; l < config.n_dec_layers; ++l) {
        add_ln_params(m.stack, dec_name(l, "ln1"), d);
        add_attention_params(m.stack, dec_name(l, "self"), d, rng);
        add_ln_params(m.stack, dec_name(l, "ln2"), d);
        add_attention_params(m.stack, dec_name(l, "cross"), d, rng);
        add_ln_params(m.stack, dec_name(l, "ln3"), d);
        add_ffn_params(m.stack, dec_name(l, "ffn"), d, config.d_ffn, rng);
    }
    add_ln_params(m.stack, "dec_final", d);
    return m;
}

NodeId encode_source_on_tape(Tape& tape, const Seq2SeqModel& model,
                             const std::vector<NodeId>& pre_nodes,
                             const std::vector<NodeId>& stack_nodes, const Mat& features,
                             const std::vector<uint8_t>& src_valid, Rng* dropout_rng) {
    EncodeNodes enc = encode_on_tape(tape, model.pre, pre_nodes, features, src_valid, dropout_rng);
    StackCtx ctx{tape, model, stack_nodes};
    return encoder_stack(ctx, enc.states, src_valid, dropout_rng);
}

NodeId decoder_logits_on_tape(Tape& tape, const Seq2SeqModel& model,
                              const std::vector<NodeId>& stack_nodes, NodeId memory,
                              const std::vector<int>& input_ids,
                              const std::vector<uint8_t>& src_valid, Rng* dropout_rng) {
    StackCtx ctx{tape, model, stack_nodes};
    return decoder_stack(ctx, input_ids, memory, src_valid, dropout_rng);
}

NodeId sequence_ce_on_tape(Tape& tape, NodeId logits, const std::vector<int>& label_ids) {
    const Mat& l = tape.value(logits);
    require(label_ids.size() == l.rows, "one label per logit row");
    std::vector<size_t> cols;
    cols.reserve(label_ids.size());
    for (int id : label_ids) {
        require(id >= 0 && static_cast<size_t>(id) < l.cols, "label id out of range");
        cols.push_back(static_cast<size_t>(id));
    }
    NodeId lse = tape.logsumexp_rows(logits);
    NodeId picked = tape.select_cols_per_row(logits, cols);
    return tape.sum_all(tape.add(lse, tape.scale(picked, -1.0)));
}

std::vector<int> target_ids(const Vocab& vocab, const std::vector<std::string>& words,
                            size_t max_target_len) {
    require(!words.empty(), "cannot build a target from an empty sentence");
    std::vector<int> ids;
    ids.reserve(words.size() + 1);
    for (const auto& w : words) ids.push_back(vocab.id_of(w));
    ids.push_back(vocab.eos_id);
    require(ids.size() <= max_target_len, "target longer than max_target_len");
    return ids;
}

namespace {

std::vector<int> shifted_right(const std::vector<int>& labels, int bos_id) {
    std::vector<int> input;
    input.reserve(labels.size());
    input.push_back(bos_id);
    input.insert(input.end(), labels.begin(), labels.end() - 1);
    return input;
}

Mat eval_logits(const Seq2SeqModel& model, const Mat& features, const std::vector<int>& input_ids,
                const std::vector<uint8_t>* src_valid) {
    std::vector<uint8_t> all_valid;
    if (!src_valid) {
        all_valid.assign(features.rows, 1);
        src_valid = &all_valid;
    }
    Tape tape;
    auto pre_nodes = register_params(tape, model.pre.params);
    auto stack_nodes = register_params(tape, model.stack);
    NodeId memory =
        encode_source_on_tape(tape, model, pre_nodes, stack_nodes, features, *src_valid, nullptr);
    NodeId logits =
        decoder_logits_on_tape(tape, model, stack_nodes, memory, input_ids, *src_valid, nullptr);
    return tape.value(logits);
}

double ce_from_logits(const Mat& logits, const std::vector<int>& labels) {
    double total = 0;
    for (size_t i = 0; i < logits.rows; ++i) {
        double m = logits.at(i, 0);
        for (size_t j = 1; j < logits.cols; ++j) m = std::max(m, logits.at(i, j));
        double sum = 0;
        for (size_t j = 0; j < logits.cols; ++j) sum += std::exp(logits.at(i, j) - m);
        total += m + std::log(sum) - logits.at(i, static_cast<size_t>(labels[i]));
    }
    return total;
}

}  // namespace

Mat teacher_logits(const Seq2SeqModel& model, const Mat& features,
                   const std::vector<int>& input_ids, const std::vector<uint8_t>* src_valid) {
    return eval_logits(model, features, input_ids, src_valid);
}

int argmax_step(const std::vector<double>& logits, int pad_id) {
    require(!logits.empty(), "empty logit row");
    int best = -1;
    for (size_t j = 0; j < logits.size(); ++j) {
        if (static_cast<int>(j) == pad_id) continue;
        if (best < 0 || logits[j] > logits[static_cast<size_t>(best)]) best = static_cast<int>(j);
    }
    require(best >= 0, "no eligible token to emit");
    return best;
}

std::vector<std::string> generate(const Seq2SeqModel& model, const Mat& features,
                                  const std::vector<uint8_t>* src_valid) {
    std::vector<int> ids = {model.vocab.bos_id};
    std::vector<std::string> words;
    while (ids.size() < model.config.max_target_len) {
        Mat logits = eval_logits(model, features, ids, src_valid);
        std::vector<double> row(logits.cols);
        for (size_t j = 0; j < logits.cols; ++j) row[j] = logits.at(logits.rows - 1, j);
        int tok = argmax_step(row, model.vocab.pad_id);
        if (tok == model.vocab.eos_id) break;
        words.push_back(model.vocab.tokens[static_cast<size_t>(tok)]);
        ids.push_back(tok);
    }
    return words;
}

namespace {

double run_epoch(Seq2SeqModel& model, const Corpus& train,
                 const std::vector<std::vector<int>>& labels, size_t batch_size, bool update_pre,
                 AdamState& pre_state, AdamState& stack_state, Rng& shuffle_rng, Rng& dropout_root,
                 size_t epoch, bool autoencode) {
    std::vector<size_t> order(train.trials.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    double epoch_ce = 0;
    size_t epoch_tokens = 0;
    size_t n_batches = (order.size() + batch_size - 1) / batch_size;
    for (size_t b = 0; b < n_batches; ++b) {
        size_t lo = b * batch_size;
        size_t hi = std::min(order.size(), lo + batch_size);
        Rng dropout_rng = dropout_root.derive(2000000 + epoch * 4096 + b);

        Tape tape;
        auto pre_nodes = register_params(tape, model.pre.params);
        auto stack_nodes = register_params(tape, model.stack);
        StackCtx ctx{tape, model, stack_nodes};

        NodeId total = -1;
        size_t tokens = 0;
        for (size_t k = lo; k < hi; ++k) {
            const Trial& trial = train.trials[order[k]];
            const std::vector<int>& lab = labels[order[k]];
            std::vector<int> input = shifted_right(lab, model.vocab.bos_id);

            NodeId memory;
            std::vector<uint8_t> src_valid;
            if (autoencode) {
                // Reconstruction warm-up: the encoder stack reads the target's
                // own embeddings instead of the pre-encoder output.
                std::vector<size_t> rows;
                for (int id : lab) rows.push_back(static_cast<size_t>(id));
                Mat pos(lab.size(), model.config.d_model);
                for (size_t i = 0; i < lab.size(); ++i)
                    for (size_t j = 0; j < model.config.d_model; ++j)
                        pos.at(i, j) = model.target_pos.at(i, j);
                NodeId h = tape.add(tape.gather_rows(ctx.p("embed/table"), rows),
                                    tape.constant(pos));
                src_valid.assign(lab.size(), 1);
                memory = encoder_stack(ctx, h, src_valid, &dropout_rng);
            } else {
                src_valid.assign(trial.features.rows, 1);
                memory = encode_source_on_tape(tape, model, pre_nodes, stack_nodes, trial.features,
                                               src_valid, &dropout_rng);
            }
            NodeId logits =
                decoder_logits_on_tape(tape, model, stack_nodes, memory, input, src_valid,
                                       &dropout_rng);
            NodeId ce = sequence_ce_on_tape(tape, logits, lab);
            total = total < 0 ? ce : tape.add(total, ce);
            tokens += lab.size();
        }
        NodeId loss = tape.scale(total, 1.0 / static_cast<double>(tokens));
        tape.backward(loss);

        auto grads_for = [&](const ParamSet& params, const std::vector<NodeId>& nodes) {
            std::vector<Mat> grads;
            grads.reserve(nodes.size());
            for (size_t i = 0; i < nodes.size(); ++i) {
                Mat g = tape.grad(nodes[i]);
                if (g.size() == 0) g = Mat(params.items[i].second.rows, params.items[i].second.cols);
                grads.push_back(std::move(g));
            }
            return grads;
        };
        if (update_pre) {
            auto pre_grads = grads_for(model.pre.params, pre_nodes);
            adam_step(model.pre.params, pre_grads, pre_state);
            for (auto& [name, m] : model.pre.params.items) m.quantize_f32();
        }
        auto stack_grads = grads_for(model.stack, stack_nodes);
        adam_step(model.stack, stack_grads, stack_state);
        for (auto& [name, m] : model.stack.items) m.quantize_f32();

        epoch_ce += tape.value(loss).at(0, 0) * static_cast<double>(tokens);
        epoch_tokens += tokens;
    }
    return epoch_ce / static_cast<double>(epoch_tokens);
}

std::vector<std::vector<int>> corpus_labels(const Seq2SeqModel& model, const Corpus& corpus) {
    std::vector<std::vector<int>> labels;
    labels.reserve(corpus.trials.size());
    for (const auto& t : corpus.trials)
        labels.push_back(target_ids(model.vocab, t.tokens, model.config.max_target_len));
    return labels;
}

}  // namespace

std::vector<FinetuneEpoch> finetune(Seq2SeqModel& model, const Corpus& train, const Corpus& valid,
                                    size_t epochs, size_t batch_size) {
    model.config.validate();
    require(epochs >= 1, "epochs must be positive");
    require(batch_size >= 1, "batch_size must be positive");
    require(!train.trials.empty(), "training corpus is empty");
    auto labels = corpus_labels(model, train);
    corpus_labels(model, valid);  // surface unknown-token errors up front

    Rng root(model.config.seed);
    AdamState pre_state, stack_state;
    pre_state.lr = stack_state.lr = model.config.lr;
    pre_state.init_for(model.pre.params);
    stack_state.init_for(model.stack);

    std::vector<FinetuneEpoch> history;
    for (size_t e = 1; e <= epochs; ++e) {
        Rng shuffle_rng = root.derive(e);
        double train_loss = run_epoch(model, train, labels, batch_size, true, pre_state,
                                      stack_state, shuffle_rng, root, e, false);
        FinetuneEpoch h;
        h.epoch = e;
        h.train_loss = train_loss;
        h.valid_loss = valid.trials.empty() ? 0.0 : corpus_ce(model, valid);
        history.push_back(h);
        log_info("finetune epoch " + std::to_string(e) + " train loss " +
                 std::to_string(h.train_loss) + " valid loss " + std::to_string(h.valid_loss));
    }
    return history;
}

std::vector<FinetuneEpoch> warmup_autoencode(Seq2SeqModel& model, const Corpus& train,
                                             size_t epochs, size_t batch_size) {
    model.config.validate();
    require(epochs >= 1, "epochs must be positive");
    require(batch_size >= 1, "batch_size must be positive");
    require(!train.trials.empty(), "training corpus is empty");
    auto labels = corpus_labels(model, train);

    Rng root(model.config.seed + 0x5eed);
    AdamState pre_state, stack_state;
    stack_state.lr = model.config.lr;
    stack_state.init_for(model.stack);

    std::vector<FinetuneEpoch> history;
    for (size_t e = 1; e <= epochs; ++e) {
        Rng shuffle_rng = root.derive(e);
        double train_loss = run_epoch(model, train, labels, batch_size, false, pre_state,
                                      stack_state, shuffle_rng, root, e, true);
        FinetuneEpoch h;
        h.epoch = e;
        h.train_loss = train_loss;
        h.valid_loss = 0.0;
        history.push_back(h);
        log_info("warmup epoch " + std::to_string(e) + " train loss " +
                 std::to_string(h.train_loss));
    }
    return history;
}

double token_accuracy(const Seq2SeqModel& model, const Corpus& corpus) {
    require(!corpus.trials.empty(), "corpus is empty");
    size_t hits = 0, total = 0;
    for (const auto& trial : corpus.trials) {
        auto lab = target_ids(model.vocab, trial.tokens, model.config.max_target_len);
        Mat logits = teacher_logits(model, trial.features, shifted_right(lab, model.vocab.bos_id));
        for (size_t i = 0; i < logits.rows; ++i) {
            size_t best = 0;
            for (size_t j = 1; j < logits.cols; ++j)
                if (logits.at(i, j) > logits.at(i, best)) best = j;
            hits += best == static_cast<size_t>(lab[i]) ? 1 : 0;
            ++total;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

double corpus_ce(const Seq2SeqModel& model, const Corpus& corpus) {
    require(!corpus.trials.empty(), "corpus is empty");
    double total = 0;
    size_t tokens = 0;
    for (const auto& trial : corpus.trials) {
        auto lab = target_ids(model.vocab, trial.tokens, model.config.max_target_len);
        Mat logits = teacher_logits(model, trial.features, shifted_right(lab, model.vocab.bos_id));
        total += ce_from_logits(logits, lab);
        tokens += lab.size();
    }
    return total / static_cast<double>(tokens);
}

std::string seq2seq_config_json(const Seq2SeqConfig& config) {
    nlohmann::json j;
    j["n_enc_layers"] = config.n_enc_layers;
    j["n_dec_layers"] = config.n_dec_layers;
    j["n_heads"] = config.n_heads;
    j["d_model"] = config.d_model;
    j["d_ffn"] = config.d_ffn;
    j["max_target_len"] = config.max_target_len;
    j["dropout"] = config.dropout;
    j["lr"] = config.lr;
    j["seed"] = config.seed;
    j["vocab"] = config.vocab;
    return j.dump();
}

Seq2SeqConfig seq2seq_config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Seq2SeqConfig c;
    c.n_enc_layers = j.at("n_enc_layers").get<size_t>();
    c.n_dec_layers = j.at("n_dec_layers").get<size_t>();
    c.n_heads = j.at("n_heads").get<size_t>();
    c.d_model = j.at("d_model").get<size_t>();
    c.d_ffn = j.at("d_ffn").get<size_t>();
    c.max_target_len = j.at("max_target_len").get<size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.lr = j.at("lr").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.vocab = j.at("vocab").get<std::vector<std::string>>();
    c.validate();
    return c;
}

void save_seq2seq(const Seq2SeqModel& model, const std::string& path) {
    nlohmann::json j;
    j["seq2seq"] = nlohmann::json::parse(seq2seq_config_json(model.config));
    j["pre"] = nlohmann::json::parse(pre_encoder_config_json(model.pre.config));

    ParamSet combined;
    for (const auto& [name, m] : model.pre.params.items) combined.add("pre/" + name, m);
    for (const auto& [name, m] : model.stack.items) combined.add(name, m);
    save_checkpoint(path, CheckpointKind::seq2seq, j.dump(), combined);
}

Seq2SeqModel load_seq2seq(const std::string& path) {
    RawCheckpoint raw = load_checkpoint(path, CheckpointKind::seq2seq);
    nlohmann::json j = nlohmann::json::parse(raw.config_json);
    Seq2SeqConfig config = seq2seq_config_from_json(j.at("seq2seq").dump());
    PreEncoderConfig pre_config = pre_encoder_config_from_json(j.at("pre").dump());

    Rng rng(0);
    PreEncoderModel pre = PreEncoderModel::init(pre_config, rng);
    Seq2SeqModel model = Seq2SeqModel::init(config, pre, rng);

    size_t expected = model.pre.params.items.size() + model.stack.items.size();
    require(raw.params.items.size() == expected, "checkpoint config mismatch: parameter count");
    size_t cursor = 0;
    auto take = [&](const std::string& name, Mat& dst) {
        const auto& [got_name, got] = raw.params.items[cursor++];
        require(got_name == name, "checkpoint config mismatch: expected parameter " + name);
        require(got.rows == dst.rows && got.cols == dst.cols,
                "checkpoint config mismatch: shape of " + name);
        require(got.all_finite(), "non-finite parameter in checkpoint: " + name);
        dst = got;
    };
    for (auto& [name, m] : model.pre.params.items) take("pre/" + name, m);
    for (auto& [name, m] : model.stack.items) take(name, m);
    return model;
}

}  // namespace cscl
