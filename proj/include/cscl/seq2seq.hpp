#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cscl/corpus.hpp"
#include "cscl/encoder.hpp"
#include "cscl/mat.hpp"
#include "cscl/optim.hpp"
#include "cscl/rng.hpp"
#include "cscl/tape.hpp"

namespace cscl {

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";

/// Closed word-level vocabulary. Specials occupy the first three ids.
struct Vocab {
    std::vector<std::string> tokens;
    std::map<std::string, int> index;
    int pad_id = 0;
    int bos_id = 1;
    int eos_id = 2;

    static Vocab from_tokens(const std::vector<std::string>& tokens);
    int id_of(const std::string& token) const;  // unknown token -> error
    size_t size() const { return tokens.size(); }
};

/// Specials first, then every distinct corpus word in lexicographic order.
Vocab build_vocab(const Corpus& train, const Corpus& valid);

struct Seq2SeqConfig {
    size_t n_enc_layers = 1;
    size_t n_dec_layers = 1;
    size_t n_heads = 4;
    size_t d_model = 64;
    size_t d_ffn = 256;
    size_t max_target_len = 16;
    double dropout = 0.1;
    double lr = 1e-3;
    uint64_t seed = 1;
    std::vector<std::string> vocab;  // includes the three specials

    void validate() const;
    bool operator==(const Seq2SeqConfig&) const = default;
};

/// Full translation model: the pre-encoder feeds extra encoder layers whose
/// output the decoder cross-attends to. The token embedding doubles as the
/// output projection.
struct Seq2SeqModel {
    Seq2SeqConfig config;
    PreEncoderModel pre;
    ParamSet stack;
    Mat target_pos;  // max_target_len x d_model, fixed
    Vocab vocab;

    static Seq2SeqModel init(const Seq2SeqConfig& config, const PreEncoderModel& pre, Rng& rng);
};

/// Encoder-side forward: pre-encoder states through the extra encoder layers.
NodeId encode_source_on_tape(Tape& tape, const Seq2SeqModel& model,
                             const std::vector<NodeId>& pre_nodes,
                             const std::vector<NodeId>& stack_nodes, const Mat& features,
                             const std::vector<uint8_t>& src_valid, Rng* dropout_rng);

/// Decoder forward over teacher inputs; returns logits (len(input_ids) x V).
/// Causal self-attention, cross-attention onto memory with padded source
/// columns blocked.
NodeId decoder_logits_on_tape(Tape& tape, const Seq2SeqModel& model,
                              const std::vector<NodeId>& stack_nodes, NodeId memory,
                              const std::vector<int>& input_ids,
                              const std::vector<uint8_t>& src_valid, Rng* dropout_rng);

/// Teacher-forced cross-entropy over one pair: input is the target shifted
/// right from BOS, labels are the target itself (EOS already appended).
/// Returns the summed loss node; token count is labels.size().
NodeId sequence_ce_on_tape(Tape& tape, NodeId logits, const std::vector<int>& label_ids);

/// Target token ids for a trial: words mapped through the vocabulary with EOS
/// appended. Errors on unknown words or overlong targets.
std::vector<int> target_ids(const Vocab& vocab, const std::vector<std::string>& words,
                            size_t max_target_len);

/// Evaluation-mode decoder logits for explicit inputs (no dropout).
Mat teacher_logits(const Seq2SeqModel& model, const Mat& features,
                   const std::vector<int>& input_ids, const std::vector<uint8_t>* src_valid = nullptr);

/// One greedy step: argmax over a logit row with PAD blocked and ties broken
/// toward the lowest id.
int argmax_step(const std::vector<double>& logits, int pad_id);

/// Greedy decode from BOS until EOS or the length cap; emits words only.
std::vector<std::string> generate(const Seq2SeqModel& model, const Mat& features,
                                  const std::vector<uint8_t>* src_valid = nullptr);

struct FinetuneEpoch {
    size_t epoch = 0;
    double train_loss = 0.0;  // mean per token
    double valid_loss = 0.0;
};

/// Stage-2 training: teacher-forced cross-entropy over all pairs, updating
/// every parameter including the pre-encoder.
std::vector<FinetuneEpoch> finetune(Seq2SeqModel& model, const Corpus& train, const Corpus& valid,
                                    size_t epochs, size_t batch_size);

/// Optional warm-up that trains only the stack: the decoder reconstructs a
/// token sequence from the encoder stack run over its own embeddings.
std::vector<FinetuneEpoch> warmup_autoencode(Seq2SeqModel& model, const Corpus& train,
                                             size_t epochs, size_t batch_size);

/// Teacher-forced argmax accuracy over every label position in the corpus.
double token_accuracy(const Seq2SeqModel& model, const Corpus& corpus);

/// Mean per-token teacher-forced cross-entropy over a corpus (evaluation mode).
double corpus_ce(const Seq2SeqModel& model, const Corpus& corpus);

void save_seq2seq(const Seq2SeqModel& model, const std::string& path);
Seq2SeqModel load_seq2seq(const std::string& path);
std::string seq2seq_config_json(const Seq2SeqConfig& config);
Seq2SeqConfig seq2seq_config_from_json(const std::string& text);

}  // namespace cscl
