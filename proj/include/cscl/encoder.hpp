#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cscl/mat.hpp"
#include "cscl/optim.hpp"
#include "cscl/rng.hpp"
#include "cscl/tape.hpp"

namespace cscl {

/// Transformer pre-encoder over word-level feature sequences. Pre-layernorm
/// blocks, sinusoidal positions, masked mean pooling.
struct PreEncoderConfig {
    size_t feature_dim = 64;
    size_t n_layers = 2;
    size_t n_heads = 4;
    size_t d_model = 64;
    size_t d_ffn = 256;
    size_t max_seq_len = 64;
    double dropout = 0.1;

    void validate() const;
    bool operator==(const PreEncoderConfig&) const = default;
};

struct PreEncoderModel {
    PreEncoderConfig config;
    ParamSet params;
    Mat pos_table;  // max_seq_len x d_model, fixed (not trained, not saved)

    static PreEncoderModel init(const PreEncoderConfig& config, Rng& rng);
};

/// Sinusoidal position table, deterministic in the config.
Mat sinusoidal_positions(size_t max_len, size_t d_model);

/// Parameter nodes for one tape, aligned with ParamSet order.
std::vector<NodeId> register_params(Tape& tape, const ParamSet& params);

struct EncodeNodes {
    NodeId states = -1;  // seq_len x d_model
    NodeId pooled = -1;  // 1 x d_model, mean over valid positions
};

/// Forward pass on a caller-owned tape so gradients can flow to the
/// parameters. valid flags mark real positions; padded positions are blocked
/// from attention keys and from pooling. dropout_rng enables training mode.
EncodeNodes encode_on_tape(Tape& tape, const PreEncoderModel& model,
                           const std::vector<NodeId>& param_nodes, const Mat& features,
                           const std::vector<uint8_t>& valid, Rng* dropout_rng = nullptr);

struct EncodeResult {
    Mat states;
    std::vector<double> pooled;
};

/// Evaluation-mode forward pass (no dropout, fresh private tape).
EncodeResult encode(const PreEncoderModel& model, const Mat& features,
                    const std::vector<uint8_t>* valid = nullptr);

}  // namespace cscl
