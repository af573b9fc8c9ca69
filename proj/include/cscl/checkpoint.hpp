#pragma once

#include <cstdint>
#include <string>

#include "cscl/encoder.hpp"
#include "cscl/optim.hpp"

namespace cscl {

/// Checkpoint kinds stored in the file header.
enum class CheckpointKind : uint16_t { pre_encoder = 1, seq2seq = 2 };

/// Raw layer: magic "CKPT", version, kind, config JSON blob, then a named
/// parameter table with little-endian f32 payloads. Parameters are kept
/// f32-representable during training, so the round-trip is bit-exact.
void save_checkpoint(const std::string& path, CheckpointKind kind, const std::string& config_json,
                     const ParamSet& params);

struct RawCheckpoint {
    CheckpointKind kind;
    std::string config_json;
    ParamSet params;
};

RawCheckpoint load_checkpoint(const std::string& path);
RawCheckpoint load_checkpoint(const std::string& path, CheckpointKind expected_kind);

/// Pre-encoder wrappers: the config travels inside the checkpoint.
void save_pre_encoder(const PreEncoderModel& model, const std::string& path);
PreEncoderModel load_pre_encoder(const std::string& path);

std::string pre_encoder_config_json(const PreEncoderConfig& config);
PreEncoderConfig pre_encoder_config_from_json(const std::string& json_text);

}  // namespace cscl
