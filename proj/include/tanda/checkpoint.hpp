#pragma once

#include <string>

#include "tanda/model.hpp"
#include "tanda/vocab.hpp"

namespace tanda {

// Everything needed to resume or serve a model: config, token table, weights.
struct Checkpoint {
  ModelConfig config;
  Vocab vocab;
  ModelParams params;
};

// Fresh seeded model over an already-built vocabulary.
Checkpoint fresh_checkpoint(ModelConfig config, Vocab vocab, uint64_t seed);

// Versioned binary container: magic, version, JSON header (config, vocab,
// tensor manifest), row-major little-endian f32 tensor data, FNV-1a trailer.
// save(load(x)) is byte-identical to save(x).
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Digest of the serialized bytes; equal digests mean bit-identical models.
uint64_t checkpoint_digest(const Checkpoint& ckpt);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace tanda
