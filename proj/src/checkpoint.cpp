#include "tanda/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tanda/errors.hpp"
#include "tanda/hash.hpp"

namespace tanda {

namespace {

constexpr char kMagic[8] = {'T', 'A', 'N', 'D', 'A', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

void append_u32(std::string& out, uint32_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

void append_u64(std::string& out, uint64_t v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(v));
}

nlohmann::json config_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["d_model"] = cfg.d_model;
  j["n_blocks"] = cfg.n_blocks;
  j["n_heads"] = cfg.n_heads;
  j["max_len"] = cfg.max_len;
  j["vocab_size"] = cfg.vocab_size;
  j["dropout"] = cfg.dropout;
  j["precision"] = to_string(cfg.precision);
  return j;
}

ModelConfig config_from_json_node(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.d_model = j.at("d_model").get<int>();
  cfg.n_blocks = j.at("n_blocks").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.max_len = j.at("max_len").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.dropout = j.value("dropout", 0.0);
  cfg.precision = precision_from_string(j.value("precision", "f32"));
  cfg.validate();
  return cfg;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
  return config_json(cfg).dump(2);
}

ModelConfig model_config_from_json(const std::string& text) {
  try {
    return config_from_json_node(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad model config json: ") + e.what());
  }
}

Checkpoint fresh_checkpoint(ModelConfig config, Vocab vocab, uint64_t seed) {
  config.vocab_size = static_cast<int>(vocab.size());
  config.validate();
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.vocab = std::move(vocab);
  ckpt.params = ModelParams::init(config, seed);
  return ckpt;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["config"] = config_json(ckpt.config);
  header["vocab"] = ckpt.vocab.tokens();
  header["dtype"] = "f32";
  nlohmann::json tensors = nlohmann::json::array();
  ckpt.params.for_each_tensor(
      [&](const std::string& name, const MatRM<float>& tensor) {
        tensors.push_back({{"name", name},
                           {"rows", tensor.rows()},
                           {"cols", tensor.cols()}});
      });
  header["tensors"] = tensors;
  const std::string header_text = header.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  append_u32(out, kVersion);
  append_u64(out, header_text.size());
  out += header_text;
  ckpt.params.for_each_tensor(
      [&](const std::string&, const MatRM<float>& tensor) {
        out.append(reinterpret_cast<const char*>(tensor.data()),
                   static_cast<size_t>(tensor.size()) * sizeof(float));
      });
  append_u64(out, fnv1a64(out));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  const size_t prefix = sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t);
  if (bytes.size() < prefix + sizeof(uint64_t)) {
    throw DataError("checkpoint truncated");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  uint64_t header_len;
  std::memcpy(&header_len, bytes.data() + sizeof(kMagic) + sizeof(uint32_t),
              sizeof(header_len));

  uint64_t stored_hash;
  std::memcpy(&stored_hash, bytes.data() + bytes.size() - sizeof(uint64_t),
              sizeof(stored_hash));
  if (fnv1a64(bytes.data(), bytes.size() - sizeof(uint64_t)) != stored_hash) {
    throw DataError("checkpoint corrupt (hash mismatch)");
  }

  if (bytes.size() < prefix + header_len) throw DataError("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(prefix, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header unreadable: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.config = config_from_json_node(header.at("config"));
    ckpt.vocab =
        Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
    if (header.at("dtype").get<std::string>() != "f32") {
      throw DataError("unsupported checkpoint dtype");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header invalid: ") + e.what());
  }
  if (static_cast<int>(ckpt.vocab.size()) != ckpt.config.vocab_size) {
    throw DataError("checkpoint vocab size disagrees with config");
  }

  ckpt.params = ModelParams::zeros(ckpt.config);
  size_t offset = prefix + header_len;
  const size_t data_end = bytes.size() - sizeof(uint64_t);
  size_t tensor_index = 0;
  const auto& manifest = header.at("tensors");
  ckpt.params.for_each_tensor([&](const std::string& name,
                                  MatRM<float>& tensor) {
    if (tensor_index >= manifest.size()) {
      throw DataError("checkpoint tensor manifest too short");
    }
    const auto& entry = manifest[tensor_index++];
    if (entry.at("name").get<std::string>() != name ||
        entry.at("rows").get<Eigen::Index>() != tensor.rows() ||
        entry.at("cols").get<Eigen::Index>() != tensor.cols()) {
      throw DataError("checkpoint tensor mismatch at " + name);
    }
    const size_t nbytes = static_cast<size_t>(tensor.size()) * sizeof(float);
    if (offset + nbytes > data_end) throw DataError("checkpoint truncated");
    std::memcpy(tensor.data(), bytes.data() + offset, nbytes);
    offset += nbytes;
  });
  if (tensor_index != manifest.size() || offset != data_end) {
    throw DataError("checkpoint has trailing or missing tensor data");
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  const std::string bytes = serialize_checkpoint(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

uint64_t checkpoint_digest(const Checkpoint& ckpt) {
  return fnv1a64(serialize_checkpoint(ckpt));
}

}  // namespace tanda
