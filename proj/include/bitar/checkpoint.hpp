#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bitar/bytes.hpp"
#include "bitar/error.hpp"
#include "bitar/model.hpp"

// Model checkpoint, little-endian:
//   "BVCK", u16 version, u32 n + n bytes of JSON (model config and free-form
//   metadata), u32 tensor count, then per tensor: u16 name length, name,
//   u32 rows, u32 cols, rows*cols f64 row-major; trailing FNV-1a-64.

namespace bitar {

inline constexpr char kCheckpointMagic[4] = {'B', 'V', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"hidden", c.hidden},         {"heads", c.heads},
          {"layers", c.layers},         {"ffn_mult", c.ffn_mult},
          {"cond_vocab", c.cond_vocab}, {"cond_width", c.cond_width},
          {"max_scales", c.max_scales}, {"bits", c.bits},
          {"rope_base", c.rope_base},   {"head_init_std", c.head_init_std},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.hidden = j.at("hidden").get<int>();
    c.heads = j.at("heads").get<int>();
    c.layers = j.at("layers").get<int>();
    c.ffn_mult = j.at("ffn_mult").get<int>();
    c.cond_vocab = j.at("cond_vocab").get<int>();
    c.cond_width = j.at("cond_width").get<int>();
    c.max_scales = j.at("max_scales").get<int>();
    c.bits = j.at("bits").get<int>();
    c.rope_base = j.at("rope_base").get<double>();
    c.head_init_std = j.value("head_init_std", c.head_init_std);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  nlohmann::json metadata = nlohmann::json::object();
};

inline Bytes serialize_checkpoint(const Transformer& model, const nlohmann::json& metadata = nlohmann::json::object()) {
  ByteWriter out;
  out.raw(kCheckpointMagic, 4);
  out.u16(kCheckpointVersion);
  const std::string header = nlohmann::json{{"config", to_json(model.config())}, {"metadata", metadata}}.dump();
  out.u32(static_cast<std::uint32_t>(header.size()));
  out.str(header);
  std::uint32_t count = 0;
  model.params().for_each([&](const std::string&, const Mat&) { ++count; });
  out.u32(count);
  model.params().for_each([&](const std::string& name, const Mat& m) {
    out.u16(static_cast<std::uint16_t>(name.size()));
    out.str(name);
    out.u32(static_cast<std::uint32_t>(m.rows()));
    out.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) out.f64(m.data()[i]);
  });
  out.u64(fnv1a64(out.bytes().data(), out.size()));
  return out.take();
}

inline Checkpoint deserialize_checkpoint(const Bytes& b) {
  ByteReader in(b);
  const auto* magic = in.raw(4);
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) throw BadMagicError("not a model checkpoint (bad magic)");
  const auto version = in.u16();
  if (version != kCheckpointVersion)
    throw VersionMismatchError("checkpoint version " + std::to_string(version) + ", expected " +
                               std::to_string(kCheckpointVersion));
  if (b.size() < 8 + in.position()) throw TruncatedError("checkpoint ends inside its header");
  ByteReader tail(b.data() + b.size() - 8, 8);
  if (fnv1a64(b.data(), b.size() - 8) != tail.u64()) throw ChecksumError("checkpoint checksum mismatch");

  const auto header_len = in.u32();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.str(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ck;
  ck.config = model_config_from_json(header.at("config"));
  ck.metadata = header.value("metadata", nlohmann::json::object());
  ck.params = ModelParams::initialize(ck.config);

  const auto count = in.u32();
  std::uint32_t seen = 0;
  ck.params.for_each([&](const std::string& name, Mat& m) {
    if (seen++ >= count) throw FormatError("checkpoint lacks tensor '" + name + "'");
    const std::string got = in.str(in.u16());
    if (got != name) throw FormatError("checkpoint tensor '" + got + "' where '" + name + "' was expected");
    const auto rows = in.u32(), cols = in.u32();
    if (rows != m.rows() || cols != m.cols())
      throw FormatError("tensor '" + name + "' is " + std::to_string(rows) + "x" + std::to_string(cols) +
                        ", config implies " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = in.f64();
  });
  if (seen != count) throw FormatError("checkpoint has unexpected extra tensors");
  if (in.remaining() != 8) throw FormatError("trailing bytes after checkpoint tensors");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& p, const Transformer& model,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  write_file_atomic(p, serialize_checkpoint(model, metadata));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& p) { return deserialize_checkpoint(read_file(p)); }

}  // namespace bitar
