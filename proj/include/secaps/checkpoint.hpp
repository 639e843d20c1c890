#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "secaps/errors.hpp"
#include "secaps/model.hpp"

namespace secaps {

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  auto layer = [](const SeqCapsLayerConfig& l) {
    return nlohmann::json{{"caps_num", l.caps_num},
                          {"caps_dim", l.caps_dim},
                          {"routing_iters", l.routing_iters},
                          {"lstm_hidden", l.lstm_hidden}};
  };
  return nlohmann::json{
      {"vocab_size", c.vocab_size},
      {"embed_dim", c.embed_dim},
      {"max_len", c.max_len},
      {"layer1", layer(c.layer1)},
      {"layer2", layer(c.layer2)},
      {"fc1_dim", c.fc1_dim},
      {"fc2_dim", c.fc2_dim},
      {"num_classes", c.num_classes},
      {"residual_mode", to_string(c.residual_mode)},
      {"focal_gamma", c.focal_gamma},
      {"focal_alpha", c.focal_alpha},
      {"focal_alpha_per_class", c.focal_alpha_per_class},
      {"seed", c.seed},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json& doc) {
  try {
    auto layer = [](const nlohmann::json& l) {
      return SeqCapsLayerConfig{l.at("caps_num").get<std::size_t>(),
                                l.at("caps_dim").get<std::size_t>(),
                                l.at("routing_iters").get<std::size_t>(),
                                l.at("lstm_hidden").get<std::size_t>()};
    };
    ModelConfig c;
    c.vocab_size = doc.at("vocab_size").get<std::size_t>();
    c.embed_dim = doc.at("embed_dim").get<std::size_t>();
    c.max_len = doc.at("max_len").get<std::size_t>();
    c.layer1 = layer(doc.at("layer1"));
    c.layer2 = layer(doc.at("layer2"));
    c.fc1_dim = doc.at("fc1_dim").get<std::size_t>();
    c.fc2_dim = doc.at("fc2_dim").get<std::size_t>();
    c.num_classes = doc.at("num_classes").get<std::size_t>();
    c.residual_mode =
        residual_mode_from_string(doc.at("residual_mode").get<std::string>());
    c.focal_gamma = doc.at("focal_gamma").get<double>();
    c.focal_alpha = doc.at("focal_alpha").get<double>();
    c.focal_alpha_per_class =
        doc.at("focal_alpha_per_class").get<std::vector<double>>();
    c.seed = doc.at("seed").get<std::uint64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint config: ") + e.what());
  }
}

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'C', 'A',
                                             'P', 'S', '1', '\n'};

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  static_assert(sizeof(float) == 4);
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b)
    out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

// Sequential reader over the raw bytes with truncation-aware accessors.
struct ByteReader {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;

  bool at_end() const { return pos >= bytes.size(); }

  void need(std::size_t count, const char* what) const {
    if (pos + count > bytes.size()) {
      throw TruncatedCheckpointError(std::string("checkpoint: truncated while reading ") +
                                     what);
    }
  }

  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes[pos]) |
                      static_cast<std::uint16_t>(bytes[pos + 1]) << 8;
    pos += 2;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b)
      v |= static_cast<std::uint64_t>(bytes[pos + b]) << (8 * b);
    pos += 8;
    return v;
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes[pos++];
  }

  std::string str(std::size_t count, const char* what) {
    need(count, what);
    std::string out(reinterpret_cast<const char*>(bytes.data() + pos), count);
    pos += count;
    return out;
  }

  float f32(const char* what) {
    need(4, what);
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(bytes[pos + b]) << (8 * b);
    pos += 4;
    return std::bit_cast<float>(bits);
  }
};

}  // namespace detail

// Serializes the config and every named parameter. The format is
// platform-independent: all integers little-endian, all values IEEE-754
// 32-bit regardless of the in-memory scalar type.
template <typename Scalar>
void save_checkpoint(const ModelParams<Scalar>& params, const std::string& path) {
  std::string out;
  out.append(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
  const std::string config_blob = model_config_to_json(params.config).dump();
  detail::put_u64(out, config_blob.size());
  out += config_blob;
  for (const auto& [name, tensor] : params.named_parameters()) {
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(tensor.rank()));
    for (std::size_t d = 0; d < tensor.rank(); ++d)
      detail::put_u64(out, tensor.extent(d));
    for (Scalar v : tensor.values()) detail::put_f32(out, static_cast<float>(v));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error("save_checkpoint: cannot write " + path);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error("save_checkpoint: write failed for " + path);
}

template <typename Scalar>
ModelParams<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error("load_checkpoint: cannot read " + path);
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(file),
                                   std::istreambuf_iterator<char>()};
  detail::ByteReader reader{bytes};

  const std::string magic = reader.str(sizeof(detail::kCheckpointMagic), "magic");
  if (std::memcmp(magic.data(), detail::kCheckpointMagic,
                  sizeof(detail::kCheckpointMagic)) != 0) {
    throw BadMagicError("load_checkpoint: " + path +
                        " does not start with the checkpoint magic");
  }
  const std::uint64_t config_len = reader.u64("config length");
  nlohmann::json config_doc;
  try {
    config_doc = nlohmann::json::parse(reader.str(config_len, "config"));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("load_checkpoint: bad config JSON: ") + e.what());
  }
  const ModelConfig config = model_config_from_json(config_doc);

  auto params = ModelParams<Scalar>::init(config);
  auto named = params.named_parameters();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < named.size(); ++i) index.emplace(named[i].first, i);

  std::vector<bool> filled(named.size(), false);
  while (!reader.at_end()) {
    const std::uint16_t name_len = reader.u16("parameter name length");
    const std::string name = reader.str(name_len, "parameter name");
    const std::uint8_t rank = reader.u8("parameter rank");
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      shape[d] = reader.u64("parameter dims");
      numel *= shape[d];
    }
    // Truncation against the record's own header comes first: a file that
    // promises more floats than it holds is cut short, whatever the name.
    reader.need(numel * 4, "parameter values");
    auto it = index.find(name);
    if (it == index.end()) {
      throw CheckpointShapeError("load_checkpoint: parameter '" + name +
                                 "' is not part of the configured model");
    }
    auto tensor = named[it->second].second;
    if (tensor.shape() != shape) {
      throw CheckpointShapeError("load_checkpoint: parameter '" + name +
                                 "' has shape " + shape_str(shape) +
                                 " in the file but the config implies " +
                                 shape_str(tensor.shape()));
    }
    auto values = tensor.mutable_values();
    for (std::size_t i = 0; i < numel; ++i)
      values[i] = static_cast<Scalar>(reader.f32("parameter values"));
    filled[it->second] = true;
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (!filled[i]) {
      throw CheckpointShapeError("load_checkpoint: parameter '" + named[i].first +
                                 "' missing from " + path);
    }
  }
  return params;
}

}  // namespace secaps
