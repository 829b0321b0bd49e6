#include "facechannel/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <set>

#include "facechannel/sha256.hpp"

namespace facechannel {

using nlohmann::json;

namespace {

template <typename U>
void append_le(std::string& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.append(bytes, sizeof(U));
}

template <typename U>
U read_le(const char* p) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

template <typename T>
json write_tensor(std::string& payload, const std::string& name, const Tensor<T>& t) {
  const std::size_t offset = payload.size();
  for (T v : t.data()) append_le(payload, v);
  return json{{"name", name},
              {"dtype", dtype_name(dtype_of<T>())},
              {"shape", t.shape()},
              {"offset", offset},
              {"length", payload.size() - offset}};
}

[[noreturn]] void corrupt(const std::string& why) {
  throw CorruptCheckpointError("corrupt checkpoint: " + why);
}

template <typename T>
Tensor<T> read_tensor(const json& entry, const std::string& payload) {
  const auto shape = entry.at("shape").get<Shape>();
  const DType dtype = parse_dtype(entry.at("dtype").get<std::string>());
  const auto offset = entry.at("offset").get<std::size_t>();
  const auto length = entry.at("length").get<std::size_t>();
  const std::size_t width = dtype == DType::kReal32 ? 4 : 8;
  if (shape.empty() || length != shape_numel(shape) * width || offset > payload.size() ||
      length > payload.size() - offset) {
    corrupt("tensor '" + entry.at("name").get<std::string>() + "' lies outside the payload");
  }
  std::vector<T> data(shape_numel(shape));
  const char* p = payload.data() + offset;
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = dtype == DType::kReal32 ? static_cast<T>(read_le<float>(p + 4 * i))
                                      : static_cast<T>(read_le<double>(p + 8 * i));
  }
  return Tensor<T>(shape, std::move(data));
}

}  // namespace

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path,
                     const TensorMap<T>* optimizer_state, const std::string& routine) {
  std::string payload;
  json tensors = json::array();
  for (const auto& t : model.named_tensors()) tensors.push_back(write_tensor(payload, t.name, *t.value));
  json optimizer = json::array();
  if (optimizer_state) {
    for (const auto& [name, t] : *optimizer_state) optimizer.push_back(write_tensor(payload, name, t));
  }
  json frozen = json::array();
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    if (!model.layer(i).trainable()) frozen.push_back(model.layer(i).name());
  }
  json header{{"version", kCheckpointVersion},
              {"config", json::parse(model.config().to_json())},
              {"routine", routine},
              {"frozen", frozen},
              {"tensors", tensors},
              {"optimizer_state", optimizer},
              {"payload_sha256", sha256_hex(payload.data(), payload.size())}};
  const std::string text = header.dump();

  std::string bytes(kCheckpointMagic, 4);
  append_le(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  bytes += payload;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

template <typename T>
Checkpoint<T> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) corrupt("bad magic");
  const auto header_len = read_le<std::uint32_t>(bytes.data() + 4);
  if (header_len > bytes.size() - 8) corrupt("truncated header");
  const std::string payload = bytes.substr(8 + header_len);

  json header;
  try {
    header = json::parse(bytes.substr(8, header_len));
  } catch (const json::exception& e) {
    corrupt(std::string("unreadable header: ") + e.what());
  }

  try {
    if (header.at("version").get<int>() != kCheckpointVersion) {
      corrupt("unsupported version " + header.at("version").dump());
    }
    if (header.at("payload_sha256").get<std::string>() != sha256_hex(payload.data(), payload.size())) {
      corrupt("payload hash mismatch");
    }
    const ModelConfig config = ModelConfig::from_json(header.at("config").dump());
    Rng scratch(config.seed);
    Checkpoint<T> ckpt{build_facechannel<T>(config, scratch), {}, header.value("routine", std::string())};

    std::map<std::string, const json*> directory;
    for (const auto& entry : header.at("tensors")) directory[entry.at("name").get<std::string>()] = &entry;
    std::set<std::string> seen;
    auto fill = [&](const std::string& name, Tensor<T>* target) {
      const auto it = directory.find(name);
      if (it == directory.end()) corrupt("missing tensor '" + name + "'");
      Tensor<T> t = read_tensor<T>(*it->second, payload);
      if (t.shape() != target->shape()) corrupt("tensor '" + name + "' has shape " + shape_to_string(t.shape()));
      *target = std::move(t);
      seen.insert(name);
    };
    for (auto& p : ckpt.model.parameters()) fill(p.name, p.value);
    for (auto& b : ckpt.model.buffers()) fill(b.name, b.value);
    if (seen.size() != directory.size()) corrupt("tensor directory lists unknown tensors");

    for (const auto& name : header.at("frozen")) {
      const auto idx = ckpt.model.find_layer(name.get<std::string>());
      if (!idx) corrupt("frozen list names unknown layer " + name.dump());
      ckpt.model.layer(*idx).set_trainable(false);
    }
    for (const auto& entry : header.at("optimizer_state")) {
      ckpt.optimizer_state.emplace(entry.at("name").get<std::string>(), read_tensor<T>(entry, payload));
    }
    return ckpt;
  } catch (const json::exception& e) {
    corrupt(std::string("malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    corrupt(std::string("invalid config: ") + e.what());
  } catch (const ShapeError& e) {
    corrupt(std::string("invalid tensor: ") + e.what());
  } catch (const ParameterError& e) {
    corrupt(std::string("invalid tensor: ") + e.what());
  }
}

template void save_checkpoint<float>(const Model<float>&, const std::filesystem::path&, const TensorMap<float>*,
                                     const std::string&);
template void save_checkpoint<double>(const Model<double>&, const std::filesystem::path&,
                                      const TensorMap<double>*, const std::string&);
template Checkpoint<float> read_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> read_checkpoint<double>(const std::filesystem::path&);

}  // namespace facechannel
