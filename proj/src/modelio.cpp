#include "vitft/modelio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include "vitft/error.hpp"

namespace vitft {

namespace {

using Kind = ContainerError::Kind;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

const char* dtype_name(DType t) { return t == DType::f32 ? "f32" : "u32"; }

constexpr std::size_t kPreambleLen = 16;
constexpr std::size_t kPayloadAlign = 8;

}  // namespace

ContainerTensor ContainerTensor::from_f32(Shape shape, std::span<const float> values) {
  ContainerTensor t;
  t.dtype = DType::f32;
  t.shape = std::move(shape);
  t.words.reserve(values.size());
  for (float v : values) t.words.push_back(std::bit_cast<std::uint32_t>(v));
  if (t.words.size() != shape_numel(t.shape)) throw ValidationError("tensor size does not match shape");
  return t;
}

ContainerTensor ContainerTensor::from_u32(Shape shape, std::vector<std::uint32_t> values) {
  ContainerTensor t;
  t.dtype = DType::u32;
  t.shape = std::move(shape);
  t.words = std::move(values);
  if (t.words.size() != shape_numel(t.shape)) throw ValidationError("tensor size does not match shape");
  return t;
}

std::vector<float> ContainerTensor::as_f32() const {
  std::vector<float> out;
  out.reserve(words.size());
  for (auto w : words) out.push_back(std::bit_cast<float>(w));
  return out;
}

std::vector<std::uint8_t> serialize_container(const Container& c) {
  nlohmann::json table = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    const std::uint64_t len = 4ull * t.words.size();
    table[name] = {{"dtype", dtype_name(t.dtype)},
                   {"shape", t.shape},
                   {"byte_offset", offset},
                   {"byte_len", len}};
    offset += len;
  }
  nlohmann::json header = {{"metadata", c.metadata}, {"tensors", table}};
  std::string text = header.dump();
  const std::size_t pad = (kPayloadAlign - (kPreambleLen + text.size()) % kPayloadAlign) % kPayloadAlign;
  text.append(pad, ' ');

  std::vector<std::uint8_t> out;
  out.reserve(kPreambleLen + text.size() + offset);
  out.insert(out.end(), std::begin(kContainerMagic), std::end(kContainerMagic));
  put_u32(out, kContainerVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : c.tensors) {
    for (auto w : t.words) put_u32(out, w);
  }
  return out;
}

Container parse_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreambleLen) throw ContainerError(Kind::truncated, "file shorter than preamble");
  if (std::memcmp(bytes.data(), kContainerMagic, 4) != 0) {
    throw ContainerError(Kind::bad_magic, "bad magic (expected VTFT)");
  }
  const auto version = get_u32(bytes.data() + 4);
  if (version != kContainerVersion) {
    throw ContainerError(Kind::bad_version, "unsupported container version " + std::to_string(version));
  }
  const auto header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - kPreambleLen) {
    throw ContainerError(Kind::truncated, "header extends past end of file");
  }
  const auto payload = bytes.subspan(kPreambleLen + header_len);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPreambleLen,
                                   bytes.begin() + static_cast<std::ptrdiff_t>(kPreambleLen + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ContainerError(Kind::bad_header, std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("tensors") || !header["tensors"].is_object()) {
    throw ContainerError(Kind::bad_header, "header lacks a tensor table");
  }

  Container c;
  if (header.contains("metadata")) {
    if (!header["metadata"].is_object()) throw ContainerError(Kind::bad_header, "metadata must be an object");
    c.metadata = header["metadata"];
  }

  struct Span {
    std::uint64_t offset, len;
    std::string name;
  };
  std::vector<Span> spans;
  for (const auto& [name, entry] : header["tensors"].items()) {
    ContainerTensor t;
    std::uint64_t offset = 0, len = 0;
    try {
      const auto dtype = entry.at("dtype").get<std::string>();
      if (dtype == "f32") {
        t.dtype = DType::f32;
      } else if (dtype == "u32") {
        t.dtype = DType::u32;
      } else {
        throw ContainerError(Kind::bad_header, "tensor '" + name + "' has unknown dtype " + dtype);
      }
      t.shape = entry.at("shape").get<Shape>();
      offset = entry.at("byte_offset").get<std::uint64_t>();
      len = entry.at("byte_len").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ContainerError(Kind::bad_header, "tensor '" + name + "': " + e.what());
    }
    if (std::any_of(t.shape.begin(), t.shape.end(), [](std::int64_t d) { return d < 0; })) {
      throw ContainerError(Kind::shape_mismatch, "tensor '" + name + "' has a negative dimension");
    }
    if (len != 4ull * shape_numel(t.shape)) {
      throw ContainerError(Kind::shape_mismatch,
                           "tensor '" + name + "': byte_len " + std::to_string(len) +
                               " does not match shape " + shape_to_string(t.shape));
    }
    if (offset % 4 != 0) {
      throw ContainerError(Kind::misaligned_tensor, "tensor '" + name + "' is not 4-byte aligned");
    }
    if (offset > payload.size() || len > payload.size() - offset) {
      throw ContainerError(Kind::truncated, "tensor '" + name + "' extends past end of payload");
    }
    t.words.resize(len / 4);
    for (std::size_t i = 0; i < t.words.size(); ++i) t.words[i] = get_u32(payload.data() + offset + 4 * i);
    spans.push_back({offset, len, name});
    c.tensors.emplace(name, std::move(t));
  }

  std::sort(spans.begin(), spans.end(),
            [](const Span& a, const Span& b) { return a.offset < b.offset || (a.offset == b.offset && a.len < b.len); });
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i - 1].len > 0 && spans[i].len > 0 && spans[i - 1].offset + spans[i - 1].len > spans[i].offset) {
      throw ContainerError(Kind::overlapping_tensors,
                           "tensors '" + spans[i - 1].name + "' and '" + spans[i].name + "' overlap");
    }
  }
  return c;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Container read_container(const std::filesystem::path& path) { return parse_container(read_file(path)); }

void write_container(const std::filesystem::path& path, const Container& c) {
  write_file(path, serialize_container(c));
}

nlohmann::json config_to_json(const ViTConfig& config) {
  return {{"image_size", config.image_size}, {"patch_size", config.patch_size},
          {"channels", config.channels},     {"embed_dim", config.embed_dim},
          {"num_heads", config.num_heads},   {"depth", config.depth},
          {"mlp_ratio", config.mlp_ratio},   {"num_classes", config.num_classes},
          {"layernorm_eps", config.layernorm_eps}};
}

ViTConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("model config must be a JSON object");
  ViTConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "image_size") c.image_size = value.get<std::int64_t>();
      else if (key == "patch_size") c.patch_size = value.get<std::int64_t>();
      else if (key == "channels") c.channels = value.get<std::int64_t>();
      else if (key == "embed_dim") c.embed_dim = value.get<std::int64_t>();
      else if (key == "num_heads") c.num_heads = value.get<std::int64_t>();
      else if (key == "depth") c.depth = value.get<std::int64_t>();
      else if (key == "mlp_ratio") c.mlp_ratio = value.get<double>();
      else if (key == "num_classes") c.num_classes = value.get<std::int64_t>();
      else if (key == "layernorm_eps") c.layernorm_eps = value.get<double>();
      else throw ValidationError("unknown model config key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("model config key '" + key + "' has the wrong type");
    }
  }
  c.validate();
  return c;
}

Container checkpoint_container(const ViTModel& model, const nlohmann::json& extra) {
  Container c;
  c.metadata = extra.is_object() ? extra : nlohmann::json::object();
  c.metadata["kind"] = "checkpoint";
  c.metadata["config"] = config_to_json(model.config);
  for (std::size_t i = 0; i < model.params.num_tensors(); ++i) {
    const auto& e = model.params.entry(i);
    c.tensors.emplace(e.name, ContainerTensor::from_f32(e.shape, model.params.tensor(i)));
  }
  return c;
}

ViTModel model_from_container(const Container& c) {
  if (!c.metadata.contains("config")) {
    throw ContainerError(Kind::bad_header, "checkpoint metadata lacks a model config");
  }
  if (c.metadata.contains("kind") && c.metadata["kind"] != "checkpoint") {
    throw ContainerError(Kind::bad_header, "container is not a checkpoint");
  }
  ViTModel m;
  try {
    m.config = config_from_json(c.metadata["config"]);
  } catch (const ValidationError& e) {
    throw ContainerError(Kind::bad_header, e.what());
  }
  m.params = make_param_layout(m.config);
  if (c.tensors.size() != m.params.num_tensors()) {
    throw ContainerError(Kind::shape_mismatch,
                         "checkpoint has " + std::to_string(c.tensors.size()) + " tensors, config needs " +
                             std::to_string(m.params.num_tensors()));
  }
  for (std::size_t i = 0; i < m.params.num_tensors(); ++i) {
    const auto& e = m.params.entry(i);
    const auto it = c.tensors.find(e.name);
    if (it == c.tensors.end()) throw ContainerError(Kind::missing_tensor, "missing tensor '" + e.name + "'");
    if (it->second.dtype != DType::f32 || it->second.shape != e.shape) {
      throw ContainerError(Kind::shape_mismatch, "tensor '" + e.name + "' has shape " +
                                                     shape_to_string(it->second.shape) + ", config needs " +
                                                     shape_to_string(e.shape));
    }
    auto dst = m.params.tensor(i);
    std::memcpy(dst.data(), it->second.words.data(), dst.size_bytes());
  }
  return m;
}

std::vector<std::uint8_t> serialize_checkpoint(const ViTModel& model, const nlohmann::json& extra) {
  return serialize_container(checkpoint_container(model, extra));
}

void save_checkpoint(const ViTModel& model, const std::filesystem::path& path, const nlohmann::json& extra) {
  write_file(path, serialize_checkpoint(model, extra));
}

ViTModel load_checkpoint(const std::filesystem::path& path) { return model_from_container(read_container(path)); }

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string model_digest(const ViTModel& model) { return sha256_hex(serialize_checkpoint(model)); }

Container dataset_container(const Batch& batch, std::optional<std::int64_t> num_classes) {
  Container c;
  c.metadata["kind"] = "dataset";
  if (num_classes) c.metadata["num_classes"] = *num_classes;
  c.tensors.emplace("images", ContainerTensor::from_f32(batch.images.shape, batch.images.values));
  if (batch.labels) {
    c.tensors.emplace("labels", ContainerTensor::from_u32({static_cast<std::int64_t>(batch.labels->size())},
                                                          *batch.labels));
  }
  return c;
}

Batch batch_from_container(const Container& c, std::optional<std::int64_t> num_classes) {
  const auto images = c.tensors.find("images");
  if (images == c.tensors.end()) throw ContainerError(Kind::missing_tensor, "dataset lacks an 'images' tensor");
  if (images->second.dtype != DType::f32 || images->second.shape.size() != 4 || images->second.shape[0] < 1) {
    throw ContainerError(Kind::shape_mismatch, "'images' must be f32 [n, c, s, s] with n >= 1");
  }
  Batch b;
  b.images = TensorF32("images", images->second.shape, images->second.as_f32());
  if (std::any_of(b.images.values.begin(), b.images.values.end(), [](float v) { return !std::isfinite(v); })) {
    throw ContainerError(Kind::bad_value, "dataset contains non-finite pixels");
  }
  if (!num_classes && c.metadata.contains("num_classes")) num_classes = c.metadata["num_classes"].get<std::int64_t>();
  if (const auto labels = c.tensors.find("labels"); labels != c.tensors.end()) {
    if (labels->second.dtype != DType::u32 || labels->second.shape != Shape{images->second.shape[0]}) {
      throw ContainerError(Kind::shape_mismatch, "'labels' must be u32 [n]");
    }
    if (num_classes) {
      for (auto l : labels->second.words) {
        if (static_cast<std::int64_t>(l) >= *num_classes) {
          throw ContainerError(Kind::bad_value, "label " + std::to_string(l) + " outside [0, " +
                                                    std::to_string(*num_classes) + ")");
        }
      }
    }
    b.labels = labels->second.words;
  }
  return b;
}

void save_dataset(const Batch& batch, const std::filesystem::path& path, std::optional<std::int64_t> num_classes) {
  write_container(path, dataset_container(batch, num_classes));
}

Batch load_dataset(const std::filesystem::path& path, std::optional<std::int64_t> num_classes) {
  return batch_from_container(read_container(path), num_classes);
}

GoldenCache compute_golden(const ViTModel& model, const Batch& batch) {
  GoldenCache g;
  g.model_hash = model_digest(model);
  const RowMatrixf logits = forward(model, batch);
  g.predictions = predict(logits);
  g.logits = TensorF32("logits", {logits.rows(), logits.cols()},
                       std::vector<float>(logits.data(), logits.data() + logits.size()));
  return g;
}

void save_golden(const GoldenCache& golden, const std::filesystem::path& path) {
  Container c;
  c.metadata["kind"] = "golden";
  c.metadata["model_hash"] = golden.model_hash;
  std::vector<std::uint32_t> preds;
  preds.reserve(golden.predictions.size());
  for (auto p : golden.predictions) preds.push_back(static_cast<std::uint32_t>(p));
  const auto n = static_cast<std::int64_t>(preds.size());
  c.tensors.emplace("predictions", ContainerTensor::from_u32({n}, std::move(preds)));
  if (golden.logits) c.tensors.emplace("logits", ContainerTensor::from_f32(golden.logits->shape, golden.logits->values));
  write_container(path, c);
}

GoldenCache load_golden(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.metadata.value("kind", "") != "golden" || !c.metadata.contains("model_hash")) {
    throw ContainerError(Kind::bad_header, "container is not a golden cache");
  }
  const auto preds = c.tensors.find("predictions");
  if (preds == c.tensors.end()) throw ContainerError(Kind::missing_tensor, "golden cache lacks predictions");
  GoldenCache g;
  g.model_hash = c.metadata["model_hash"].get<std::string>();
  for (auto w : preds->second.words) g.predictions.push_back(static_cast<std::int32_t>(w));
  if (const auto l = c.tensors.find("logits"); l != c.tensors.end()) {
    g.logits = TensorF32("logits", l->second.shape, l->second.as_f32());
  }
  return g;
}

}  // namespace vitft
