#pragma once

// The .vtft container: checkpoints, datasets and golden prediction caches.
//
// Layout (all integers little-endian):
//   bytes 0..3    magic "VTFT"
//   bytes 4..7    version (u32), currently 1
//   bytes 8..15   header_len (u64)
//   next header_len bytes   UTF-8 JSON header, right-padded with spaces so
//                           the payload starts on an 8-byte boundary
//   remainder     payload: raw little-endian tensor data
//
// The header is {"metadata": {...}, "tensors": {name: {"byte_len", "byte_offset",
// "dtype", "shape"}}} serialised compactly with sorted keys. byte_offset is
// relative to the payload start; tensors are packed in sorted-name order.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vitft/tensor.hpp"
#include "vitft/vit.hpp"

namespace vitft {

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr char kContainerMagic[4] = {'V', 'T', 'F', 'T'};

enum class DType { f32, u32 };

struct ContainerTensor {
  DType dtype = DType::f32;
  Shape shape;
  std::vector<std::uint32_t> words;  // raw 32-bit little-endian elements

  static ContainerTensor from_f32(Shape shape, std::span<const float> values);
  static ContainerTensor from_u32(Shape shape, std::vector<std::uint32_t> values);
  std::vector<float> as_f32() const;
};

struct Container {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, ContainerTensor> tensors;
};

std::vector<std::uint8_t> serialize_container(const Container& c);
/// Throws ContainerError with a kind per failure class.
Container parse_container(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

Container read_container(const std::filesystem::path& path);
void write_container(const std::filesystem::path& path, const Container& c);

nlohmann::json config_to_json(const ViTConfig& config);
/// Rejects unknown keys; missing keys take the toy-tiny defaults.
ViTConfig config_from_json(const nlohmann::json& j);

// Checkpoints -----------------------------------------------------------------

/// Extra metadata is merged under the top-level metadata object.
Container checkpoint_container(const ViTModel& model, const nlohmann::json& extra = nlohmann::json::object());
ViTModel model_from_container(const Container& c);

std::vector<std::uint8_t> serialize_checkpoint(const ViTModel& model,
                                               const nlohmann::json& extra = nlohmann::json::object());
void save_checkpoint(const ViTModel& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object());
ViTModel load_checkpoint(const std::filesystem::path& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
/// Digest of the canonical checkpoint bytes of `model`.
std::string model_digest(const ViTModel& model);

// Datasets --------------------------------------------------------------------

Container dataset_container(const Batch& batch, std::optional<std::int64_t> num_classes = std::nullopt);
/// Checks labels against `num_classes` (or the file's own metadata when not given).
Batch batch_from_container(const Container& c, std::optional<std::int64_t> num_classes = std::nullopt);

void save_dataset(const Batch& batch, const std::filesystem::path& path,
                  std::optional<std::int64_t> num_classes = std::nullopt);
Batch load_dataset(const std::filesystem::path& path,
                   std::optional<std::int64_t> num_classes = std::nullopt);

// Golden predictions ----------------------------------------------------------

struct GoldenCache {
  std::string model_hash;
  std::vector<std::int32_t> predictions;
  std::optional<TensorF32> logits;

  bool valid_for(const ViTModel& model) const { return model_hash == model_digest(model); }
};

GoldenCache compute_golden(const ViTModel& model, const Batch& batch);
void save_golden(const GoldenCache& golden, const std::filesystem::path& path);
GoldenCache load_golden(const std::filesystem::path& path);

}  // namespace vitft
