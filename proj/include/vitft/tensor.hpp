#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vitft {

using Shape = std::vector<std::int64_t>;

/// Number of elements described by `shape` (1 for a scalar shape).
std::size_t shape_numel(const Shape& shape);

std::string shape_to_string(const Shape& shape);

/// Named, shaped, row-major array of 32-bit floats.
struct TensorF32 {
  std::string name;
  Shape shape;
  std::vector<float> values;

  TensorF32() = default;
  TensorF32(std::string name, Shape shape);
  TensorF32(std::string name, Shape shape, std::vector<float> values);

  std::size_t size() const noexcept { return values.size(); }
};

/// Position of one element inside a list of tensors.
struct ElementRef {
  std::size_t tensor = 0;
  std::size_t element = 0;

  auto operator<=>(const ElementRef&) const = default;
};

/// An ordered set of named tensors backed by one contiguous float buffer.
///
/// Model weights live here so that bit-level passes (encode, inject, scrub)
/// can run over a flat span while the forward pass still addresses each
/// tensor by name.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  /// Appends a zero-filled tensor and returns its index.
  std::size_t add(std::string name, Shape shape);

  std::size_t num_tensors() const noexcept { return entries_.size(); }
  std::size_t num_elements() const noexcept { return data_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }

  /// Index of the tensor called `name`; throws ValidationError if absent.
  std::size_t index_of(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  std::span<float> tensor(std::size_t i);
  std::span<const float> tensor(std::size_t i) const;
  std::span<float> tensor(std::string_view name) { return tensor(index_of(name)); }
  std::span<const float> tensor(std::string_view name) const { return tensor(index_of(name)); }

  /// Flat offset of (tensor, element).
  std::size_t flat_index(ElementRef ref) const;
  ElementRef locate(std::size_t flat) const;

  /// Element count of each tensor, in order.
  std::vector<std::uint64_t> layout() const;

  std::vector<TensorF32> to_tensors() const;
  static ParamSet from_tensors(const std::vector<TensorF32>& tensors);

  bool operator==(const ParamSet& other) const;

 private:
  std::vector<Entry> entries_;
  std::vector<float> data_;
};

/// Bitwise equality of two float spans (distinguishes -0.0 and NaN payloads).
bool bit_equal(std::span<const float> a, std::span<const float> b);

}  // namespace vitft
