#include "vitft/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "vitft/error.hpp"

namespace vitft {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ValidationError("negative dimension in shape " + shape_to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

TensorF32::TensorF32(std::string name, Shape shape)
    : name(std::move(name)), shape(std::move(shape)), values(shape_numel(this->shape), 0.0f) {}

TensorF32::TensorF32(std::string name, Shape shape, std::vector<float> values)
    : name(std::move(name)), shape(std::move(shape)), values(std::move(values)) {
  if (this->values.size() != shape_numel(this->shape)) {
    throw ValidationError("tensor '" + this->name + "': " + std::to_string(this->values.size()) +
                          " values do not fit shape " + shape_to_string(this->shape));
  }
}

std::size_t ParamSet::add(std::string name, Shape shape) {
  if (contains(name)) throw ValidationError("duplicate tensor name '" + name + "'");
  Entry e;
  e.size = shape_numel(shape);
  e.offset = data_.size();
  e.name = std::move(name);
  e.shape = std::move(shape);
  data_.resize(data_.size() + e.size, 0.0f);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::size_t ParamSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw ValidationError("no tensor named '" + std::string(name) + "'");
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

std::span<float> ParamSet::tensor(std::size_t i) {
  const auto& e = entries_.at(i);
  return std::span<float>(data_).subspan(e.offset, e.size);
}

std::span<const float> ParamSet::tensor(std::size_t i) const {
  const auto& e = entries_.at(i);
  return std::span<const float>(data_).subspan(e.offset, e.size);
}

std::size_t ParamSet::flat_index(ElementRef ref) const {
  const auto& e = entries_.at(ref.tensor);
  if (ref.element >= e.size) {
    throw ValidationError("element " + std::to_string(ref.element) + " out of range for tensor '" +
                          e.name + "'");
  }
  return e.offset + ref.element;
}

ElementRef ParamSet::locate(std::size_t flat) const {
  if (flat >= data_.size()) throw ValidationError("flat index out of range");
  auto it = std::upper_bound(entries_.begin(), entries_.end(), flat,
                             [](std::size_t f, const Entry& e) { return f < e.offset; });
  // Zero-sized tensors share an offset with their successor; step back past them.
  auto idx = static_cast<std::size_t>(std::distance(entries_.begin(), it)) - 1;
  while (entries_[idx].size == 0) --idx;
  return {idx, flat - entries_[idx].offset};
}

std::vector<std::uint64_t> ParamSet::layout() const {
  std::vector<std::uint64_t> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.size);
  return out;
}

std::vector<TensorF32> ParamSet::to_tensors() const {
  std::vector<TensorF32> out;
  out.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto span = tensor(i);
    out.emplace_back(entries_[i].name, entries_[i].shape,
                     std::vector<float>(span.begin(), span.end()));
  }
  return out;
}

ParamSet ParamSet::from_tensors(const std::vector<TensorF32>& tensors) {
  ParamSet p;
  for (const auto& t : tensors) {
    auto i = p.add(t.name, t.shape);
    if (t.values.size() != p.entry(i).size) {
      throw ValidationError("tensor '" + t.name + "' has inconsistent value count");
    }
    std::copy(t.values.begin(), t.values.end(), p.tensor(i).begin());
  }
  return p;
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name || entries_[i].shape != other.entries_[i].shape)
      return false;
  }
  return bit_equal(data_, other.data_);
}

bool bit_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size_bytes()) == 0);
}

}  // namespace vitft
