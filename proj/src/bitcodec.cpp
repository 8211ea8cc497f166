#include "vitft/bitcodec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace vitft {

Word32 flip_bit(Word32 w, int pos) {
  if (pos < 0 || pos > 31) {
    throw std::out_of_range("bit position " + std::to_string(pos) + " outside [0, 31]");
  }
  return w ^ (Word32{1} << pos);
}

float ulp(float v) noexcept {
  const float a = std::fabs(v);
  return std::nextafter(a, std::numeric_limits<float>::infinity()) - a;
}

std::size_t ProtectedParams::total_words() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.words.size();
  return n;
}

ProtectedParams encode_params(std::span<const TensorF32> params) {
  ProtectedParams out;
  out.tensors.reserve(params.size());
  for (const auto& t : params) {
    ProtectedTensor pt{t.name, t.shape, {}};
    pt.words.reserve(t.values.size());
    for (float v : t.values) pt.words.push_back(encode_word(to_bits(v)));
    out.tensors.push_back(std::move(pt));
  }
  return out;
}

std::pair<std::vector<TensorF32>, ScrubReport> scrub(const ProtectedParams& p) {
  std::vector<TensorF32> out;
  ScrubReport report;
  out.reserve(p.tensors.size());
  for (std::size_t ti = 0; ti < p.tensors.size(); ++ti) {
    const auto& pt = p.tensors[ti];
    std::vector<float> values(pt.words.size());
    for (std::size_t e = 0; e < pt.words.size(); ++e) {
      Word32 w = pt.words[e];
      if (!check_word(w)) {
        w = 0;
        report.detected_indices.push_back({ti, e});
      }
      values[e] = from_bits(w);
    }
    report.total_words += pt.words.size();
    out.emplace_back(pt.name, pt.shape, std::move(values));
  }
  report.detected = report.detected_indices.size();
  return {std::move(out), std::move(report)};
}

std::size_t encode_in_place(std::span<float> values) noexcept {
  std::size_t flipped = 0;
  for (auto& v : values) {
    const Word32 w = to_bits(v);
    const Word32 e = encode_word(w);
    flipped += (w != e);
    v = from_bits(e);
  }
  return flipped;
}

std::size_t count_parity_mismatches(std::span<const float> values) noexcept {
  std::size_t n = 0;
  for (float v : values) n += !check_word(to_bits(v));
  return n;
}

std::size_t scrub_in_place(std::span<float> values, std::vector<std::size_t>* hits) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!check_word(to_bits(values[i]))) {
      values[i] = 0.0f;
      ++n;
      if (hits) hits->push_back(i);
    }
  }
  return n;
}

ScrubReport scrub_in_place(ParamSet& params) {
  std::vector<std::size_t> hits;
  ScrubReport report;
  report.detected = scrub_in_place(params.values(), &hits);
  report.total_words = params.num_elements();
  report.detected_indices.reserve(hits.size());
  for (auto flat : hits) report.detected_indices.push_back(params.locate(flat));
  return report;
}

std::size_t encode_in_place(ParamSet& params) noexcept { return encode_in_place(params.values()); }

double max_ulp_perturbation(std::span<const float> original, std::span<const float> encoded) {
  if (original.size() != encoded.size()) throw std::invalid_argument("span size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const float v = original[i];
    if (!std::isfinite(v)) continue;
    const double u = ulp(v);
    const double d = std::fabs(static_cast<double>(encoded[i]) - static_cast<double>(v));
    if (u > 0) worst = std::max(worst, d / u);
  }
  return worst;
}

}  // namespace vitft
