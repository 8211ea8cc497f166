#pragma once

// Single-precision forward pass of a plain pre-norm ViT encoder classifier.
//
// Kernels are templated on the Eigen expression type so the same code serves
// float inference and double-precision checks in tests.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vitft/tensor.hpp"

namespace vitft {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using RowMatrixf = RowMatrix<float>;
using RowVectorf = RowVector<float>;

// ---------------------------------------------------------------------------
// Kernels

/// Row-wise softmax with per-row max subtraction.
template <typename Derived>
RowMatrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  RowMatrix<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// softmax(Q K^T / sqrt(d_k)) V. Q and K are [n, d_k], V is [n, d_v].
template <typename DQ, typename DK, typename DV>
RowMatrix<typename DQ::Scalar> attention(const Eigen::MatrixBase<DQ>& q,
                                         const Eigen::MatrixBase<DK>& k,
                                         const Eigen::MatrixBase<DV>& v) {
  using Scalar = typename DQ::Scalar;
  if (q.cols() == 0) throw std::invalid_argument("attention: d_k must be positive");
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw std::invalid_argument("attention: shape mismatch");
  }
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
  RowMatrix<Scalar> scores = (q * k.transpose()) * scale;
  return softmax_rows(scores) * v;
}

/// Per-row normalisation to zero mean and unit variance, then gamma * x + beta.
template <typename Derived, typename DG, typename DB>
RowMatrix<typename Derived::Scalar> layernorm(const Eigen::MatrixBase<Derived>& x,
                                              const Eigen::MatrixBase<DG>& gamma,
                                              const Eigen::MatrixBase<DB>& beta,
                                              typename Derived::Scalar eps) {
  using Scalar = typename Derived::Scalar;
  if (gamma.size() != x.cols() || beta.size() != x.cols()) {
    throw std::invalid_argument("layernorm: feature dimension mismatch");
  }
  const auto n = static_cast<Scalar>(x.cols());
  RowMatrix<Scalar> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mean = x.row(r).sum() / n;
    const auto centered = (x.row(r).array() - mean).eval();
    const Scalar var = centered.square().sum() / n;
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    out.row(r) = (centered * inv * gamma.reshaped().transpose().array() +
                  beta.reshaped().transpose().array())
                     .matrix();
  }
  return out;
}

/// Exact GELU, x * Phi(x).
template <std::floating_point Scalar>
Scalar gelu(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> gelu(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return gelu(v); });
}

// ---------------------------------------------------------------------------
// Model

struct ViTConfig {
  std::int64_t image_size = 32;
  std::int64_t patch_size = 4;
  std::int64_t channels = 3;
  std::int64_t embed_dim = 64;
  std::int64_t num_heads = 4;
  std::int64_t depth = 4;
  double mlp_ratio = 4.0;
  std::int64_t num_classes = 10;
  double layernorm_eps = 1e-6;

  /// Throws ValidationError on inconsistent dimensions.
  void validate() const;

  std::int64_t head_dim() const { return embed_dim / num_heads; }
  std::int64_t grid_size() const { return image_size / patch_size; }
  std::int64_t num_patches() const { return grid_size() * grid_size(); }
  std::int64_t num_tokens() const { return num_patches() + 1; }
  std::int64_t patch_dim() const { return channels * patch_size * patch_size; }
  std::int64_t mlp_hidden() const;

  /// Closed-form parameter count.
  std::uint64_t parameter_count() const;

  bool operator==(const ViTConfig&) const = default;

  /// d=64, h=4, L=4 on 32x32x3 images with 4x4 patches; about 2.1e5 parameters.
  static ViTConfig toy_tiny();
  static ViTConfig toy_small();
  static ViTConfig toy_base();
  /// Looks up "toy-tiny", "toy-small" or "toy-base".
  static ViTConfig preset(const std::string& name);
};

/// Names and shapes of the weight tensors for `config`, in forward order.
std::vector<std::pair<std::string, Shape>> param_shapes(const ViTConfig& config);

/// Canonical weight tensors for `config`, zero-filled, in forward order.
ParamSet make_param_layout(const ViTConfig& config);

/// Throws ValidationError unless `params` holds exactly the tensors of
/// make_param_layout(config) with matching shapes (order may differ).
void validate_params(const ViTConfig& config, const ParamSet& params);

struct ViTModel {
  ViTConfig config;
  ParamSet params;

  std::uint64_t parameter_count() const { return params.num_elements(); }
};

/// Images [n, channels, image_size, image_size] and optional labels.
struct Batch {
  TensorF32 images;
  std::optional<std::vector<std::uint32_t>> labels;

  std::size_t size() const { return images.shape.empty() ? 0 : static_cast<std::size_t>(images.shape[0]); }
};

/// Throws ValidationError when the batch does not match the configuration.
void validate_batch(const ViTConfig& config, const Batch& batch);

/// Called with a tensor index right before the forward pass reads it.
using TensorAccessHook = std::function<void(std::size_t)>;

/// Final-norm class-token features [n, embed_dim], i.e. the head's input.
RowMatrixf forward_features(const ViTConfig& config, const ParamSet& params, const Batch& batch,
                            const TensorAccessHook& on_access = {});

/// Logits [n, num_classes]. Non-finite values are returned as computed.
RowMatrixf forward(const ViTConfig& config, const ParamSet& params, const Batch& batch,
                   const TensorAccessHook& on_access = {});

inline RowMatrixf forward(const ViTModel& model, const Batch& batch) {
  return forward(model.config, model.params, batch);
}

/// Label returned for rows whose logits contain NaN; never equals a real label.
inline constexpr std::int32_t kInvalidLabel = -1;

/// Argmax per row, lowest index wins ties.
std::vector<std::int32_t> predict(const RowMatrixf& logits);

inline std::vector<std::int32_t> predict(const ViTModel& model, const Batch& batch) {
  return predict(forward(model, batch));
}

}  // namespace vitft
