#include "vitft/vit.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "vitft/error.hpp"

namespace vitft {

void ViTConfig::validate() const {
  auto positive = [](std::int64_t v, const char* what) {
    if (v <= 0) throw ValidationError(std::string("config: ") + what + " must be positive");
  };
  positive(image_size, "image_size");
  positive(patch_size, "patch_size");
  positive(channels, "channels");
  positive(embed_dim, "embed_dim");
  positive(num_heads, "num_heads");
  positive(depth, "depth");
  positive(num_classes, "num_classes");
  if (image_size % patch_size != 0) {
    throw ValidationError("config: image_size must be divisible by patch_size");
  }
  if (embed_dim % num_heads != 0) {
    throw ValidationError("config: embed_dim must be divisible by num_heads");
  }
  if (!(mlp_ratio > 0) || mlp_hidden() <= 0) {
    throw ValidationError("config: mlp_ratio must give a positive hidden width");
  }
  if (!(layernorm_eps > 0)) throw ValidationError("config: layernorm_eps must be positive");
}

std::int64_t ViTConfig::mlp_hidden() const {
  return static_cast<std::int64_t>(std::llround(static_cast<double>(embed_dim) * mlp_ratio));
}

std::uint64_t ViTConfig::parameter_count() const {
  const auto d = static_cast<std::uint64_t>(embed_dim);
  const auto m = static_cast<std::uint64_t>(mlp_hidden());
  const auto c = static_cast<std::uint64_t>(num_classes);
  const auto t = static_cast<std::uint64_t>(num_tokens());
  const auto pd = static_cast<std::uint64_t>(patch_dim());
  const std::uint64_t embed = d * pd + d + d + t * d;
  const std::uint64_t block = 4 * (d * d + d) + 2 * (2 * d) + (m * d + m) + (d * m + d);
  const std::uint64_t tail = 2 * d + c * d + c;
  return embed + static_cast<std::uint64_t>(depth) * block + tail;
}

ViTConfig ViTConfig::toy_tiny() { return ViTConfig{}; }

ViTConfig ViTConfig::toy_small() {
  ViTConfig c;
  c.embed_dim = 128;
  c.num_heads = 4;
  c.depth = 6;
  return c;
}

ViTConfig ViTConfig::toy_base() {
  ViTConfig c;
  c.embed_dim = 192;
  c.num_heads = 6;
  c.depth = 8;
  return c;
}

ViTConfig ViTConfig::preset(const std::string& name) {
  if (name == "toy-tiny") return toy_tiny();
  if (name == "toy-small") return toy_small();
  if (name == "toy-base") return toy_base();
  throw ValidationError("unknown model preset '" + name + "'");
}

std::vector<std::pair<std::string, Shape>> param_shapes(const ViTConfig& config) {
  config.validate();
  const auto d = config.embed_dim;
  const auto m = config.mlp_hidden();
  std::vector<std::pair<std::string, Shape>> out;
  auto add = [&](std::string name, Shape shape) { out.emplace_back(std::move(name), std::move(shape)); };
  add("patch_embed.weight", {d, config.patch_dim()});
  add("patch_embed.bias", {d});
  add("cls_token", {d});
  add("pos_embed", {config.num_tokens(), d});
  for (std::int64_t i = 0; i < config.depth; ++i) {
    const std::string b = "blocks." + std::to_string(i) + ".";
    add(b + "norm1.weight", {d});
    add(b + "norm1.bias", {d});
    for (const char* proj : {"q", "k", "v", "proj"}) {
      add(b + "attn." + proj + ".weight", {d, d});
      add(b + "attn." + proj + ".bias", {d});
    }
    add(b + "norm2.weight", {d});
    add(b + "norm2.bias", {d});
    add(b + "mlp.fc1.weight", {m, d});
    add(b + "mlp.fc1.bias", {m});
    add(b + "mlp.fc2.weight", {d, m});
    add(b + "mlp.fc2.bias", {d});
  }
  add("norm.weight", {d});
  add("norm.bias", {d});
  add("head.weight", {config.num_classes, d});
  add("head.bias", {config.num_classes});
  return out;
}

ParamSet make_param_layout(const ViTConfig& config) {
  ParamSet p;
  for (auto& [name, shape] : param_shapes(config)) p.add(std::move(name), std::move(shape));
  return p;
}

void validate_params(const ViTConfig& config, const ParamSet& params) {
  const auto expected = param_shapes(config);
  if (params.num_tensors() != expected.size()) {
    throw ValidationError("expected " + std::to_string(expected.size()) + " tensors, got " +
                          std::to_string(params.num_tensors()));
  }
  for (const auto& [name, shape] : expected) {
    if (!params.contains(name)) throw ValidationError("missing tensor '" + name + "'");
    const auto& got = params.entry(params.index_of(name));
    if (got.shape != shape) {
      throw ValidationError("tensor '" + name + "' has shape " + shape_to_string(got.shape) +
                            ", expected " + shape_to_string(shape));
    }
  }
}

void validate_batch(const ViTConfig& config, const Batch& batch) {
  const Shape expected{static_cast<std::int64_t>(batch.size()), config.channels, config.image_size,
                       config.image_size};
  if (batch.images.shape.size() != 4 || batch.images.shape != expected || batch.size() == 0) {
    throw ValidationError("batch images have shape " + shape_to_string(batch.images.shape) +
                          ", expected [n," + std::to_string(config.channels) + "," +
                          std::to_string(config.image_size) + "," +
                          std::to_string(config.image_size) + "] with n >= 1");
  }
  if (batch.labels && batch.labels->size() != batch.size()) {
    throw ValidationError("label count does not match image count");
  }
}

namespace {

using ConstMatrixMap = Eigen::Map<const RowMatrixf>;
using ConstRowMap = Eigen::Map<const RowVectorf>;

class WeightReader {
 public:
  WeightReader(const ParamSet& params, const TensorAccessHook& hook) : params_(params), hook_(hook) {}

  ConstMatrixMap matrix(const std::string& name) {
    const auto i = touch(name);
    const auto& e = params_.entry(i);
    const auto rows = e.shape.size() == 1 ? 1 : e.shape[0];
    const auto cols = static_cast<Eigen::Index>(e.size) / std::max<Eigen::Index>(rows, 1);
    return {params_.tensor(i).data(), rows, cols};
  }

  ConstRowMap row(const std::string& name) {
    const auto i = touch(name);
    return {params_.tensor(i).data(), static_cast<Eigen::Index>(params_.entry(i).size)};
  }

 private:
  std::size_t touch(const std::string& name) {
    const auto i = params_.index_of(name);
    if (hook_ && seen_.emplace(i, true).second) hook_(i);
    return i;
  }

  const ParamSet& params_;
  const TensorAccessHook& hook_;
  std::map<std::size_t, bool> seen_;
};

// x W^T + b for W stored [out, in].
template <typename Derived>
RowMatrixf linear(const Eigen::MatrixBase<Derived>& x, const ConstMatrixMap& w, const ConstRowMap& b) {
  RowMatrixf y = x * w.transpose();
  y.rowwise() += b;
  return y;
}

}  // namespace

namespace {

RowMatrixf encode_class_token(const ViTConfig& config, const Batch& batch, WeightReader& w) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto d = config.embed_dim;
  const auto p = config.patch_size;
  const auto g = config.grid_size();
  const auto s = config.image_size;
  const auto c = config.channels;
  const auto np = config.num_patches();
  const auto t = config.num_tokens();
  const auto dk = config.head_dim();
  const float eps = static_cast<float>(config.layernorm_eps);

  // Patchify: row (b, gy, gx), column (channel, py, px).
  RowMatrixf patches(n * np, config.patch_dim());
  const float* img = batch.images.values.data();
  for (Eigen::Index b = 0; b < n; ++b) {
    for (std::int64_t gy = 0; gy < g; ++gy) {
      for (std::int64_t gx = 0; gx < g; ++gx) {
        const auto row = b * np + gy * g + gx;
        Eigen::Index col = 0;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          for (std::int64_t py = 0; py < p; ++py) {
            for (std::int64_t px = 0; px < p; ++px) {
              patches(row, col++) = img[((b * c + ch) * s + gy * p + py) * s + gx * p + px];
            }
          }
        }
      }
    }
  }

  const RowMatrixf embedded = linear(patches, w.matrix("patch_embed.weight"), w.row("patch_embed.bias"));
  const auto cls = w.row("cls_token");
  const auto pos = w.matrix("pos_embed");

  RowMatrixf h(n * t, d);
  for (Eigen::Index b = 0; b < n; ++b) {
    h.row(b * t) = cls + pos.row(0);
    h.block(b * t + 1, 0, np, d) = embedded.block(b * np, 0, np, d) + pos.bottomRows(np);
  }

  RowMatrixf heads(n * t, d);
  for (std::int64_t i = 0; i < config.depth; ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";

    const RowMatrixf y = layernorm(h, w.row(pre + "norm1.weight"), w.row(pre + "norm1.bias"), eps);
    const RowMatrixf q = linear(y, w.matrix(pre + "attn.q.weight"), w.row(pre + "attn.q.bias"));
    const RowMatrixf k = linear(y, w.matrix(pre + "attn.k.weight"), w.row(pre + "attn.k.bias"));
    const RowMatrixf v = linear(y, w.matrix(pre + "attn.v.weight"), w.row(pre + "attn.v.bias"));
    for (Eigen::Index b = 0; b < n; ++b) {
      for (std::int64_t hd = 0; hd < config.num_heads; ++hd) {
        heads.block(b * t, hd * dk, t, dk) = attention(q.block(b * t, hd * dk, t, dk),
                                                       k.block(b * t, hd * dk, t, dk),
                                                       v.block(b * t, hd * dk, t, dk));
      }
    }
    h += linear(heads, w.matrix(pre + "attn.proj.weight"), w.row(pre + "attn.proj.bias"));

    const RowMatrixf y2 = layernorm(h, w.row(pre + "norm2.weight"), w.row(pre + "norm2.bias"), eps);
    const RowMatrixf hidden = gelu(linear(y2, w.matrix(pre + "mlp.fc1.weight"), w.row(pre + "mlp.fc1.bias")));
    h += linear(hidden, w.matrix(pre + "mlp.fc2.weight"), w.row(pre + "mlp.fc2.bias"));
  }

  RowMatrixf cls_out(n, d);
  for (Eigen::Index b = 0; b < n; ++b) cls_out.row(b) = h.row(b * t);
  return layernorm(cls_out, w.row("norm.weight"), w.row("norm.bias"), eps);
}

}  // namespace

RowMatrixf forward_features(const ViTConfig& config, const ParamSet& params, const Batch& batch,
                            const TensorAccessHook& on_access) {
  config.validate();
  validate_params(config, params);
  validate_batch(config, batch);
  WeightReader w(params, on_access);
  return encode_class_token(config, batch, w);
}

RowMatrixf forward(const ViTConfig& config, const ParamSet& params, const Batch& batch,
                   const TensorAccessHook& on_access) {
  config.validate();
  validate_params(config, params);
  validate_batch(config, batch);
  WeightReader w(params, on_access);
  const RowMatrixf features = encode_class_token(config, batch, w);
  return linear(features, w.matrix("head.weight"), w.row("head.bias"));
}

std::vector<std::int32_t> predict(const RowMatrixf& logits) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    std::int32_t best = 0;
    bool invalid = logits.cols() == 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const float v = logits(r, j);
      if (std::isnan(v)) {
        invalid = true;
        break;
      }
      if (v > logits(r, best)) best = static_cast<std::int32_t>(j);
    }
    out[static_cast<std::size_t>(r)] = invalid ? kInvalidLabel : best;
  }
  return out;
}

}  // namespace vitft
