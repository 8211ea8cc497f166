#include "vitft/toygen.hpp"

#include <cmath>
#include <string>

#include "vitft/error.hpp"
#include "vitft/rng.hpp"

namespace vitft {

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ViTModel make_toy_model(const ViTConfig& config, std::uint64_t seed, const ToyInit& init) {
  ViTModel model{config, make_param_layout(config)};
  for (std::size_t i = 0; i < model.params.num_tensors(); ++i) {
    const auto& e = model.params.entry(i);
    auto rng = make_rng(derive_seed(seed, i));
    auto values = model.params.tensor(i);
    const bool is_norm = e.name.find("norm") != std::string::npos;
    for (auto& v : values) {
      double x = 0.0;
      if (is_norm) {
        x = ends_with(e.name, ".weight") ? 1.0 + init.norm_gamma_std * standard_normal(rng) : 0.0;
      } else if (e.name == "cls_token" || e.name == "pos_embed") {
        x = init.embed_std * standard_normal(rng);
      } else if (ends_with(e.name, ".bias")) {
        x = init.bias_std * standard_normal(rng);
      } else {
        do {
          x = standard_normal(rng);
        } while (std::fabs(x) > 2.0);
        x *= init.weight_std;
      }
      v = static_cast<float>(x);
    }
  }
  return model;
}

void fit_class_mean_head(ViTModel& model, const Batch& fit, double weight_std) {
  if (!fit.labels) throw ValidationError("fitting the head needs labelled images");
  if (!(weight_std > 0)) throw ValidationError("head weight scale must be positive");
  const RowMatrix<double> features = forward_features(model.config, model.params, fit).cast<double>();
  const auto classes = model.config.num_classes;
  RowMatrix<double> means = RowMatrix<double>::Zero(classes, features.cols());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(classes);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const auto c = static_cast<Eigen::Index>((*fit.labels)[static_cast<std::size_t>(i)]);
    if (c >= classes) throw ValidationError("label out of range");
    means.row(c) += features.row(i);
    counts(c) += 1.0;
  }
  for (Eigen::Index c = 0; c < classes; ++c) {
    if (counts(c) == 0) throw ValidationError("every class needs at least one fitting image");
    means.row(c) /= counts(c);
  }
  // Nearest class mean in centred coordinates: score_c = (f - g) . m_c - |m_c|^2 / 2.
  const RowVector<double> global = features.colwise().mean();
  const RowMatrix<double> centred = means.rowwise() - global;
  const double rms = std::sqrt(centred.squaredNorm() / static_cast<double>(centred.size()));
  const double alpha = rms > 0 ? weight_std / rms : 1.0;

  auto weight = model.params.tensor("head.weight");
  auto bias = model.params.tensor("head.bias");
  for (Eigen::Index c = 0; c < classes; ++c) {
    for (Eigen::Index j = 0; j < centred.cols(); ++j) {
      weight[static_cast<std::size_t>(c * centred.cols() + j)] = static_cast<float>(alpha * centred(c, j));
    }
    const double b = -centred.row(c).dot(global) - 0.5 * centred.row(c).squaredNorm();
    bias[static_cast<std::size_t>(c)] = static_cast<float>(alpha * b);
  }
}

Batch make_synthetic_dataset(const ViTConfig& config, std::size_t n, std::uint64_t task_seed,
                             std::uint64_t sample_seed, double noise) {
  config.validate();
  const auto c = config.channels;
  const auto s = config.image_size;
  const auto classes = config.num_classes;
  auto rng = make_rng(derive_seed(task_seed, 0xDA7A));

  // Each class prototype is a per-channel offset plus two random low-frequency
  // plane waves per channel.
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<double> offsets(static_cast<std::size_t>(classes * c));
  for (auto& o : offsets) o = 2.0 * uniform_unit(rng) - 1.0;
  std::vector<Wave> waves(static_cast<std::size_t>(classes * c * 2));
  for (auto& w : waves) {
    w.fx = 0.5 + 2.5 * uniform_unit(rng);
    w.fy = 0.5 + 2.5 * uniform_unit(rng);
    w.phase = 6.283185307179586 * uniform_unit(rng);
    w.amp = 0.5 + uniform_unit(rng);
  }

  rng = make_rng(derive_seed(task_seed, 0x5A3B1E, sample_seed));
  Batch b;
  b.images = TensorF32("images", {static_cast<std::int64_t>(n), c, s, s});
  b.labels = std::vector<std::uint32_t>(n);
  auto* px = b.images.values.data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::int64_t>(i % static_cast<std::size_t>(classes));
    (*b.labels)[i] = static_cast<std::uint32_t>(label);
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const Wave& w0 = waves[static_cast<std::size_t>((label * c + ch) * 2)];
      const Wave& w1 = waves[static_cast<std::size_t>((label * c + ch) * 2 + 1)];
      for (std::int64_t y = 0; y < s; ++y) {
        for (std::int64_t x = 0; x < s; ++x) {
          const double u = static_cast<double>(x) / s, v = static_cast<double>(y) / s;
          const double base = offsets[static_cast<std::size_t>(label * c + ch)] + w0.amp * std::sin(6.283185307179586 * (w0.fx * u + w0.fy * v) + w0.phase) +
                              w1.amp * std::sin(6.283185307179586 * (w1.fx * u - w1.fy * v) + w1.phase);
          *px++ = static_cast<float>(base + noise * standard_normal(rng));
        }
      }
    }
  }
  return b;
}

}  // namespace vitft
