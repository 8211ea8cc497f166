#pragma once

// Seeded toy checkpoints and synthetic datasets, so campaigns need no
// external model or data.

#include <cstdint>

#include "vitft/vit.hpp"

namespace vitft {

struct ToyInit {
  double weight_std = 0.02;  // linear weights, truncated at two standard deviations
  double bias_std = 0.0;
  double embed_std = 0.02;   // class token and positional embeddings
  double norm_gamma_std = 0.0;
};

/// Deterministic random weights for `config`.
ViTModel make_toy_model(const ViTConfig& config, std::uint64_t seed, const ToyInit& init = {});

/// Replaces the classifier head with a nearest-class-mean probe fitted on the
/// labelled images in `fit`. Logits are rescaled so head weights have RMS
/// `weight_std`; the argmax does not depend on that scale.
void fit_class_mean_head(ViTModel& model, const Batch& fit, double weight_std = 0.02);

/// `n` images of per-class smooth prototypes plus Gaussian noise; label i % num_classes.
/// `task_seed` fixes the class prototypes, `sample_seed` the noise draws.
Batch make_synthetic_dataset(const ViTConfig& config, std::size_t n, std::uint64_t task_seed,
                             std::uint64_t sample_seed = 0, double noise = 0.5);

}  // namespace vitft
