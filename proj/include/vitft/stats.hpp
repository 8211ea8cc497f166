#pragma once

#include <cstddef>
#include <span>

namespace vitft {

/// Two-sided standard normal quantile for `confidence` (1.959964 at 0.95).
double z_two_sided(double confidence);

struct SampleSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) standard deviation; 0 when n < 2
  double ci_low = 0.0;
  double ci_high = 0.0;

  double half_width() const { return 0.5 * (ci_high - ci_low); }
};

/// Mean with a normal-approximation interval mean +- z * s / sqrt(n).
SampleSummary summarize(std::span<const double> samples, double confidence);

/// Sample count needed for a CI half-width of `half_width_target`:
/// ceil((z * s / E)^2). Needs at least two samples.
std::size_t required_iterations(std::span<const double> samples, double confidence, double half_width_target);

/// Same rule from a known standard deviation.
std::size_t required_iterations(double stddev, double confidence, double half_width_target);

}  // namespace vitft
