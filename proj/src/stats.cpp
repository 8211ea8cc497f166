#include "vitft/stats.hpp"

#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "vitft/error.hpp"

namespace vitft {

double z_two_sided(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("confidence must lie in (0, 1)");
  const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, 0.5 + 0.5 * confidence);
}

SampleSummary summarize(std::span<const double> samples, double confidence) {
  SampleSummary s;
  s.n = samples.size();
  if (s.n == 0) return s;
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : samples) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  const double w = z_two_sided(confidence) * s.stddev / std::sqrt(static_cast<double>(s.n));
  s.ci_low = s.mean - w;
  s.ci_high = s.mean + w;
  return s;
}

std::size_t required_iterations(double stddev, double confidence, double half_width_target) {
  if (!(half_width_target > 0.0)) throw ValidationError("half-width target must be positive");
  const double r = z_two_sided(confidence) * stddev / half_width_target;
  return static_cast<std::size_t>(std::ceil(r * r));
}

std::size_t required_iterations(std::span<const double> samples, double confidence, double half_width_target) {
  if (samples.size() < 2) throw ValidationError("required_iterations needs at least two samples");
  return required_iterations(summarize(samples, confidence).stddev, confidence, half_width_target);
}

}  // namespace vitft
