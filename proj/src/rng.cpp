#include "vqdm/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "vqdm/error.hpp"

namespace vqdm {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error(Errc::invalid_argument, "Rng::below: empty range");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return v % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw Error(Errc::invalid_argument, "categorical: weights sum to zero");
  const double target = uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (target < acc) return i;
  }
  return last_positive;
}

std::size_t Rng::categorical_log(std::span<const double> log_weights) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : log_weights) top = std::max(top, v);
  if (!std::isfinite(top)) {
    throw Error(Errc::invalid_argument, "categorical_log: no finite log-weight");
  }
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - top);
  return categorical(w);
}

}  // namespace vqdm
