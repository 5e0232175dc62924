#include "citeimpact/rng.hpp"

#include <cmath>

namespace citeimpact {

double standard_normal(Rng& rng) noexcept {
  // Box-Muller; the second variate is discarded to keep the stream simple.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::int64_t poisson(Rng& rng, double mean) noexcept {
  if (mean <= 0.0) return 0;
  // Split large means so exp(-mean) stays representable.
  std::int64_t total = 0;
  while (mean > 30.0) {
    total += poisson(rng, 30.0);
    mean -= 30.0;
  }
  const double limit = std::exp(-mean);
  double product = uniform01(rng);
  std::int64_t k = 0;
  while (product > limit) {
    ++k;
    product *= uniform01(rng);
  }
  return total + k;
}

AliasTable::AliasTable(std::span<const double> weights) {
  const std::size_t n = weights.size();
  double total = 0.0;
  for (double w : weights) total += w > 0.0 ? w : 0.0;
  if (n == 0 || !(total > 0.0)) return;

  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small;
  std::vector<std::uint32_t> large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = (weights[i] > 0.0 ? weights[i] : 0.0) * static_cast<double>(n) / total;
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    const auto s = small.back();
    small.pop_back();
    const auto l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (auto i : large) prob_[i] = 1.0;
  // Leftovers from rounding.
  for (auto i : small) prob_[i] = 1.0;
}

std::size_t AliasTable::sample(Rng& rng) const noexcept {
  const std::size_t column = uniform_index(rng, prob_.size());
  return uniform01(rng) < prob_[column] ? column : alias_[column];
}

}  // namespace citeimpact
