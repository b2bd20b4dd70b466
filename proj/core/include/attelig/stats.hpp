#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace attelig {

/// Neumaier-compensated accumulator.
class KahanSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_sum(std::span<const double> xs) noexcept;
double mean(std::span<const double> xs) noexcept;

/// Sample standard deviation (n - 1 denominator); NaN when fewer than two values.
double sample_sd(std::span<const double> xs) noexcept;

/// Standard normal quantile.
double normal_quantile(double p);

/// z_{1 - (1 - level)/2}, e.g. 1.959964 for level 0.95.
double two_sided_z(double level);

inline double expit(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
double logit(double p);
double clip(double x, double lo, double hi) noexcept;

/// SplitMix64 step; used to derive independent per-task seeds from a master seed.
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;

}  // namespace attelig

