#include "attelig/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/normal.hpp>

#include "attelig/error.hpp"

namespace attelig {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::InconsistentMissingness: return "InconsistentMissingness";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::RuleReferencesMissingCovariate: return "RuleReferencesMissingCovariate";
    case ErrorCode::InvalidFoldCount: return "InvalidFoldCount";
    case ErrorCode::UnknownCovariate: return "UnknownCovariate";
    case ErrorCode::MissingValueInRequiredColumn: return "MissingValueInRequiredColumn";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::Separation: return "Separation";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NonPositiveResponse: return "NonPositiveResponse";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::MemberAllFailed: return "MemberAllFailed";
    case ErrorCode::InsufficientControls: return "InsufficientControls";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::ClipViolation: return "ClipViolation";
    case ErrorCode::DegenerateAlpha: return "DegenerateAlpha";
    case ErrorCode::EmptyTreatedEligible: return "EmptyTreatedEligible";
    case ErrorCode::ResampleDegenerate: return "ResampleDegenerate";
    case ErrorCode::ZeroMass: return "ZeroMass";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

void KahanSum::add(double x) noexcept {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

double compensated_sum(std::span<const double> xs) noexcept {
  KahanSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

double mean(std::span<const double> xs) noexcept {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  return compensated_sum(xs) / static_cast<double>(xs.size());
}

double sample_sd(std::span<const double> xs) noexcept {
  if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(xs);
  KahanSum s;
  for (double x : xs) s.add((x - m) * (x - m));
  return std::sqrt(s.value() / static_cast<double>(xs.size() - 1));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "normal quantile requires p in (0, 1)");
  }
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double two_sided_z(double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "confidence level must lie in (0, 1)");
  }
  return normal_quantile(1.0 - (1.0 - level) / 2.0);
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "logit requires p in (0, 1)");
  }
  return std::log(p / (1.0 - p));
}

double clip(double x, double lo, double hi) noexcept { return std::clamp(x, lo, hi); }

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(master) ^ (stream * 0xd1b54a32d192ed03ULL + 1));
}

}  // namespace attelig
