#pragma once

// Randomized comparison of tape gradients against central finite differences
// of the plain (non-taped) forward paths.

#include <cstdint>
#include <string>
#include <vector>

#include "opac/types.hpp"

namespace opac {

enum class GradCheckKind { kActorLoss, kDeterministicActorLoss, kCriticLoss, kLogProb, kAlphaObjective };

std::string to_string(GradCheckKind kind);

struct GradCheckCase {
  int index = 0;
  GradCheckKind kind = GradCheckKind::kActorLoss;
  std::string description;
  std::size_t parameters = 0;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  double max_relative_error = 0.0;
  bool passed(double tol) const { return max_relative_error < tol; }
};

// Per entry |a - n| / max(|a|, |n|, denom_floor).
double max_relative_error(const Vector& analytic, const Vector& numeric, double denom_floor);

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckDenomFloor = 1e-6;

GradCheckReport run_gradcheck(int configurations, std::uint64_t seed, double step = kGradCheckStep);

}  // namespace opac
