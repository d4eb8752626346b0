#pragma once

// Tanh-squashed Gaussian policy: pathwise sampling, exact log-density with
// the change-of-variables correction, and smoothed target actions.

#include <optional>

#include "opac/diff/tape.hpp"
#include "opac/nets.hpp"
#include "opac/types.hpp"

namespace opac {

struct ActionBounds {
  RowVector low;
  RowVector high;

  static ActionBounds symmetric(int dim, double bound);
  void validate() const;
  int dim() const { return static_cast<int>(low.size()); }
  RowVector scale() const { return 0.5 * (high - low); }
  RowVector center() const { return 0.5 * (high + low); }
  bool contains(const RowVector& a) const;
};

struct ActionSample {
  RowVector pre_squash;
  RowVector action;
  double log_prob = 0.0;
};

struct ActionBatch {
  Matrix pre_squash;
  Matrix action;
  Vector log_prob;
};

// Inverse squashing clamps normalized actions to (-1 + edge, 1 - edge).
inline constexpr double kSquashEdge = 1e-6;

// log(1 - tanh(u)^2), accurate for large |u|.
double log_one_minus_tanh_sq(double u);

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// u = mu + exp(log_std) * eps, a = center + scale * tanh(u).
ActionBatch sample_reparam(const Matrix& mu, const Matrix& log_std, const Matrix& eps, const ActionBounds& bounds);
ActionSample sample_reparam(const RowVector& mu, const RowVector& log_std, const RowVector& eps,
                            const ActionBounds& bounds);

// Density of given actions; throws ContractError for actions outside the closed bounds.
Vector log_prob_of(const Matrix& mu, const Matrix& log_std, const Matrix& actions, const ActionBounds& bounds);
double log_prob_of(const RowVector& mu, const RowVector& log_std, const RowVector& action,
                   const ActionBounds& bounds);

// Noiseless evaluation action center + scale * tanh(mu).
Matrix deterministic_action(const Matrix& mu, const ActionBounds& bounds);

struct SquashedVars {
  diff::Var action;
  diff::Var log_prob;  // one row per sample
};

// Taped counterparts; eps is held constant.
SquashedVars sample_reparam(diff::Var mu, diff::Var log_std, const Matrix& eps, const ActionBounds& bounds);
diff::Var deterministic_action(diff::Var mu, const ActionBounds& bounds);

// Target-policy smoothing noise, in normalized ([-1, 1]) action units.
struct SmoothingSpec {
  double sigma = 0.2;
  double noise_clip = 0.5;

  void validate() const;
};

// Adds noise clipped to +-noise_clip (normalized units, times scale), then
// clips to the bounds.
Matrix smooth_actions(const Matrix& actions, const Matrix& noise, const SmoothingSpec& smoothing,
                      const ActionBounds& bounds);

struct TargetActions {
  Matrix actions;
  Vector log_prob;  // zeros when the policy is deterministic
};

// a' = clip(a + scale * clip(eps, -c, c), low, high), eps ~ N(0, sigma), where
// a is drawn from the target policy (or is its mean action when
// `stochastic` is false). The log-density is evaluated at a'.
TargetActions target_action(const ActorNet& actor_target, const Matrix& next_states,
                            const std::optional<SmoothingSpec>& smoothing, const ActionBounds& bounds,
                            bool stochastic, Rng& rng);

}  // namespace opac
