#pragma once

// Three-critic value machinery: opportunistic aggregation, the shared
// bootstrap target and the per-critic regression losses.

#include <string>
#include <string_view>
#include <vector>

#include "opac/nets.hpp"
#include "opac/types.hpp"

namespace opac {

enum class TargetStrategy {
  kMeanSmallerTwo,  // mean of the two smallest of three
  kMedianThree,     // middle of three
  kMinPair,         // min(q1, q2); two-critic baselines only
};

std::string_view to_string(TargetStrategy s);
TargetStrategy parse_strategy(std::string_view name);  // "mean2", "median3", "minpair"

double aggregate(double q1, double q2, double q3, TargetStrategy strategy);

// Elementwise over a batch. `qs` holds one column per critic (2 for kMinPair, 3 otherwise).
Vector aggregate(const std::vector<Vector>& qs, TargetStrategy strategy);

// y = r + gamma * (1 - done) * (agg - alpha * logp_next)
inline double shared_q_target(double reward, double done, double gamma, double agg, double alpha,
                              double logp_next) {
  return reward + gamma * (1.0 - done) * (agg - alpha * logp_next);
}

Vector shared_q_target(const Vector& rewards, const Vector& done, double gamma, const Vector& agg, double alpha,
                       const Vector& logp_next);

// Critic models with their target copies. Holds three critics for the
// opportunistic strategies and two for kMinPair baselines.
struct CriticTriple {
  std::vector<CriticNet> models;
  std::vector<CriticNet> targets;

  static CriticTriple create(std::size_t count, int state_dim, int action_dim, const std::vector<int>& hidden,
                             std::uint64_t seed);
  std::size_t size() const { return models.size(); }
};

std::size_t critics_for(TargetStrategy strategy);

struct CriticLosses {
  std::vector<double> losses;
  std::vector<ParamSet> grads;  // gradient of each loss w.r.t. its own critic model
};

// loss_i = mean_b (Q_i(s_b, a_b) - y_b)^2 with y held constant.
CriticLosses critic_loss(const CriticTriple& critics, const Matrix& states, const Matrix& actions, const Vector& y);

// Target-network evaluation of every critic at (s', a').
std::vector<Vector> evaluate_targets(const CriticTriple& critics, const Matrix& states, const Matrix& actions);

}  // namespace opac
