#include "opac/ensemble.hpp"

#include <algorithm>
#include <array>

#include "opac/diff/tape.hpp"
#include "opac/errors.hpp"

namespace opac {

std::string_view to_string(TargetStrategy s) {
  switch (s) {
    case TargetStrategy::kMeanSmallerTwo: return "mean2";
    case TargetStrategy::kMedianThree: return "median3";
    case TargetStrategy::kMinPair: return "minpair";
  }
  return "?";
}

TargetStrategy parse_strategy(std::string_view name) {
  if (name == "mean2") return TargetStrategy::kMeanSmallerTwo;
  if (name == "median3") return TargetStrategy::kMedianThree;
  if (name == "minpair") return TargetStrategy::kMinPair;
  throw ConfigError("unknown target strategy '" + std::string(name) + "' (expected mean2, median3 or minpair)");
}

double aggregate(double q1, double q2, double q3, TargetStrategy strategy) {
  if (strategy == TargetStrategy::kMinPair) return std::min(q1, q2);
  std::array<double, 3> v{q1, q2, q3};
  std::sort(v.begin(), v.end());
  return strategy == TargetStrategy::kMedianThree ? v[1] : 0.5 * (v[0] + v[1]);
}

Vector aggregate(const std::vector<Vector>& qs, TargetStrategy strategy) {
  const std::size_t need = critics_for(strategy);
  if (qs.size() != need)
    throw ShapeError("aggregate: strategy " + std::string(to_string(strategy)) + " needs " + std::to_string(need) +
                     " critic columns, got " + std::to_string(qs.size()));
  const Eigen::Index n = qs[0].size();
  for (const auto& q : qs)
    if (q.size() != n) throw ShapeError("aggregate: critic columns differ in length");
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i)
    out[i] = aggregate(qs[0][i], qs[1][i], need == 3 ? qs[2][i] : qs[1][i], strategy);
  return out;
}

Vector shared_q_target(const Vector& rewards, const Vector& done, double gamma, const Vector& agg, double alpha,
                       const Vector& logp_next) {
  const Eigen::Index n = rewards.size();
  if (done.size() != n || agg.size() != n || logp_next.size() != n)
    throw ShapeError("shared_q_target: batch length mismatch");
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = shared_q_target(rewards[i], done[i], gamma, agg[i], alpha, logp_next[i]);
  return y;
}

std::size_t critics_for(TargetStrategy strategy) { return strategy == TargetStrategy::kMinPair ? 2 : 3; }

CriticTriple CriticTriple::create(std::size_t count, int state_dim, int action_dim, const std::vector<int>& hidden,
                                  std::uint64_t seed) {
  if (count < 2 || count > 3) throw ConfigError("CriticTriple: expected two or three critics");
  CriticTriple t;
  for (std::size_t i = 0; i < count; ++i) {
    t.models.push_back(CriticNet::create(state_dim, action_dim, hidden, seed + 1000 * (i + 1)));
    t.targets.push_back(t.models.back());
  }
  return t;
}

CriticLosses critic_loss(const CriticTriple& critics, const Matrix& states, const Matrix& actions, const Vector& y) {
  if (y.size() != states.rows() || actions.rows() != states.rows())
    throw ShapeError("critic_loss: batch has " + std::to_string(states.rows()) + " rows but " +
                     std::to_string(y.size()) + " targets");
  if (states.rows() == 0) throw ContractError("critic_loss: empty batch");
  CriticLosses out;
  for (const auto& critic : critics.models) {
    diff::Tape tape;
    const diff::Var s = tape.constant(states);
    const diff::Var a = tape.constant(actions);
    const diff::Var target = tape.constant(Matrix(y));
    const BoundParams bound = bind(tape, critic.params, true);
    const diff::Var loss = mean(square(forward_critic(critic, bound, s, a) - target));
    out.losses.push_back(loss.value()(0, 0));
    out.grads.push_back(gradients_of(tape.backward(loss), bound));
  }
  return out;
}

std::vector<Vector> evaluate_targets(const CriticTriple& critics, const Matrix& states, const Matrix& actions) {
  std::vector<Vector> qs;
  qs.reserve(critics.size());
  for (const auto& t : critics.targets) qs.push_back(forward_critic(t, states, actions));
  return qs;
}

}  // namespace opac
