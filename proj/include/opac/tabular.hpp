#pragma once

// Clipped triple Q-learning on finite MDPs, with exact value iteration as the
// reference solution.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "opac/ensemble.hpp"
#include "opac/types.hpp"

namespace opac {

struct FiniteMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<RowVector> transition;  // index s * n_actions + a -> distribution over next states
  Matrix reward;                      // mean reward, n_states x n_actions
  double reward_noise = 0.0;          // std of zero-mean Gaussian reward noise
  double gamma = 0.9;
  std::vector<bool> terminal;

  void validate() const;
  const RowVector& p(int s, int a) const { return transition[static_cast<std::size_t>(s * n_actions + a)]; }
  int sample_next(int s, int a, Rng& rng) const;
  double sample_reward(int s, int a, Rng& rng) const;
};

struct QTables {
  Matrix a;
  Matrix b;
  Matrix c;

  static QTables zeros(int n_states, int n_actions);
  // Independent uniform [0, scale) draws per table.
  static QTables random(int n_states, int n_actions, double scale, std::uint64_t seed);
  Matrix& operator[](int i) { return i == 0 ? a : (i == 1 ? b : c); }
  const Matrix& operator[](int i) const { return i == 0 ? a : (i == 1 ? b : c); }
};

// Lowest index among maximizers.
int greedy_action(const Matrix& q, int s);

struct TripleQUpdate {
  double target = 0.0;     // y
  int target_action = 0;   // a* = argmax_a Q^A(s', a)
};

// y = r + gamma * g(Q^A(s',a*), Q^B(s',a*), Q^C(s',a*)) (y = r for terminal s'),
// then Q^X(s,a) <- (1 - lr) Q^X(s,a) + lr * y for X in {A, B, C}.
TripleQUpdate triple_q_step(QTables& tables, const FiniteMDP& mdp, int s, int a, double r, int s_next, double lr,
                            TargetStrategy g);

// Q* with sup-norm Bellman residual below tol.
Matrix value_iteration(const FiniteMDP& mdp, double tol);
Matrix bellman_operator(const FiniteMDP& mdp, const Matrix& q);
double bellman_residual(const FiniteMDP& mdp, const Matrix& q);

struct LearningSchedule {
  double decay = 0.01;   // lr = 1 / (1 + decay * visits(s, a))
  double epsilon = 0.3;  // epsilon-greedy over Q^A
  double lr(std::uint64_t visits) const { return 1.0 / (1.0 + decay * static_cast<double>(visits)); }
};

struct ConvergenceOptions {
  std::uint64_t steps = 200000;
  std::uint64_t record_every = 1000;
  std::uint64_t seed = 0;
  LearningSchedule schedule;
  double init_scale = 1.0;  // 0 gives identical all-zero tables
  double oracle_tol = 1e-10;
  bool log_targets = false;
};

struct ErrorRecord {
  std::uint64_t step = 0;
  double sup_a = 0.0;
  double sup_b = 0.0;
  double sup_c = 0.0;
};

struct ConvergenceResult {
  Matrix q_star;
  QTables tables;
  std::vector<ErrorRecord> trajectory;
  // Filled when log_targets is set: the aggregated target and the
  // single-estimator r + gamma * max_a Q^A(s', a) at every step.
  std::vector<double> g_targets;
  std::vector<double> max_targets;
};

ConvergenceResult run_convergence_experiment(const FiniteMDP& mdp, TargetStrategy g, const ConvergenceOptions& opts);

void write_convergence_csv(std::ostream& out, const ConvergenceResult& result, TargetStrategy g,
                           std::uint64_t seed, bool header = true);

}  // namespace opac
