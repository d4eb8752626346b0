#include "opac/tabular.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "opac/errors.hpp"

namespace opac {

void FiniteMDP::validate() const {
  if (n_states < 1 || n_actions < 1) throw ConfigError("FiniteMDP: need at least one state and one action");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("FiniteMDP: gamma must lie in [0, 1)");
  if (transition.size() != static_cast<std::size_t>(n_states * n_actions))
    throw ConfigError("FiniteMDP: transition table has the wrong size");
  if (reward.rows() != n_states || reward.cols() != n_actions) throw ConfigError("FiniteMDP: reward shape mismatch");
  if (terminal.size() != static_cast<std::size_t>(n_states)) throw ConfigError("FiniteMDP: terminal flags size");
  for (const auto& row : transition) {
    if (row.size() != n_states || (row.array() < 0.0).any() || std::abs(row.sum() - 1.0) > 1e-12)
      throw ConfigError("FiniteMDP: every transition row must be a distribution over states");
  }
}

int FiniteMDP::sample_next(int s, int a, Rng& rng) const {
  const RowVector& row = p(s, a);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (int k = 0; k < n_states; ++k) {
    acc += row[k];
    if (u < acc) return k;
  }
  return n_states - 1;
}

double FiniteMDP::sample_reward(int s, int a, Rng& rng) const {
  const double mean = reward(s, a);
  if (reward_noise <= 0.0) return mean;
  return mean + std::normal_distribution<double>(0.0, reward_noise)(rng);
}

QTables QTables::zeros(int n_states, int n_actions) {
  const Matrix z = Matrix::Zero(n_states, n_actions);
  return {z, z, z};
}

QTables QTables::random(int n_states, int n_actions, double scale, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  QTables t = zeros(n_states, n_actions);
  for (int k = 0; k < 3; ++k)
    for (int s = 0; s < n_states; ++s)
      for (int a = 0; a < n_actions; ++a) t[k](s, a) = scale * u(rng);
  return t;
}

int greedy_action(const Matrix& q, int s) {
  int best = 0;
  for (int a = 1; a < q.cols(); ++a)
    if (q(s, a) > q(s, best)) best = a;
  return best;
}

TripleQUpdate triple_q_step(QTables& tables, const FiniteMDP& mdp, int s, int a, double r, int s_next, double lr,
                            TargetStrategy g) {
  if (s < 0 || s >= mdp.n_states || s_next < 0 || s_next >= mdp.n_states || a < 0 || a >= mdp.n_actions)
    throw std::out_of_range("triple_q_step: state or action index out of range");
  if (!(lr >= 0.0 && lr <= 1.0)) throw ContractError("triple_q_step: learning rate must lie in [0, 1]");
  TripleQUpdate u;
  u.target_action = greedy_action(tables.a, s_next);
  if (mdp.terminal[static_cast<std::size_t>(s_next)]) {
    u.target = r;
  } else {
    const int k = u.target_action;
    u.target = r + mdp.gamma * aggregate(tables.a(s_next, k), tables.b(s_next, k), tables.c(s_next, k), g);
  }
  for (int x = 0; x < 3; ++x) tables[x](s, a) = (1.0 - lr) * tables[x](s, a) + lr * u.target;
  return u;
}

Matrix bellman_operator(const FiniteMDP& mdp, const Matrix& q) {
  Vector v(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) v[s] = mdp.terminal[static_cast<std::size_t>(s)] ? 0.0 : q.row(s).maxCoeff();
  Matrix out(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a) out(s, a) = mdp.reward(s, a) + mdp.gamma * mdp.p(s, a).dot(v);
  return out;
}

double bellman_residual(const FiniteMDP& mdp, const Matrix& q) {
  return (bellman_operator(mdp, q) - q).cwiseAbs().maxCoeff();
}

Matrix value_iteration(const FiniteMDP& mdp, double tol) {
  if (!(tol > 0.0)) throw ContractError("value_iteration: tol must be positive");
  mdp.validate();
  Matrix q = Matrix::Zero(mdp.n_states, mdp.n_actions);
  for (;;) {
    Matrix next = bellman_operator(mdp, q);
    const double change = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    // ||T q - q|| <= gamma * change once q has been replaced by T q_old.
    if (mdp.gamma * change < tol) break;
  }
  return q;
}

ConvergenceResult run_convergence_experiment(const FiniteMDP& mdp, TargetStrategy g, const ConvergenceOptions& opts) {
  mdp.validate();
  if (opts.record_every == 0) throw ConfigError("run_convergence_experiment: record_every must be >= 1");
  ConvergenceResult res;
  res.q_star = value_iteration(mdp, opts.oracle_tol);
  res.tables = opts.init_scale > 0.0 ? QTables::random(mdp.n_states, mdp.n_actions, opts.init_scale, opts.seed + 1)
                                     : QTables::zeros(mdp.n_states, mdp.n_actions);
  Rng rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> any_action(0, mdp.n_actions - 1);
  std::uniform_int_distribution<int> any_state(0, mdp.n_states - 1);
  std::vector<std::uint64_t> visits(static_cast<std::size_t>(mdp.n_states * mdp.n_actions), 0);

  auto record = [&](std::uint64_t step) {
    res.trajectory.push_back({step, (res.tables.a - res.q_star).cwiseAbs().maxCoeff(),
                              (res.tables.b - res.q_star).cwiseAbs().maxCoeff(),
                              (res.tables.c - res.q_star).cwiseAbs().maxCoeff()});
  };
  record(0);

  int s = any_state(rng);
  for (std::uint64_t t = 1; t <= opts.steps; ++t) {
    const int a = unit(rng) < opts.schedule.epsilon ? any_action(rng) : greedy_action(res.tables.a, s);
    const int s_next = mdp.sample_next(s, a, rng);
    const double r = mdp.sample_reward(s, a, rng);
    auto& n = visits[static_cast<std::size_t>(s * mdp.n_actions + a)];
    const bool terminal = mdp.terminal[static_cast<std::size_t>(s_next)];
    const double max_target = terminal ? r : r + mdp.gamma * res.tables.a.row(s_next).maxCoeff();
    const TripleQUpdate u = triple_q_step(res.tables, mdp, s, a, r, s_next, opts.schedule.lr(n), g);
    ++n;
    if (opts.log_targets) {
      res.g_targets.push_back(u.target);
      res.max_targets.push_back(max_target);
    }
    s = terminal ? any_state(rng) : s_next;
    if (t % opts.record_every == 0 || t == opts.steps) record(t);
  }
  return res;
}

void write_convergence_csv(std::ostream& out, const ConvergenceResult& result, TargetStrategy g,
                           std::uint64_t seed, bool header) {
  if (header) out << "step,sup_error_A,sup_error_B,sup_error_C,strategy,seed\n";
  char buf[160];
  for (const auto& r : result.trajectory) {
    std::snprintf(buf, sizeof(buf), "%llu,%.10g,%.10g,%.10g,", static_cast<unsigned long long>(r.step), r.sup_a,
                  r.sup_b, r.sup_c);
    out << buf << to_string(g) << ',' << seed << '\n';
  }
}

}  // namespace opac
