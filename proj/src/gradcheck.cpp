#include "opac/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "opac/agent.hpp"
#include "opac/diff/finite_diff.hpp"
#include "opac/ensemble.hpp"
#include "opac/errors.hpp"
#include "opac/policy.hpp"

namespace opac {
namespace {

struct RandomSetup {
  int state_dim;
  int action_dim;
  int batch;
  std::vector<int> hidden;
  ActionBounds bounds;
  Matrix states;
  Matrix actions;
  Matrix eps;
  double alpha;
};

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Matrix uniform_matrix(Eigen::Index r, Eigen::Index c, double lo, double hi, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = uniform(rng, lo, hi);
  return m;
}

RandomSetup random_setup(Rng& rng) {
  RandomSetup s;
  s.state_dim = uniform_int(rng, 1, 4);
  s.action_dim = uniform_int(rng, 1, 3);
  s.batch = uniform_int(rng, 2, 6);
  const int depth = uniform_int(rng, 1, 2);
  for (int i = 0; i < depth; ++i) s.hidden.push_back(uniform_int(rng, 3, 8));
  s.bounds.low.resize(s.action_dim);
  s.bounds.high.resize(s.action_dim);
  for (int i = 0; i < s.action_dim; ++i) {
    s.bounds.low[i] = uniform(rng, -2.0, -0.5);
    s.bounds.high[i] = uniform(rng, 0.5, 2.0);
  }
  s.states = uniform_matrix(s.batch, s.state_dim, -1.0, 1.0, rng);
  s.actions = uniform_matrix(s.batch, s.action_dim, -0.5, 0.5, rng);
  s.eps = standard_normal(s.batch, s.action_dim, rng);
  s.alpha = uniform(rng, 0.05, 0.5);
  return s;
}

// Smooth activations keep finite differences away from ReLU kinks.
ActorNet random_actor(const RandomSetup& s, std::uint64_t seed) {
  return ActorNet::create(MLPSpec{s.state_dim, s.hidden, s.action_dim, Activation::kTanh}, seed);
}

CriticNet random_critic(const RandomSetup& s, std::uint64_t seed) {
  return CriticNet::create(s.state_dim, s.action_dim, s.hidden, seed, Activation::kTanh);
}

double plain_actor_loss(const ActorNet& actor, const CriticNet& critic, const RandomSetup& s, bool stochastic) {
  const ActorOutput out = forward_actor(actor, s.states);
  if (!stochastic) return -forward_critic(critic, s.states, deterministic_action(out.mu, s.bounds)).mean();
  const ActionBatch b = sample_reparam(out.mu, out.log_std, s.eps, s.bounds);
  return (s.alpha * b.log_prob - forward_critic(critic, s.states, b.action)).mean();
}

struct Comparison {
  std::size_t parameters;
  double error;
};

Comparison compare(const Vector& analytic, const std::function<double(const Vector&)>& f, const Vector& at,
                   double step) {
  const Vector numeric = diff::finite_diff_gradient(f, at, step);
  return {static_cast<std::size_t>(at.size()), max_relative_error(analytic, numeric, kGradCheckDenomFloor)};
}

Comparison check_actor(const RandomSetup& s, std::uint64_t seed, bool stochastic, double step) {
  const ActorNet actor = random_actor(s, derive_seed(seed, 1));
  const CriticNet critic = random_critic(s, derive_seed(seed, 2));
  const PolicyLossResult pl = policy_loss(actor, critic, s.states, s.eps, s.alpha, s.bounds, stochastic);
  ActorNet probe = actor;
  return compare(
      pl.grad.flatten(),
      [&](const Vector& p) {
        probe.params.assign(p);
        return plain_actor_loss(probe, critic, s, stochastic);
      },
      actor.params.flatten(), step);
}

Comparison check_critic(const RandomSetup& s, std::uint64_t seed, std::size_t which, double step) {
  CriticTriple triple;
  for (std::size_t i = 0; i < 3; ++i) {
    triple.models.push_back(random_critic(s, derive_seed(seed, 10 + i)));
    triple.targets.push_back(triple.models.back());
  }
  Rng rng(derive_seed(seed, 20));
  const Vector y = uniform_matrix(s.batch, 1, -2.0, 2.0, rng).col(0);
  const CriticLosses cl = critic_loss(triple, s.states, s.actions, y);
  CriticNet probe = triple.models[which];
  return compare(
      cl.grads[which].flatten(),
      [&](const Vector& p) {
        probe.params.assign(p);
        return (forward_critic(probe, s.states, s.actions) - y).squaredNorm() / double(s.batch);
      },
      probe.params.flatten(), step);
}

// Summed log-density of reparameterized samples w.r.t. (mu, log_std), noise frozen.
Comparison check_log_prob(const RandomSetup& s, std::uint64_t seed, double step) {
  Rng rng(derive_seed(seed, 30));
  const Matrix mu = uniform_matrix(s.batch, s.action_dim, -1.0, 1.0, rng);
  const Matrix log_std = uniform_matrix(s.batch, s.action_dim, -1.5, 0.5, rng);

  diff::Tape tape;
  const diff::Var mu_v = tape.leaf(mu);
  const diff::Var ls_v = tape.leaf(log_std);
  const diff::Var total = sum(sample_reparam(mu_v, ls_v, s.eps, s.bounds).log_prob);
  const diff::Gradients g = tape.backward(total);

  const Eigen::Index n = mu.size();
  Vector analytic(2 * n);
  const Matrix gm = g.of(mu_v);
  const Matrix gs = g.of(ls_v);
  Vector at(2 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    analytic[k] = gm(k / s.action_dim, k % s.action_dim);
    analytic[n + k] = gs(k / s.action_dim, k % s.action_dim);
    at[k] = mu(k / s.action_dim, k % s.action_dim);
    at[n + k] = log_std(k / s.action_dim, k % s.action_dim);
  }
  return compare(
      analytic,
      [&](const Vector& p) {
        Matrix m(s.batch, s.action_dim), l(s.batch, s.action_dim);
        for (Eigen::Index k = 0; k < n; ++k) {
          m(k / s.action_dim, k % s.action_dim) = p[k];
          l(k / s.action_dim, k % s.action_dim) = p[n + k];
        }
        return sample_reparam(m, l, s.eps, s.bounds).log_prob.sum();
      },
      at, step);
}

// J(alpha) = mean(-alpha * logp - alpha * H0).
Comparison check_alpha(const RandomSetup& s, std::uint64_t seed, double step) {
  Rng rng(derive_seed(seed, 40));
  const Matrix logp = uniform_matrix(s.batch, 1, -4.0, 2.0, rng);
  const double h0 = -double(s.action_dim);
  diff::Tape tape;
  const diff::Var la = tape.scalar(std::log(s.alpha));
  const diff::Var a = exp(la);
  const diff::Var j = -mean(mul(tape.constant(logp), a)) - h0 * a;
  Vector analytic(1);
  analytic[0] = tape.backward(j).of(la)(0, 0);
  const double entropy = -logp.mean();
  if (std::abs(analytic[0] - log_alpha_gradient(s.alpha, entropy, h0)) > 1e-12 * (1.0 + std::abs(analytic[0])))
    throw std::logic_error("gradcheck: temperature gradient disagrees with the tape");
  Vector at(1);
  at[0] = std::log(s.alpha);
  return compare(
      analytic, [&](const Vector& p) { return (-std::exp(p[0]) * (logp.array() + h0)).mean(); }, at, step);
}

std::string describe(const RandomSetup& s) {
  std::string h;
  for (int w : s.hidden) h += (h.empty() ? "" : "x") + std::to_string(w);
  return "state " + std::to_string(s.state_dim) + ", action " + std::to_string(s.action_dim) + ", batch " +
         std::to_string(s.batch) + ", hidden " + h;
}

}  // namespace

std::string to_string(GradCheckKind kind) {
  switch (kind) {
    case GradCheckKind::kActorLoss: return "actor_loss";
    case GradCheckKind::kDeterministicActorLoss: return "actor_loss_deterministic";
    case GradCheckKind::kCriticLoss: return "critic_loss";
    case GradCheckKind::kLogProb: return "log_prob";
    case GradCheckKind::kAlphaObjective: return "alpha_objective";
  }
  return "?";
}

double max_relative_error(const Vector& analytic, const Vector& numeric, double denom_floor) {
  if (analytic.size() != numeric.size()) throw ShapeError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), denom_floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

GradCheckReport run_gradcheck(int configurations, std::uint64_t seed, double step) {
  if (configurations < 1) throw ContractError("run_gradcheck: need at least one configuration");
  static constexpr GradCheckKind kCycle[] = {GradCheckKind::kActorLoss, GradCheckKind::kCriticLoss,
                                             GradCheckKind::kLogProb,   GradCheckKind::kAlphaObjective,
                                             GradCheckKind::kCriticLoss, GradCheckKind::kDeterministicActorLoss,
                                             GradCheckKind::kCriticLoss};
  GradCheckReport report;
  std::size_t critic_index = 0;
  for (int i = 0; i < configurations; ++i) {
    const std::uint64_t case_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    Rng rng(case_seed);
    const RandomSetup s = random_setup(rng);
    GradCheckCase c;
    c.index = i;
    c.kind = kCycle[static_cast<std::size_t>(i) % std::size(kCycle)];
    c.description = describe(s);
    Comparison r{};
    switch (c.kind) {
      case GradCheckKind::kActorLoss: r = check_actor(s, case_seed, true, step); break;
      case GradCheckKind::kDeterministicActorLoss: r = check_actor(s, case_seed, false, step); break;
      case GradCheckKind::kCriticLoss:
        c.description += ", critic " + std::to_string(critic_index % 3 + 1);
        r = check_critic(s, case_seed, critic_index++ % 3, step);
        break;
      case GradCheckKind::kLogProb: r = check_log_prob(s, case_seed, step); break;
      case GradCheckKind::kAlphaObjective: r = check_alpha(s, case_seed, step); break;
    }
    c.parameters = r.parameters;
    c.max_relative_error = r.error;
    report.max_relative_error = std::max(report.max_relative_error, r.error);
    report.cases.push_back(std::move(c));
  }
  return report;
}

}  // namespace opac
