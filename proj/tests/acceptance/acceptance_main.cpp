// Acceptance checks. Prints one PASS/FAIL line per criterion; pass criterion
// numbers as arguments to run a subset. Exit status is nonzero if any fail.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "opac/agent.hpp"
#include "opac/ensemble.hpp"
#include "opac/envs.hpp"
#include "opac/gradcheck.hpp"
#include "opac/harness.hpp"
#include "opac/optim.hpp"
#include "opac/policy.hpp"
#include "opac/tabular.hpp"

namespace fs = std::filesystem;
using namespace opac;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

template <typename... Args>
std::string fmtn(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

fs::path g_work = "acceptance_runs";

// 1. Tape gradients against central differences.
Outcome gradient_correctness() {
  constexpr double kTol = 1e-4;
  const auto t0 = std::chrono::steady_clock::now();
  const GradCheckReport rep = run_gradcheck(50, 2024, 1e-5);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::set<GradCheckKind> kinds;
  for (const auto& c : rep.cases) kinds.insert(c.kind);
  const bool pass = rep.cases.size() == 50 && kinds.size() == 5 && rep.passed(kTol) && secs < 60.0;
  return {pass, fmtn("50 configurations, max relative error %.3e (< %.0e), %.1f s", rep.max_relative_error, kTol,
                     secs)};
}

// 2. Tabular clipped triple Q-learning against value iteration.
Outcome tabular_convergence() {
  constexpr double kRel = 0.05;
  bool pass = true;
  std::string detail;
  for (TargetStrategy g : {TargetStrategy::kMeanSmallerTwo, TargetStrategy::kMedianThree}) {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const FiniteMDP mdp = random_mdp(seed, 6, 3, 0.9);
      ConvergenceOptions opts;
      opts.steps = 200000;
      opts.seed = seed;
      opts.oracle_tol = 1e-10;
      const ConvergenceResult res = run_convergence_experiment(mdp, g, opts);
      const double q_norm = res.q_star.cwiseAbs().maxCoeff();
      const double err = (res.tables.a - res.q_star).cwiseAbs().maxCoeff();
      worst = std::max(worst, err / q_norm);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    pass = pass && worst < kRel && secs < 120.0;
    detail += fmtn("%s worst ||QA-Q*||/||Q*|| = %.4f (%.2f s); ", std::string(to_string(g)).c_str(), worst, secs);
  }
  detail += fmt("bound %.2f", kRel);
  return {pass, detail};
}

// 3. Ordering, permutation invariance and monotonicity of the aggregators.
Outcome aggregation_ordering() {
  Rng rng(7);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> delta(1e-9, 1.0);
  std::size_t violations = 0;
  for (int k = 0; k < 100000; ++k) {
    std::array<double, 3> v{n01(rng) * 100.0, n01(rng) * 100.0, n01(rng) * 100.0};
    if (k % 10 == 0) v[1] = v[0];  // ties
    std::sort(v.begin(), v.end());
    const double mn = v[0], mx = v[2];
    const double m2 = aggregate(v[0], v[1], v[2], TargetStrategy::kMeanSmallerTwo);
    const double md = aggregate(v[0], v[1], v[2], TargetStrategy::kMedianThree);
    if (!(mn <= m2 && m2 <= md && md <= mx)) ++violations;
    for (TargetStrategy g : {TargetStrategy::kMeanSmallerTwo, TargetStrategy::kMedianThree}) {
      const double ref = aggregate(v[0], v[1], v[2], g);
      std::array<double, 3> p = v;
      while (std::next_permutation(p.begin(), p.end()))
        if (aggregate(p[0], p[1], p[2], g) != ref) ++violations;
      for (int i = 0; i < 3; ++i) {
        std::array<double, 3> up = v;
        up[static_cast<std::size_t>(i)] += delta(rng);
        if (aggregate(up[0], up[1], up[2], g) < ref) ++violations;
      }
    }
  }
  return {violations == 0, fmtn("100000 triples, %zu violations", violations)};
}

// 4. Squashed-Gaussian density normalization and log-prob round trip.
Outcome squashed_density() {
  Rng rng(11);
  std::uniform_real_distribution<double> mu_d(-1.5, 1.5), ls_d(-2.0, 0.5), lo_d(-3.0, -0.5), hi_d(0.5, 3.0);
  double worst_mass = 0.0;
  const double v_edge = std::atanh(1.0 - kSquashEdge);
  for (int k = 0; k < 20; ++k) {
    const RowVector mu = RowVector::Constant(1, mu_d(rng));
    const RowVector ls = RowVector::Constant(1, ls_d(rng));
    ActionBounds b{RowVector::Constant(1, lo_d(rng)), RowVector::Constant(1, hi_d(rng))};
    const double c = b.center()[0], s = b.scale()[0], sigma = std::exp(ls[0]);
    // Graded nodes a = c + s tanh(v), uniform in v; composite Simpson.
    const double v0 = std::max(-v_edge, mu[0] - 12.0 * sigma), v1 = std::min(v_edge, mu[0] + 12.0 * sigma);
    const int n = 20000;
    const double h = (v1 - v0) / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double v = v0 + i * h;
      const double t = std::tanh(v);
      const double a = c + s * t;
      const double dens = std::exp(log_prob_of(mu, ls, RowVector::Constant(1, a), b));
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += w * dens * s * (1.0 - t * t);
    }
    worst_mass = std::max(worst_mass, std::abs(acc * h / 3.0 - 1.0));
  }
  double worst_rt = 0.0;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const RowVector mu = RowVector::Constant(1, mu_d(rng));
    const RowVector ls = RowVector::Constant(1, ls_d(rng));
    ActionBounds b{RowVector::Constant(1, lo_d(rng)), RowVector::Constant(1, hi_d(rng))};
    const ActionSample smp = sample_reparam(mu, ls, RowVector::Constant(1, n01(rng)), b);
    worst_rt = std::max(worst_rt, std::abs(smp.log_prob - log_prob_of(mu, ls, smp.action, b)));
  }
  return {worst_mass < 1e-3 && worst_rt < 1e-9,
          fmtn("max |mass - 1| = %.2e (< 1e-3) over 20; max round-trip error %.2e (< 1e-9) over 100", worst_mass,
               worst_rt)};
}

// 5. Temperature steering of a trainable 1-D policy toward H0.
Outcome entropy_steering() {
  const auto t0 = std::chrono::steady_clock::now();
  const int batch = 1024;
  Rng rng(5);
  const Matrix states = standard_normal(batch, 1, rng).cwiseMin(2.0).cwiseMax(-2.0);
  const Matrix eps = standard_normal(batch, 1, rng);
  const ActionBounds bounds = ActionBounds::symmetric(1, 1.0);
  ActorNet actor = ActorNet::create(MLPSpec{1, {16}, 1, Activation::kTanh}, 3);
  Adam opt(actor.params, AdamConfig{3e-3});
  Temperature temperature(0.2, 0.02, 1e-4);
  double alpha = temperature.alpha();

  // Q(s, a) = -2 (a - 0.3)^2, quadratic in the action.
  auto step = [&](bool update_actor) {
    diff::Tape tape;
    const diff::Var s = tape.constant(states);
    const BoundParams bound = bind(tape, actor.params, true);
    const ActorVars out = forward_actor(actor, bound, s);
    const SquashedVars sq = sample_reparam(out.mu, out.log_std, eps, bounds);
    const diff::Var q = -2.0 * square(sq.action + -0.3);
    const diff::Var loss = mean(alpha * sq.log_prob - q);
    if (update_actor) opt.step(actor.params, gradients_of(tape.backward(loss), bound));
    return Vector(sq.log_prob.value().col(0));
  };

  const double h_init = -step(false).mean();
  const double h0 = h_init - 1.0;
  const double gap0 = std::abs(h_init - h0);
  for (int it = 0; it < 2000; ++it) {
    const Vector logp = step(true);
    alpha = temperature.step(-logp.mean(), h0);
  }
  const double h_final = -step(false).mean();
  const double gap = std::abs(h_final - h0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {gap < 0.1 * gap0 && alpha > 0.0 && secs < 60.0,
          fmtn("H0 %.3f, entropy %.3f -> %.3f, |gap| %.3f -> %.4f (< %.3f), alpha %.4f, %.1f s", h0, h_init,
               h_final, gap0, gap, 0.1 * gap0, alpha, secs)};
}

// 6. Desk-scale learning on the pendulum for every variant.
Outcome desk_learning() {
  auto env = make_env("pendulum");
  const EvalResult base = evaluate_random_policy(*env, 100, 12345);
  const double threshold = base.mean + 5.0 * base.std;
  const double se_threshold = base.mean + 5.0 * base.std / std::sqrt(100.0);
  std::string detail = fmtn("random baseline %.1f +/- %.1f (100 episodes), threshold %.1f", base.mean, base.std,
                            threshold);
  bool pass = true;
  struct V {
    const char* name;
    Variant v;
    TargetStrategy g;
  };
  for (const V& v : {V{"opac-median3", Variant::kOpac, TargetStrategy::kMedianThree},
                     V{"opac-mean2", Variant::kOpac, TargetStrategy::kMeanSmallerTwo},
                     V{"sac", Variant::kSac, TargetStrategy::kMinPair}, V{"td3", Variant::kTd3, TargetStrategy::kMinPair}}) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig rc;
    rc.env = "pendulum";
    rc.agent = AgentConfig::for_variant(v.v, v.g);
    rc.agent.hidden = {64, 64};
    rc.total_steps = 30000;
    rc.seeds = {kDefaultSeeds[0], kDefaultSeeds[1], kDefaultSeeds[2]};
    rc.out_dir = (g_work / "desk" / v.name).string();
    const ExperimentResult res = run_experiment(rc);
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& s : res.seeds)
      for (std::size_t i = s.rows.size() >= 5 ? s.rows.size() - 5 : 0; i < s.rows.size(); ++i, ++n)
        acc += s.rows[i].eval_mean;
    const double final5 = acc / double(n);
    const double last = res.aggregate.back().mean;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = final5 >= threshold;
    pass = pass && ok;
    detail += fmtn("; %s final-5 mean %.1f (last eval %.1f, %s; standard-error bar %.1f %s, %.0f s)", v.name, final5,
                   last, ok ? "pass" : "fail", se_threshold, final5 >= se_threshold ? "cleared" : "missed", secs);
  }
  return {pass, detail};
}

// 7. Default protocol: evaluation cadence, warmup, seeds.
Outcome protocol_fidelity() {
  RunConfig rc;
  bool defaults = rc.eval_interval == 5000 && rc.eval_episodes == 20 && rc.agent.start_steps == 10000 &&
                  rc.seeds == std::vector<std::uint64_t>{0, 200, 872, 2359, 6574};
  rc.seeds = {rc.seeds.front()};
  rc.total_steps = 15000;
  rc.out_dir = (g_work / "protocol").string();

  std::uint64_t env_step = 0, first_update_step = 0, updates = 0;
  std::vector<std::pair<std::uint64_t, int>> evals;
  RunHooks hooks;
  hooks.on_eval = [&](std::uint64_t, std::uint64_t step, int episodes) { evals.emplace_back(step, episodes); };
  hooks.train.on_transition = [&](const Transition&) { ++env_step; };
  hooks.train.on_update = [&](const UpdateDiagnostics&) {
    if (updates++ == 0) first_update_step = env_step;
  };
  const ExperimentResult res = run_experiment(rc, hooks);
  const auto rows = read_metrics_csv(res.seeds.front().csv_path);

  bool cadence = rows.size() == 3 && evals.size() == 3;
  for (std::size_t i = 0; cadence && i < rows.size(); ++i)
    cadence = rows[i].step == 5000 * (i + 1) && evals[i].first == rows[i].step && evals[i].second == 20;
  const bool warmup = first_update_step == 10001 && updates == 5000;
  return {defaults && cadence && warmup,
          fmtn("defaults %s; eval rows at %zu steps (5000/10000/15000 x 20 episodes: %s); first update at env step "
               "%llu, %llu updates",
               defaults ? "ok" : "WRONG", rows.size(), cadence ? "ok" : "WRONG",
               static_cast<unsigned long long>(first_update_step), static_cast<unsigned long long>(updates))};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 8. Byte-identical reruns.
Outcome determinism() {
  RunConfig rc;
  rc.agent.hidden = {32, 32};
  rc.agent.batch_size = 64;
  rc.agent.start_steps = 1000;
  rc.total_steps = 3000;
  rc.eval_interval = 1000;
  rc.eval_episodes = 2;
  rc.seeds = {0, 200};
  std::vector<ExperimentResult> runs;
  for (const char* tag : {"a", "b"}) {
    rc.out_dir = (g_work / "determinism" / tag).string();
    fs::remove_all(rc.out_dir);
    runs.push_back(run_experiment(rc));
  }
  std::size_t files = 0, mismatched = 0;
  for (std::size_t i = 0; i < rc.seeds.size(); ++i) {
    for (auto get : {+[](const SeedOutcome& s) { return s.csv_path; },
                     +[](const SeedOutcome& s) { return s.checkpoint_path; }}) {
      const std::string a = slurp(get(runs[0].seeds[i]));
      const std::string b = slurp(get(runs[1].seeds[i]));
      ++files;
      if (a.empty() || a != b) ++mismatched;
    }
  }
  return {mismatched == 0, fmtn("%zu per-seed files compared, %zu differ", files, mismatched)};
}

// 9. Critic, policy, alpha and target update counts under policy_delay = 2.
Outcome update_cadence() {
  AgentConfig cfg;
  cfg.hidden = {16, 16};
  cfg.policy_delay = 2;
  auto env = make_env("pendulum");
  Agent agent(cfg, env->spec(), 1);
  Rng rng(3);
  Batch b;
  const int n = 32;
  b.states = standard_normal(n, env->spec().observation_dim, rng);
  b.actions = standard_normal(n, env->spec().action_dim, rng).cwiseMax(-2.0).cwiseMin(2.0);
  b.rewards = standard_normal(n, 1, rng).col(0);
  b.next_states = standard_normal(n, env->spec().observation_dim, rng);
  b.done = Vector::Zero(n);

  int target_changes = 0, critic_changes = 0;
  bool targets_only_on_delayed = true;
  for (int k = 0; k < 10; ++k) {
    const Vector t_before = agent.critics().targets[0].params.flatten();
    const Vector a_before = agent.actor_target().params.flatten();
    const Vector c_before = agent.critics().models[2].params.flatten();
    const UpdateDiagnostics d = agent.update_step(b, rng);
    const bool t_changed = (agent.critics().targets[0].params.flatten() - t_before).cwiseAbs().maxCoeff() > 0.0 ||
                           (agent.actor_target().params.flatten() - a_before).cwiseAbs().maxCoeff() > 0.0;
    if ((agent.critics().models[2].params.flatten() - c_before).cwiseAbs().maxCoeff() > 0.0) ++critic_changes;
    if (t_changed) ++target_changes;
    if (t_changed != d.delayed_step || d.delayed_step != (k % 2 == 0)) targets_only_on_delayed = false;
  }
  const UpdateCounters& c = agent.counters();
  const std::uint64_t per_critic = c.critic_steps / agent.critics().size();
  const bool pass = per_critic == 10 && critic_changes == 10 && c.policy_steps == 5 && c.alpha_steps == 5 &&
                    c.target_updates == 5 && target_changes == 5 && targets_only_on_delayed;
  return {pass, fmtn("critic steps %llu per critic, policy %llu, alpha %llu, target updates %llu (observed %d)",
                     static_cast<unsigned long long>(per_critic), static_cast<unsigned long long>(c.policy_steps),
                     static_cast<unsigned long long>(c.alpha_steps), static_cast<unsigned long long>(c.target_updates),
                     target_changes)};
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness}, {"tabular convergence", tabular_convergence},
      {"aggregation ordering", aggregation_ordering}, {"squashed density", squashed_density},
      {"entropy steering", entropy_steering},         {"desk-scale learning", desk_learning},
      {"protocol fidelity", protocol_fidelity},       {"determinism", determinism},
      {"update cadence", update_cadence}};

  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg.rfind("--work-dir=", 0) == 0) {
      g_work = arg.substr(11);
    } else {
      const int k = std::atoi(arg.c_str());
      if (k < 1 || k > static_cast<int>(criteria.size())) {
        std::fprintf(stderr, "unknown criterion '%s'\n", arg.c_str());
        return 2;
      }
      selected.push_back(k);
    }
  }
  if (selected.empty())
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) selected.push_back(k);

  int failures = 0;
  for (int k : selected) {
    const auto& [name, fn] = criteria[static_cast<std::size_t>(k - 1)];
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d %s: %s | %s\n", k, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
