#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "opac/checkpoint.hpp"
#include "opac/errors.hpp"
#include "opac/gradcheck.hpp"
#include "opac/harness.hpp"
#include "opac/tabular.hpp"

namespace {

constexpr int kRunFailure = 1;
constexpr int kInvalidConfig = 2;

struct TrainArgs {
  std::string env = "pendulum";
  std::string algo = "opac";
  std::string strategy = "median3";
  std::uint64_t steps = 100000;
  std::vector<std::uint64_t> seeds = opac::kDefaultSeeds;
  std::string out = "runs";
  std::uint64_t eval_interval = 5000;
  int eval_episodes = 20;
  int smoothing_window = 5;
  int jobs = 1;
  bool wall_time = false;
  bool no_checkpoints = false;

  std::optional<double> gamma, tau, entropy_target, initial_alpha, alpha_min, actor_lr, critic_lr, alpha_lr,
      target_noise, noise_clip, exploration_noise;
  std::optional<int> batch_size, policy_delay, update_every;
  std::optional<std::uint64_t> start_steps;
  std::optional<std::size_t> replay_capacity;
  std::vector<int> hidden;
  bool no_smoothing = false;
};

opac::RunConfig to_run_config(const TrainArgs& a) {
  opac::RunConfig rc;
  rc.env = a.env;
  rc.agent = opac::AgentConfig::for_variant(opac::parse_variant(a.algo), opac::parse_strategy(a.strategy));
  auto& ag = rc.agent;
  if (a.gamma) ag.gamma = *a.gamma;
  if (a.tau) ag.tau = *a.tau;
  if (a.batch_size) ag.batch_size = *a.batch_size;
  if (a.policy_delay) ag.policy_delay = *a.policy_delay;
  if (a.entropy_target) ag.entropy_target = *a.entropy_target;
  if (a.initial_alpha) ag.initial_alpha = *a.initial_alpha;
  if (a.alpha_min) ag.alpha_min = *a.alpha_min;
  if (a.actor_lr) ag.actor_lr = *a.actor_lr;
  if (a.critic_lr) ag.critic_lr = *a.critic_lr;
  if (a.alpha_lr) ag.alpha_lr = *a.alpha_lr;
  if (a.start_steps) ag.start_steps = *a.start_steps;
  if (a.update_every) ag.update_every = *a.update_every;
  if (a.replay_capacity) ag.replay_capacity = *a.replay_capacity;
  if (!a.hidden.empty()) ag.hidden = a.hidden;
  if (a.exploration_noise) ag.exploration_noise = *a.exploration_noise;
  if (a.no_smoothing) {
    ag.smoothing.reset();
  } else if (a.target_noise || a.noise_clip) {
    if (!ag.smoothing) ag.smoothing = opac::SmoothingSpec{};
    if (a.target_noise) ag.smoothing->sigma = *a.target_noise;
    if (a.noise_clip) ag.smoothing->noise_clip = *a.noise_clip;
  }
  rc.total_steps = a.steps;
  rc.seeds = a.seeds;
  rc.eval_interval = a.eval_interval;
  rc.eval_episodes = a.eval_episodes;
  rc.out_dir = a.out;
  rc.smoothing_window = a.smoothing_window;
  rc.record_wall_time = a.wall_time;
  rc.save_checkpoints = !a.no_checkpoints;
  rc.jobs = a.jobs;
  rc.validate();
  return rc;
}

int cmd_train(const TrainArgs& args) {
  const opac::RunConfig rc = to_run_config(args);
  opac::RunHooks hooks;
  hooks.on_eval = [](std::uint64_t seed, std::uint64_t step, int) {
    std::fprintf(stderr, "seed %llu: evaluated at step %llu\n", static_cast<unsigned long long>(seed),
                 static_cast<unsigned long long>(step));
  };
  const opac::ExperimentResult res = opac::run_experiment(rc, hooks);
  for (const auto& s : res.seeds)
    std::printf("seed %llu  max eval mean %.3f  (%s)\n", static_cast<unsigned long long>(s.seed), s.max_eval_mean,
                s.csv_path.string().c_str());
  if (!res.aggregate.empty()) {
    const auto& last = res.aggregate.back();
    std::printf("final step %llu  mean %.3f  std %.3f over %zu seeds\n", static_cast<unsigned long long>(last.step),
                last.mean, last.std, last.n);
  }
  std::printf("summary: %s\n", res.summary_path.string().c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& env_name, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw opac::ConfigError("--episodes must be >= 1");
  auto env = opac::make_env(env_name);
  const opac::Checkpoint ck = opac::load_checkpoint(checkpoint);
  const auto& spec = env->spec();
  if (ck.actor.spec.input_dim != spec.observation_dim || ck.actor.spec.output_dim != spec.action_dim)
    throw opac::ConfigError("checkpoint actor does not match environment '" + env_name + "'");
  const opac::PolicySnapshot snap{ck.actor, spec.bounds};
  const opac::EvalResult r = opac::evaluate(snap, *env, episodes, seed);
  std::printf("episodes %d  mean %.4f  std %.4f\n", episodes, r.mean, r.std);
  return 0;
}

int cmd_tabular(const std::string& strategy, int states, int actions, std::uint64_t steps, std::uint64_t seed,
                const std::string& out) {
  const opac::TargetStrategy g = opac::parse_strategy(strategy);
  if (g == opac::TargetStrategy::kMinPair) throw opac::ConfigError("tabular strategy must be mean2 or median3");
  if (states < 1 || actions < 1) throw opac::ConfigError("--states and --actions must be >= 1");
  if (steps < 1) throw opac::ConfigError("--steps must be >= 1");
  const opac::FiniteMDP mdp = opac::random_mdp(seed, states, actions);
  opac::ConvergenceOptions opts;
  opts.steps = steps;
  opts.seed = seed;
  const opac::ConvergenceResult res = opac::run_convergence_experiment(mdp, g, opts);
  if (!out.empty()) {
    std::ofstream f(out, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + out);
    opac::write_convergence_csv(f, res, g, seed);
  }
  const double q_norm = res.q_star.cwiseAbs().maxCoeff();
  const auto& last = res.trajectory.back();
  std::printf("||Q*||inf %.6f\n", q_norm);
  std::printf("step %llu  sup error A %.6f  B %.6f  C %.6f  (relative A %.4f)\n",
              static_cast<unsigned long long>(last.step), last.sup_a, last.sup_b, last.sup_c, last.sup_a / q_norm);
  return 0;
}

int cmd_gradcheck(int configurations, std::uint64_t seed, double tol, bool verbose) {
  const opac::GradCheckReport rep = opac::run_gradcheck(configurations, seed);
  for (const auto& c : rep.cases)
    if (verbose || c.max_relative_error >= tol)
      std::printf("%3d %-26s %5zu params  rel err %.3e  [%s]\n", c.index, opac::to_string(c.kind).c_str(),
                  c.parameters, c.max_relative_error, c.description.c_str());
  std::printf("%zu configurations, max relative error %.3e (tolerance %.0e): %s\n", rep.cases.size(),
              rep.max_relative_error, tol, rep.passed(tol) ? "PASS" : "FAIL");
  return rep.passed(tol) ? 0 : kRunFailure;
}

}  // namespace

int main(int argc, char** argv) {
  opac::configure_allocator();
  CLI::App app{"Opportunistic actor-critic experiments"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train over several seeds and write metrics");
  train->set_config("--config", "", "Flat key=value file mirroring the flags");
  train->add_option("--env", ta.env, "Environment name")->capture_default_str();
  train->add_option("--algo", ta.algo, "opac, sac or td3")->capture_default_str();
  train->add_option("--strategy", ta.strategy, "mean2 or median3 (opac only)")->capture_default_str();
  train->add_option("--steps", ta.steps, "Environment steps per seed")->capture_default_str();
  train->add_option("--seeds", ta.seeds, "Seed list")->delimiter(',')->capture_default_str();
  train->add_option("--out", ta.out, "Output directory")->capture_default_str();
  train->add_option("--eval-interval", ta.eval_interval)->capture_default_str();
  train->add_option("--eval-episodes", ta.eval_episodes)->capture_default_str();
  train->add_option("--smoothing-window", ta.smoothing_window)->capture_default_str();
  train->add_option("--jobs", ta.jobs, "Seeds trained concurrently")->capture_default_str();
  train->add_flag("--wall-time", ta.wall_time, "Record wall_ms (makes reruns differ)");
  train->add_flag("--no-checkpoints", ta.no_checkpoints);
  train->add_option("--gamma", ta.gamma);
  train->add_option("--tau", ta.tau, "Polyak retention weight");
  train->add_option("--batch-size", ta.batch_size);
  train->add_option("--policy-delay", ta.policy_delay);
  train->add_option("--entropy-target", ta.entropy_target, "H0 in nats (default -action_dim)");
  train->add_option("--initial-alpha", ta.initial_alpha);
  train->add_option("--alpha-min", ta.alpha_min);
  train->add_option("--actor-lr", ta.actor_lr);
  train->add_option("--critic-lr", ta.critic_lr);
  train->add_option("--alpha-lr", ta.alpha_lr);
  train->add_option("--start-steps", ta.start_steps);
  train->add_option("--update-every", ta.update_every);
  train->add_option("--replay-capacity", ta.replay_capacity);
  train->add_option("--hidden", ta.hidden, "Hidden widths, e.g. 256,256")->delimiter(',');
  train->add_option("--target-noise", ta.target_noise, "Target smoothing sigma (normalized units)");
  train->add_option("--noise-clip", ta.noise_clip);
  train->add_option("--exploration-noise", ta.exploration_noise, "TD3 behaviour noise");
  train->add_flag("--no-smoothing", ta.no_smoothing, "Disable target policy smoothing");

  std::string ckpt, eval_env = "pendulum";
  int eval_episodes = 20;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint's deterministic policy");
  eval->set_config("--config");
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--env", eval_env)->capture_default_str();
  eval->add_option("--episodes", eval_episodes)->capture_default_str();
  eval->add_option("--seed", eval_seed)->capture_default_str();

  std::string tab_strategy = "median3", tab_out;
  int tab_states = 6, tab_actions = 3;
  std::uint64_t tab_steps = 200000, tab_seed = 0;
  auto* tabular = app.add_subcommand("tabular", "Clipped triple Q-learning on a random finite MDP");
  tabular->set_config("--config");
  tabular->add_option("--strategy", tab_strategy)->capture_default_str();
  tabular->add_option("--states", tab_states)->capture_default_str();
  tabular->add_option("--actions", tab_actions)->capture_default_str();
  tabular->add_option("--steps", tab_steps)->capture_default_str();
  tabular->add_option("--seed", tab_seed)->capture_default_str();
  tabular->add_option("--out", tab_out, "Write the error trajectory CSV here");

  int gc_configs = 50;
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  bool gc_verbose = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare tape gradients with finite differences");
  gradcheck->add_option("--configurations", gc_configs)->capture_default_str();
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();
  gradcheck->add_option("--tolerance", gc_tol)->capture_default_str();
  gradcheck->add_flag("-v,--verbose", gc_verbose);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalidConfig;
  }

  try {
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(ckpt, eval_env, eval_episodes, eval_seed);
    if (*tabular) return cmd_tabular(tab_strategy, tab_states, tab_actions, tab_steps, tab_seed, tab_out);
    if (*gradcheck) return cmd_gradcheck(gc_configs, gc_seed, gc_tol, gc_verbose);
  } catch (const opac::ConfigError& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kInvalidConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRunFailure;
  }
  return kRunFailure;
}
