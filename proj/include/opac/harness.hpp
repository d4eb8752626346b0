#pragma once

// Multi-seed experiment runner: periodic noiseless evaluation, per-seed CSV
// metrics, cross-seed aggregation and long-format plot data.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "opac/agent.hpp"
#include "opac/envs.hpp"

namespace opac {

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population
  std::vector<double> returns;
};

using PolicyFn = std::function<RowVector(const RowVector&)>;

// Undiscounted returns of `episodes` rollouts; episode k resets with
// derive_seed(seed, k).
EvalResult evaluate(const PolicyFn& policy, Environment& env, int episodes, std::uint64_t seed);
EvalResult evaluate(const PolicySnapshot& snapshot, Environment& env, int episodes, std::uint64_t seed);

// Uniform random actions over the environment's bounds.
EvalResult evaluate_random_policy(Environment& env, int episodes, std::uint64_t seed);

inline const std::vector<std::uint64_t> kDefaultSeeds{0, 200, 872, 2359, 6574};

struct RunConfig {
  std::string env = "pendulum";
  AgentConfig agent;
  std::uint64_t total_steps = 100000;
  std::vector<std::uint64_t> seeds = kDefaultSeeds;
  std::uint64_t eval_interval = 5000;
  int eval_episodes = 20;
  std::string out_dir = "runs";
  int smoothing_window = 5;
  bool record_wall_time = false;  // wall_ms stays empty otherwise, keeping reruns byte-identical
  bool save_checkpoints = true;
  int jobs = 1;

  void validate() const;
};

struct MetricsRow {
  std::uint64_t step = 0;
  double eval_mean = 0.0;
  double eval_std = 0.0;
  double alpha = 0.0;
  std::optional<double> entropy;
  std::array<std::optional<double>, 3> critic_losses;
  std::optional<double> policy_loss;
  std::optional<double> wall_ms;
};

inline constexpr const char* kMetricsHeader =
    "step,eval_mean,eval_std,alpha,entropy,critic1_loss,critic2_loss,critic3_loss,policy_loss,wall_ms";
inline constexpr const char* kAggregateHeader = "step,eval_mean_avg,eval_mean_std_pop,n_seeds";
inline constexpr const char* kPlotHeader = "step,series,value";

std::string format_metrics_row(const MetricsRow& row);
MetricsRow parse_metrics_row(const std::string& line);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

// Element i is the mean of the last min(i + 1, window) values.
std::vector<double> moving_average(const std::vector<double>& series, int window);

struct AggregateRow {
  std::uint64_t step = 0;
  double mean = 0.0;
  double std = 0.0;  // population (divisor n)
  std::size_t n = 0;
};

// Rows are matched by step; every seed must report the same steps.
std::vector<AggregateRow> aggregate_across_seeds(const std::vector<std::vector<MetricsRow>>& per_seed);

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::filesystem::path csv_path;
  std::filesystem::path checkpoint_path;
  std::vector<MetricsRow> rows;
  double max_eval_mean = 0.0;  // over unsmoothed evaluation means
  TrainSummary train;
};

struct ExperimentResult {
  std::vector<SeedOutcome> seeds;
  std::vector<AggregateRow> aggregate;
  std::filesystem::path aggregate_path;
  std::filesystem::path plot_path;
  std::filesystem::path summary_path;
};

class RunFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunHooks {
  // Called for every evaluation with the number of episodes it rolled out.
  std::function<void(std::uint64_t seed, std::uint64_t step, int episodes)> on_eval;
  TrainHooks train;
};

// Keeps glibc from returning large tape buffers to the OS after every update;
// a no-op elsewhere.
void configure_allocator();

std::filesystem::path seed_csv_name(std::uint64_t seed);
std::filesystem::path seed_checkpoint_name(std::uint64_t seed);

SeedOutcome run_seed(const RunConfig& config, std::uint64_t seed, const RunHooks& hooks = {});

// Seeds run as independent tasks (config.jobs at a time). A failing seed
// leaves the files already written plus an errors.txt manifest and raises
// RunFailure.
ExperimentResult run_experiment(const RunConfig& config, const RunHooks& hooks = {});

}  // namespace opac
