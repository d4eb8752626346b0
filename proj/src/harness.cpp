#include "opac/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "opac/checkpoint.hpp"
#include "opac/errors.hpp"

namespace opac {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size()))};
}

// Running means of update diagnostics between two evaluation rows.
struct DiagnosticWindow {
  std::array<double, 3> critic{};
  std::size_t critic_n = 0;
  double policy = 0.0;
  double entropy = 0.0;
  std::size_t policy_n = 0;
  std::size_t entropy_n = 0;

  void add(const UpdateDiagnostics& d) {
    for (std::size_t i = 0; i < d.critic_losses.size() && i < 3; ++i) critic[i] += d.critic_losses[i];
    ++critic_n;
    if (d.policy_loss) {
      policy += *d.policy_loss;
      ++policy_n;
    }
    if (d.entropy) {
      entropy += *d.entropy;
      ++entropy_n;
    }
  }
  void fill(MetricsRow& row, std::size_t n_critics) const {
    if (critic_n > 0)
      for (std::size_t i = 0; i < n_critics; ++i) row.critic_losses[i] = critic[i] / double(critic_n);
    if (policy_n > 0) row.policy_loss = policy / double(policy_n);
    if (entropy_n > 0) row.entropy = entropy / double(entropy_n);
  }
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

EvalResult evaluate(const PolicyFn& policy, Environment& env, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ContractError("evaluate: episodes must be >= 1");
  EvalResult r;
  for (int k = 0; k < episodes; ++k) {
    RowVector obs = env.reset(derive_seed(seed, static_cast<std::uint64_t>(k)));
    double ret = 0.0;
    for (;;) {
      const StepResult sr = env.step(policy(obs));
      ret += sr.reward;
      obs = sr.observation;
      if (sr.done) break;
    }
    r.returns.push_back(ret);
  }
  std::tie(r.mean, r.std) = mean_std(r.returns);
  return r;
}

EvalResult evaluate(const PolicySnapshot& snapshot, Environment& env, int episodes, std::uint64_t seed) {
  return evaluate([&snapshot](const RowVector& obs) { return snapshot.act(obs); }, env, episodes, seed);
}

EvalResult evaluate_random_policy(Environment& env, int episodes, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 999));
  const ActionBounds bounds = env.spec().bounds;
  return evaluate(
      [&](const RowVector&) {
        RowVector a(bounds.dim());
        for (int i = 0; i < bounds.dim(); ++i)
          a[i] = std::uniform_real_distribution<double>(bounds.low[i], bounds.high[i])(rng);
        return a;
      },
      env, episodes, seed);
}

void RunConfig::validate() const {
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (eval_interval == 0) throw ConfigError("eval_interval must be > 0");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (smoothing_window < 1) throw ConfigError("smoothing window must be >= 1");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  agent.validate();
  make_env(env);  // throws ConfigError for unknown names
}

std::string format_metrics_row(const MetricsRow& row) {
  std::string s = std::to_string(row.step);
  for (const std::string& f :
       {fmt(row.eval_mean), fmt(row.eval_std), fmt(row.alpha), fmt(row.entropy), fmt(row.critic_losses[0]),
        fmt(row.critic_losses[1]), fmt(row.critic_losses[2]), fmt(row.policy_loss), fmt(row.wall_ms)}) {
    s += ',';
    s += f;
  }
  return s;
}

MetricsRow parse_metrics_row(const std::string& line) {
  const auto f = split_csv(line);
  if (f.size() != 10) throw std::runtime_error("metrics row has " + std::to_string(f.size()) + " fields: " + line);
  MetricsRow r;
  r.step = std::stoull(f[0]);
  r.eval_mean = std::stod(f[1]);
  r.eval_std = std::stod(f[2]);
  r.alpha = std::stod(f[3]);
  r.entropy = parse_opt(f[4]);
  for (int i = 0; i < 3; ++i) r.critic_losses[static_cast<std::size_t>(i)] = parse_opt(f[5 + i]);
  r.policy_loss = parse_opt(f[8]);
  r.wall_ms = parse_opt(f[9]);
  return r;
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw std::runtime_error(path.string() + ": unexpected metrics header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_metrics_row(line));
  return rows;
}

std::vector<double> moving_average(const std::vector<double>& series, int window) {
  if (window < 1) throw ContractError("moving_average: window must be >= 1");
  std::vector<double> out(series.size());
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t n = std::min(i + 1, w);
    double acc = 0.0;
    for (std::size_t k = i + 1 - n; k <= i; ++k) acc += series[k];
    out[i] = acc / static_cast<double>(n);
  }
  return out;
}

std::vector<AggregateRow> aggregate_across_seeds(const std::vector<std::vector<MetricsRow>>& per_seed) {
  std::vector<AggregateRow> out;
  if (per_seed.empty()) return out;
  const std::size_t rows = per_seed.front().size();
  for (const auto& s : per_seed)
    if (s.size() != rows) throw std::runtime_error("aggregate: seeds reported different numbers of rows");
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<double> xs;
    const std::uint64_t step = per_seed.front()[i].step;
    for (const auto& s : per_seed) {
      if (s[i].step != step) throw std::runtime_error("aggregate: evaluation steps differ across seeds");
      xs.push_back(s[i].eval_mean);
    }
    const auto [m, sd] = mean_std(xs);
    out.push_back({step, m, sd, xs.size()});
  }
  return out;
}

void configure_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

std::filesystem::path seed_csv_name(std::uint64_t seed) { return "seed_" + std::to_string(seed) + ".csv"; }
std::filesystem::path seed_checkpoint_name(std::uint64_t seed) {
  return "checkpoint_seed_" + std::to_string(seed) + ".bin";
}

SeedOutcome run_seed(const RunConfig& config, std::uint64_t seed, const RunHooks& hooks) {
  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);
  SeedOutcome outcome;
  outcome.seed = seed;
  outcome.csv_path = dir / seed_csv_name(seed);

  auto env = make_env(config.env);
  auto eval_env = env->clone();
  Agent agent(config.agent, env->spec(), seed);

  std::ofstream csv(outcome.csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot open " + outcome.csv_path.string());
  csv << kMetricsHeader << '\n' << std::flush;

  const auto started = std::chrono::steady_clock::now();
  const std::uint64_t eval_seed = derive_seed(seed, 200);
  DiagnosticWindow window;

  TrainHooks th = hooks.train;
  th.on_update = [&](const UpdateDiagnostics& d) {
    window.add(d);
    if (hooks.train.on_update) hooks.train.on_update(d);
  };
  th.after_env_step = [&](std::uint64_t t, const Agent& a) {
    if (hooks.train.after_env_step) hooks.train.after_env_step(t, a);
    if (t % config.eval_interval != 0) return;
    const EvalResult er = evaluate(a.snapshot(), *eval_env, config.eval_episodes, eval_seed);
    if (hooks.on_eval) hooks.on_eval(seed, t, config.eval_episodes);
    MetricsRow row;
    row.step = t;
    row.eval_mean = er.mean;
    row.eval_std = er.std;
    row.alpha = a.alpha();
    window.fill(row, a.critics().size());
    if (config.record_wall_time)
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    csv << format_metrics_row(row) << '\n' << std::flush;
    outcome.rows.push_back(row);
    window = DiagnosticWindow{};
  };

  outcome.train = train(agent, *env, config.total_steps, seed, th);

  outcome.max_eval_mean = outcome.rows.empty() ? 0.0 : outcome.rows.front().eval_mean;
  for (const auto& r : outcome.rows) outcome.max_eval_mean = std::max(outcome.max_eval_mean, r.eval_mean);

  if (config.save_checkpoints) {
    outcome.checkpoint_path = dir / seed_checkpoint_name(seed);
    save_checkpoint(outcome.checkpoint_path.string(), agent.checkpoint());
  }
  return outcome;
}

ExperimentResult run_experiment(const RunConfig& config, const RunHooks& hooks) {
  config.validate();
  const std::filesystem::path dir(config.out_dir);
  std::filesystem::create_directories(dir);

  std::vector<std::optional<SeedOutcome>> outcomes(config.seeds.size());
  std::map<std::uint64_t, std::string> errors;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= config.seeds.size() || abort.load()) return;
      const std::uint64_t seed = config.seeds[i];
      try {
        outcomes[i] = run_seed(config, seed, hooks);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        errors[seed] = e.what();
        abort.store(true);
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.jobs), config.seeds.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (!errors.empty()) {
    std::ofstream manifest(dir / "errors.txt", std::ios::trunc);
    for (std::size_t i = 0; i < config.seeds.size(); ++i) {
      const std::uint64_t s = config.seeds[i];
      if (errors.count(s)) manifest << "seed " << s << ": FAILED: " << errors[s] << '\n';
      else if (outcomes[i]) manifest << "seed " << s << ": ok\n";
      else manifest << "seed " << s << ": not run\n";
    }
    throw RunFailure("run failed for seed " + std::to_string(errors.begin()->first) + ": " + errors.begin()->second);
  }

  ExperimentResult res;
  std::vector<std::vector<MetricsRow>> per_seed;
  for (auto& o : outcomes) {
    per_seed.push_back(o->rows);
    res.seeds.push_back(std::move(*o));
  }
  res.aggregate = aggregate_across_seeds(per_seed);

  res.aggregate_path = dir / "aggregate.csv";
  {
    std::ofstream out(res.aggregate_path, std::ios::trunc);
    out << kAggregateHeader << '\n';
    for (const auto& r : res.aggregate) out << r.step << ',' << fmt(r.mean) << ',' << fmt(r.std) << ',' << r.n << '\n';
  }

  res.plot_path = dir / "plot_data.csv";
  {
    std::ofstream out(res.plot_path, std::ios::trunc);
    out << kPlotHeader << '\n';
    for (const auto& s : res.seeds)
      for (const auto& r : s.rows) out << r.step << ",seed_" << s.seed << ',' << fmt(r.eval_mean) << '\n';
    std::vector<double> means;
    for (const auto& r : res.aggregate) means.push_back(r.mean);
    const std::vector<double> smooth = moving_average(means, config.smoothing_window);
    for (std::size_t i = 0; i < res.aggregate.size(); ++i) {
      const auto& r = res.aggregate[i];
      out << r.step << ",mean," << fmt(r.mean) << '\n';
      out << r.step << ",mean_minus_std," << fmt(r.mean - r.std) << '\n';
      out << r.step << ",mean_plus_std," << fmt(r.mean + r.std) << '\n';
      out << r.step << ",mean_smoothed," << fmt(smooth[i]) << '\n';
    }
  }

  res.summary_path = dir / "summary.txt";
  {
    std::ofstream out(res.summary_path, std::ios::trunc);
    std::vector<double> maxima;
    out << "# max of unsmoothed evaluation means per trial\n";
    for (const auto& s : res.seeds) {
      out << "seed " << s.seed << " max_eval_mean " << fmt(s.max_eval_mean) << '\n';
      maxima.push_back(s.max_eval_mean);
    }
    const auto [m, sd] = mean_std(maxima);
    out << "max average return over " << maxima.size() << " trials: " << fmt(m) << " +/- " << fmt(sd) << '\n';
  }
  return res;
}

}  // namespace opac
