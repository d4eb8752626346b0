#include <doctest.h>

#include <numeric>
#include <sstream>

#include "opac/envs.hpp"
#include "opac/errors.hpp"
#include "opac/tabular.hpp"

using namespace opac;

namespace {

FiniteMDP single_state(double r, double gamma) {
  FiniteMDP m;
  m.n_states = 1;
  m.n_actions = 1;
  m.transition = {RowVector::Ones(1)};
  m.reward = Matrix::Constant(1, 1, r);
  m.gamma = gamma;
  m.terminal = {false};
  return m;
}

}  // namespace

TEST_SUITE("tabular") {
  TEST_CASE("single state converges to the geometric series") {
    const FiniteMDP m = single_state(1.0, 0.9);
    for (TargetStrategy g : {TargetStrategy::kMeanSmallerTwo, TargetStrategy::kMedianThree}) {
      QTables q = QTables::random(1, 1, 3.0, 1);
      for (int i = 0; i < 1000; ++i) triple_q_step(q, m, 0, 0, 1.0, 0, 0.5, g);
      CHECK(std::abs(q.a(0, 0) - 10.0) < 1e-6);
      CHECK(std::abs(q.b(0, 0) - 10.0) < 1e-6);
      CHECK(std::abs(q.c(0, 0) - 10.0) < 1e-6);
    }
    const Matrix qs = value_iteration(m, 1e-12);
    CHECK(qs(0, 0) == doctest::Approx(10.0).epsilon(1e-10));
  }

  TEST_CASE("zero learning rate leaves the tables unchanged") {
    const FiniteMDP m = random_mdp(1, 4, 2);
    QTables q = QTables::random(4, 2, 1.0, 2);
    const QTables before = q;
    triple_q_step(q, m, 1, 1, 0.7, 2, 0.0, TargetStrategy::kMedianThree);
    CHECK(q.a == before.a);
    CHECK(q.b == before.b);
    CHECK(q.c == before.c);
  }

  TEST_CASE("identical tables reduce to standard Q-learning") {
    const FiniteMDP m = random_mdp(3, 5, 3);
    QTables q = QTables::random(5, 3, 1.0, 4);
    q.b = q.a;
    q.c = q.a;
    for (TargetStrategy g : {TargetStrategy::kMeanSmallerTwo, TargetStrategy::kMedianThree}) {
      QTables w = q;
      const TripleQUpdate u = triple_q_step(w, m, 0, 1, 0.25, 3, 0.5, g);
      CHECK(u.target == doctest::Approx(0.25 + m.gamma * q.a.row(3).maxCoeff()).epsilon(1e-15));
      CHECK(u.target_action == greedy_action(q.a, 3));
    }
  }

  TEST_CASE("exactly one cell changes per step and a* comes from table A") {
    const FiniteMDP m = random_mdp(5, 6, 3);
    QTables q = QTables::random(6, 3, 1.0, 6);
    q.b(2, 0) = 100.0;  // B prefers action 0, A must still decide
    const QTables before = q;
    const TripleQUpdate u = triple_q_step(q, m, 4, 2, 1.0, 2, 0.3, TargetStrategy::kMedianThree);
    CHECK(u.target_action == greedy_action(before.a, 2));
    for (int t = 0; t < 3; ++t) {
      const Matrix diff = (q[t] - before[t]).cwiseAbs();
      CHECK((diff.array() > 0).count() == 1);
      CHECK(diff(4, 2) > 0.0);
    }
  }

  TEST_CASE("terminal next state uses the reward alone") {
    FiniteMDP m = random_mdp(5, 3, 2);
    m.terminal[1] = true;
    QTables q = QTables::random(3, 2, 1.0, 1);
    const TripleQUpdate u = triple_q_step(q, m, 0, 0, 0.42, 1, 1.0, TargetStrategy::kMeanSmallerTwo);
    CHECK(u.target == 0.42);
    CHECK(q.a(0, 0) == 0.42);
  }

  TEST_CASE("ties break toward the lowest action") {
    Matrix q(1, 4);
    q << 1.0, 3.0, 3.0, 2.0;
    CHECK(greedy_action(q, 0) == 1);
  }

  TEST_CASE("index and learning-rate errors") {
    const FiniteMDP m = random_mdp(1, 3, 2);
    QTables q = QTables::zeros(3, 2);
    CHECK_THROWS_AS(triple_q_step(q, m, 3, 0, 0, 0, 0.5, TargetStrategy::kMedianThree), std::out_of_range);
    CHECK_THROWS_AS(triple_q_step(q, m, 0, 2, 0, 0, 0.5, TargetStrategy::kMedianThree), std::out_of_range);
    CHECK_THROWS_AS(triple_q_step(q, m, 0, 0, 0, -1, 0.5, TargetStrategy::kMedianThree), std::out_of_range);
    CHECK_THROWS_AS(triple_q_step(q, m, 0, 0, 0, 0, 1.5, TargetStrategy::kMedianThree), ContractError);
  }

  TEST_CASE("value iteration oracle") {
    FiniteMDP zero = random_mdp(2, 4, 2);
    zero.reward.setZero();
    CHECK(value_iteration(zero, 1e-10).isZero(0.0));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const FiniteMDP m = random_mdp(seed, 6, 3, 0.9);
      const Matrix qs = value_iteration(m, 1e-10);
      CHECK(bellman_residual(m, qs) < 1e-10);
      CHECK((bellman_operator(m, qs) - qs).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  TEST_CASE("random MDPs are valid stochastic matrices") {
    const FiniteMDP m = random_mdp(9, 6, 3);
    for (int s = 0; s < 6; ++s)
      for (int a = 0; a < 3; ++a) {
        CHECK(std::abs(m.p(s, a).sum() - 1.0) < 1e-12);
        CHECK(m.p(s, a).minCoeff() >= 0.0);
      }
    CHECK(m.reward_noise > 0.0);
    FiniteMDP bad = m;
    bad.transition[0][0] += 0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = m;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("learning rate schedule") {
    const LearningSchedule s;
    CHECK(s.lr(0) == 1.0);
    CHECK(s.lr(100) == doctest::Approx(0.5));
    CHECK(s.epsilon == 0.3);
  }

  TEST_CASE("convergence on random MDPs for both strategies") {
    for (TargetStrategy g : {TargetStrategy::kMeanSmallerTwo, TargetStrategy::kMedianThree}) {
      for (std::uint64_t seed : {0u, 1u}) {
        const FiniteMDP m = random_mdp(seed, 6, 3);
        ConvergenceOptions o;
        o.seed = seed;
        const ConvergenceResult r = run_convergence_experiment(m, g, o);
        CHECK(r.trajectory.back().step == 200000);
        CHECK(r.trajectory.back().sup_a < 0.05 * r.q_star.cwiseAbs().maxCoeff());
        CHECK(r.trajectory.size() == 201);
      }
    }
  }

  TEST_CASE("one-step problem converges to the reward table") {
    const FiniteMDP m = random_mdp(4, 6, 3, 0.0);
    ConvergenceOptions o;
    o.seed = 4;
    const ConvergenceResult r = run_convergence_experiment(m, TargetStrategy::kMedianThree, o);
    CHECK(r.q_star == m.reward);
    CHECK((r.tables.a - m.reward).cwiseAbs().maxCoeff() < 0.2);
  }

  TEST_CASE("uniform exploration still converges") {
    const FiniteMDP m = random_mdp(6, 6, 3);
    ConvergenceOptions o;
    o.seed = 6;
    o.schedule.epsilon = 1.0;
    const ConvergenceResult r = run_convergence_experiment(m, TargetStrategy::kMeanSmallerTwo, o);
    CHECK(r.trajectory.back().sup_a < 0.05 * r.q_star.cwiseAbs().maxCoeff());
  }

  TEST_CASE("identically initialized tables stay equal") {
    const FiniteMDP m = random_mdp(8, 6, 3);
    ConvergenceOptions o;
    o.steps = 20000;
    o.init_scale = 0.0;
    const ConvergenceResult r = run_convergence_experiment(m, TargetStrategy::kMeanSmallerTwo, o);
    CHECK(r.tables.a == r.tables.b);
    CHECK(r.tables.b == r.tables.c);
    for (const auto& e : r.trajectory) CHECK(e.sup_a == e.sup_c);
  }

  TEST_CASE("aggregated targets do not exceed single-estimator max targets on average") {
    const FiniteMDP m = random_mdp(10, 6, 3);
    for (TargetStrategy g : {TargetStrategy::kMeanSmallerTwo, TargetStrategy::kMedianThree}) {
      ConvergenceOptions o;
      o.seed = 10;
      o.steps = 50000;
      o.log_targets = true;
      const ConvergenceResult r = run_convergence_experiment(m, g, o);
      REQUIRE(r.g_targets.size() == 50000);
      const double mg = std::accumulate(r.g_targets.begin(), r.g_targets.end(), 0.0) / 50000.0;
      const double mm = std::accumulate(r.max_targets.begin(), r.max_targets.end(), 0.0) / 50000.0;
      CHECK(mg <= mm);
    }
  }

  TEST_CASE("error shrinks over exponentially spaced checkpoints on average") {
    std::vector<double> avg(4, 0.0);
    const std::uint64_t marks[] = {100, 1000, 10000, 100000};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const FiniteMDP m = random_mdp(100 + seed, 6, 3);
      ConvergenceOptions o;
      o.seed = seed;
      o.steps = 100000;
      o.record_every = 100;
      const ConvergenceResult r = run_convergence_experiment(m, TargetStrategy::kMedianThree, o);
      for (std::size_t k = 0; k < 4; ++k)
        for (const auto& e : r.trajectory)
          if (e.step == marks[k]) avg[k] += e.sup_a / 10.0;
    }
    for (std::size_t k = 1; k < 4; ++k) CHECK(avg[k] <= avg[k - 1]);
  }

  TEST_CASE("trajectory CSV") {
    const FiniteMDP m = random_mdp(1, 3, 2);
    ConvergenceOptions o;
    o.steps = 3000;
    const ConvergenceResult r = run_convergence_experiment(m, TargetStrategy::kMedianThree, o);
    std::ostringstream out;
    write_convergence_csv(out, r, TargetStrategy::kMedianThree, 1);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,sup_error_A,sup_error_B,sup_error_C,strategy,seed");
    int rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      CHECK(std::count(line.begin(), line.end(), ',') == 5);
      CHECK(line.find(",median3,1") != std::string::npos);
    }
    CHECK(rows == 4);
  }
}
