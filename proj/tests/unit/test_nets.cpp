#include <doctest.h>

#include <cmath>
#include <sstream>

#include "opac/checkpoint.hpp"
#include "opac/diff/finite_diff.hpp"
#include "opac/errors.hpp"
#include "opac/nets.hpp"
#include "opac/optim.hpp"

using namespace opac;

namespace {

Matrix random_matrix(int r, int c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

void zero(ParamSet& p) {
  for (auto& l : p.layers) {
    l.weight.setZero();
    l.bias.setZero();
  }
}

bool identical(const ParamSet& a, const ParamSet& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    if (a.layers[i].weight != b.layers[i].weight || a.layers[i].bias != b.layers[i].bias) return false;
  return true;
}

}  // namespace

TEST_SUITE("nets") {
  TEST_CASE("init is deterministic and bounded, biases zero") {
    const MLPSpec spec{100, {32, 16}, 3, Activation::kRelu};
    const ParamSet a = init_params(spec, 42);
    const ParamSet b = init_params(spec, 42);
    CHECK(identical(a, b));
    CHECK_FALSE(identical(a, init_params(spec, 43)));
    CHECK(a.layers[0].weight.cwiseAbs().maxCoeff() <= 0.1);
    for (const auto& l : a.layers) CHECK(l.bias.isZero(0.0));
    CHECK(a.layers.size() == 3);
    CHECK(a.layers[1].weight.rows() == 32);
    CHECK(a.layers[1].weight.cols() == 16);
  }

  TEST_CASE("default architecture is 256x256 relu") {
    const MLPSpec spec;
    CHECK(spec.hidden == std::vector<int>{256, 256});
    CHECK(spec.activation == Activation::kRelu);
  }

  TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(init_params(MLPSpec{0, {4}, 1}, 0), ConfigError);
    CHECK_THROWS_AS(init_params(MLPSpec{2, {0}, 1}, 0), ConfigError);
  }

  TEST_CASE("flatten and assign round trip") {
    ParamSet p = init_params(MLPSpec{3, {5}, 2}, 1);
    const Vector v = p.flatten();
    CHECK(static_cast<std::size_t>(v.size()) == p.parameter_count());
    CHECK(p.parameter_count() == 3 * 5 + 5 + 5 * 2 + 2);
    ParamSet q = zeros_like(p);
    q.assign(v);
    CHECK(identical(p, q));
    CHECK_THROWS_AS(q.assign(Vector::Zero(3)), ShapeError);
  }

  TEST_CASE("zero actor outputs zero mean and zero log-std") {
    ActorNet net = ActorNet::create(MLPSpec{3, {8, 8}, 2}, 7);
    zero(net.params);
    const ActorOutput out = forward_actor(net, random_matrix(4, 3, 1));
    CHECK(out.mu.isZero(0.0));
    CHECK(out.log_std.isZero(0.0));
  }

  TEST_CASE("identical states give identical outputs and log-std is clamped") {
    ActorNet net = ActorNet::create(MLPSpec{2, {8}, 1}, 3);
    Matrix s(5, 2);
    s.rowwise() = RowVector::Constant(2, 0.3);
    const ActorOutput out = forward_actor(net, s);
    for (int i = 1; i < 5; ++i) CHECK(out.mu.row(i) == out.mu.row(0));
    // Large weights on the log-std head push outputs outside the clamp.
    net.params.layers.back().weight *= 1e4;
    const ActorOutput big = forward_actor(net, random_matrix(50, 2, 2, 10.0));
    CHECK(big.log_std.maxCoeff() <= kLogStdMax);
    CHECK(big.log_std.minCoeff() >= kLogStdMin);
    CHECK((big.log_std.array() == kLogStdMax).any());
    CHECK((big.log_std.array() == kLogStdMin).any());
  }

  TEST_CASE("actor trunk and mean head equal init_params with the same seed") {
    const MLPSpec spec{3, {6}, 2};
    const ActorNet net = ActorNet::create(spec, 11);
    const ParamSet base = init_params(spec, 11);
    REQUIRE(net.params.layers.size() == base.layers.size() + 1);
    for (std::size_t i = 0; i < base.layers.size(); ++i) CHECK(net.params.layers[i].weight == base.layers[i].weight);
  }

  TEST_CASE("taped and plain forward passes agree") {
    const ActorNet actor = ActorNet::create(MLPSpec{3, {7, 5}, 2}, 5);
    const CriticNet critic = CriticNet::create(3, 2, {7, 5}, 6);
    const Matrix s = random_matrix(4, 3, 8);
    const Matrix a = random_matrix(4, 2, 9);
    diff::Tape t;
    const ActorVars av = forward_actor(actor, bind(t, actor.params, false), t.constant(s));
    const ActorOutput ao = forward_actor(actor, s);
    CHECK(av.mu.value().isApprox(ao.mu, 1e-14));
    CHECK(av.log_std.value().isApprox(ao.log_std, 1e-14));
    const diff::Var q = forward_critic(critic, bind(t, critic.params, false), t.constant(s), t.constant(a));
    CHECK(Vector(q.value().col(0)).isApprox(forward_critic(critic, s, a), 1e-14));
  }

  TEST_CASE("zero critic outputs zero and permuting rows permutes outputs") {
    CriticNet c = CriticNet::create(3, 1, {8}, 2);
    const Matrix s = random_matrix(6, 3, 3);
    const Matrix a = random_matrix(6, 1, 4);
    const Vector q = forward_critic(c, s, a);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
    perm.indices() << 3, 0, 5, 1, 4, 2;
    const Vector qp = forward_critic(c, perm * s, perm * a);
    CHECK(qp == perm * q);
    CHECK(forward_critic(c, s, a) == q);  // pure
    zero(c.params);
    CHECK(forward_critic(c, s, a).isZero(0.0));
    CHECK_THROWS_AS(forward_critic(c, s, random_matrix(5, 1, 1)), ShapeError);
  }

  TEST_CASE("critic gradient with respect to the action matches finite differences") {
    const CriticNet c = CriticNet::create(2, 2, {8, 8}, 12, Activation::kTanh);
    const Matrix s = random_matrix(1, 2, 13);
    const Matrix a = random_matrix(1, 2, 14, 0.5);
    diff::Tape t;
    const diff::Var av = t.leaf(a);
    const diff::Var q = forward_critic(c, bind(t, c.params, false), t.constant(s), av);
    const Matrix g = t.backward(sum(q)).of(av);
    const Vector num = diff::finite_diff_gradient(
        [&](const Vector& p) { return forward_critic(c, s, Matrix(p.transpose()))[0]; }, Vector(a.row(0).transpose()),
        1e-5);
    CHECK(diff::compare_gradients(Vector(g.row(0).transpose()), num).within(1e-4, 1e-6));
  }

  TEST_CASE("polyak update") {
    ParamSet target = init_params(MLPSpec{1, {}, 1}, 0);
    ParamSet model = zeros_like(target);
    target.layers[0].weight.setConstant(1.0);
    target.layers[0].bias.setConstant(1.0);
    ParamSet t1 = target;
    polyak_update(t1, model, 0.995);
    CHECK(t1.layers[0].weight(0, 0) == doctest::Approx(0.995).epsilon(1e-15));
    ParamSet t2 = target;
    polyak_update(t2, model, 1.0);
    CHECK(identical(t2, target));
    ParamSet t3 = target;
    polyak_update(t3, model, 0.0);
    CHECK(identical(t3, model));
    CHECK_THROWS_AS(polyak_update(t3, model, 1.5), ContractError);
    CHECK_THROWS_AS(polyak_update(t3, init_params(MLPSpec{2, {}, 1}, 0), 0.5), ShapeError);
  }

  TEST_CASE("polyak update contracts toward the model") {
    const MLPSpec spec{3, {4}, 2};
    ParamSet target = init_params(spec, 1);
    const ParamSet model = init_params(spec, 2);
    const Vector before = target.flatten() - model.flatten();
    polyak_update(target, model, 0.9);
    const Vector after = target.flatten() - model.flatten();
    CHECK(after.cwiseAbs().isApprox(0.9 * before.cwiseAbs(), 1e-12));
  }
}

TEST_SUITE("optim") {
  TEST_CASE("first Adam step moves each parameter by the learning rate") {
    ParamSet p = init_params(MLPSpec{2, {}, 1}, 0);
    const ParamSet start = p;
    ParamSet g = zeros_like(p);
    g.layers[0].weight << 0.5, -3.0;
    g.layers[0].bias << 1e-3;
    Adam opt(p, AdamConfig{0.01});
    opt.step(p, g);
    CHECK(p.layers[0].weight(0, 0) == doctest::Approx(start.layers[0].weight(0, 0) - 0.01).epsilon(1e-6));
    CHECK(p.layers[0].weight(1, 0) == doctest::Approx(start.layers[0].weight(1, 0) + 0.01).epsilon(1e-6));
    CHECK(p.layers[0].bias(0) == doctest::Approx(-0.01).epsilon(1e-4));
    CHECK(opt.steps() == 1);
  }

  TEST_CASE("Adam minimizes a quadratic") {
    ParamSet p = init_params(MLPSpec{3, {}, 1}, 4);
    Adam opt(p, AdamConfig{0.05});
    for (int i = 0; i < 2000; ++i) {
      ParamSet g = p;  // gradient of 0.5 ||p||^2
      opt.step(p, g);
    }
    CHECK(p.flatten().cwiseAbs().maxCoeff() < 1e-3);
  }

  TEST_CASE("Adam rejects mismatched gradients") {
    ParamSet p = init_params(MLPSpec{3, {}, 1}, 4);
    Adam opt(p, AdamConfig{});
    ParamSet wrong = init_params(MLPSpec{2, {}, 1}, 4);
    CHECK_THROWS_AS(opt.step(p, wrong), ShapeError);
  }
}

TEST_SUITE("checkpoint") {
  Checkpoint sample_checkpoint(std::size_t critics) {
    Checkpoint c;
    c.actor = ActorNet::create(MLPSpec{3, {8, 8}, 1}, 1);
    c.actor_target = ActorNet::create(MLPSpec{3, {8, 8}, 1}, 2);
    for (std::size_t i = 0; i < critics; ++i) {
      c.critics.push_back(CriticNet::create(3, 1, {8, 8}, 10 + i));
      c.critic_targets.push_back(CriticNet::create(3, 1, {8, 8}, 20 + i));
    }
    c.alpha = 0.137;
    c.step = 123456789;
    return c;
  }

  TEST_CASE("round trip is byte exact") {
    for (std::size_t n : {2u, 3u}) {
      const Checkpoint c = sample_checkpoint(n);
      std::ostringstream a;
      write_checkpoint(a, c);
      std::istringstream in(a.str());
      const Checkpoint back = read_checkpoint(in);
      std::ostringstream b;
      write_checkpoint(b, back);
      CHECK(a.str() == b.str());
      CHECK(back.alpha == c.alpha);
      CHECK(back.step == c.step);
      CHECK(back.critics.size() == n);
      CHECK(identical(back.actor.params, c.actor.params));
      CHECK(identical(back.critic_targets.back().params, c.critic_targets.back().params));
      CHECK(a.str().compare(0, 5, "OPAC1") == 0);
    }
  }

  TEST_CASE("corrupt input is rejected") {
    std::ostringstream a;
    write_checkpoint(a, sample_checkpoint(3));
    const std::string bytes = a.str();
    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS(read_checkpoint(truncated));
    std::istringstream trailing(bytes + "x");
    CHECK_THROWS(read_checkpoint(trailing));
    std::string bad = bytes;
    bad[0] = 'X';
    std::istringstream magic(bad);
    CHECK_THROWS(read_checkpoint(magic));
  }
}
