#pragma once

// Multilayer perceptrons for the actor and the critics, their tape bindings,
// and Polyak averaging of target copies.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "opac/diff/tape.hpp"
#include "opac/types.hpp"

namespace opac {

enum class Activation { kRelu, kTanh };

struct MLPSpec {
  int input_dim = 1;
  std::vector<int> hidden{256, 256};
  int output_dim = 1;
  Activation activation = Activation::kRelu;

  void validate() const;
};

// weight is fan_in x fan_out, so a batch maps as X * W + b.
struct Layer {
  Matrix weight;
  RowVector bias;
};

struct ParamSet {
  std::vector<Layer> layers;

  std::size_t parameter_count() const;
  // Layer order, weight then bias, each row-major.
  Vector flatten() const;
  void assign(const Vector& flat);
  bool same_shape(const ParamSet& other) const;
};

ParamSet zeros_like(const ParamSet& params);

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
ParamSet init_params(const MLPSpec& spec, std::uint64_t seed);

struct BoundLayer {
  diff::Var weight;
  diff::Var bias;
};
using BoundParams = std::vector<BoundLayer>;

BoundParams bind(diff::Tape& tape, const ParamSet& params, bool requires_grad);
ParamSet gradients_of(const diff::Gradients& grads, const BoundParams& bound);

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

// Trunk layers followed by two heads: params.layers = [hidden..., mean, log_std].
struct ActorNet {
  MLPSpec spec;  // input = observation dim, output = action dim
  ParamSet params;

  static ActorNet create(const MLPSpec& spec, std::uint64_t seed);
  std::size_t trunk_depth() const { return spec.hidden.size(); }
};

struct ActorOutput {
  Matrix mu;
  Matrix log_std;
};

struct ActorVars {
  diff::Var mu;
  diff::Var log_std;
};

ActorOutput forward_actor(const ActorNet& net, const Matrix& states);
ActorVars forward_actor(const ActorNet& net, const BoundParams& bound, diff::Var states);

// Maps the column concatenation [state, action] to one Q value per row.
struct CriticNet {
  MLPSpec spec;  // input = state dim + action dim, output = 1
  int state_dim = 1;
  ParamSet params;

  static CriticNet create(int state_dim, int action_dim, const std::vector<int>& hidden, std::uint64_t seed,
                          Activation activation = Activation::kRelu);
  int action_dim() const { return spec.input_dim - state_dim; }
};

Vector forward_critic(const CriticNet& net, const Matrix& states, const Matrix& actions);
diff::Var forward_critic(const CriticNet& net, const BoundParams& bound, diff::Var states, diff::Var actions);

// target <- tau * target + (1 - tau) * model; tau is the retention weight.
void polyak_update(ParamSet& target, const ParamSet& model, double tau);

}  // namespace opac
