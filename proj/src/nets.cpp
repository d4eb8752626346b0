#include "opac/nets.hpp"

#include <cmath>
#include <sstream>

#include "opac/errors.hpp"

namespace opac {
namespace {

Layer init_layer(int fan_in, int fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Layer layer{Matrix(fan_in, fan_out), RowVector::Zero(fan_out)};
  for (int i = 0; i < fan_in; ++i)
    for (int j = 0; j < fan_out; ++j) layer.weight(i, j) = dist(rng);
  return layer;
}

Matrix activate(const Matrix& x, Activation act) {
  return act == Activation::kRelu ? Matrix(x.cwiseMax(0.0)) : Matrix(x.array().tanh());
}

diff::Var activate(diff::Var x, Activation act) { return act == Activation::kRelu ? relu(x) : tanh(x); }

Matrix affine(const Matrix& x, const Layer& layer) {
  Matrix out;
  out.noalias() = x * layer.weight;
  out.rowwise() += layer.bias;
  return out;
}

diff::Var affine(diff::Var x, const BoundLayer& layer) { return matmul(x, layer.weight) + layer.bias; }

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

}  // namespace

void MLPSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("MLPSpec: input and output dims must be >= 1");
  for (int h : hidden)
    if (h < 1) throw ConfigError("MLPSpec: hidden widths must be >= 1");
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Vector ParamSet::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index k = 0;
  for (const auto& l : layers) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) flat[k++] = l.weight(i, j);
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) flat[k++] = l.bias[j];
  }
  return flat;
}

void ParamSet::assign(const Vector& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count()))
    throw ShapeError("ParamSet::assign: expected " + std::to_string(parameter_count()) + " values, got " +
                     std::to_string(flat.size()));
  Eigen::Index k = 0;
  for (auto& l : layers) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = flat[k++];
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias[j] = flat[k++];
  }
}

bool ParamSet::same_shape(const ParamSet& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() || a.bias.size() != b.bias.size())
      return false;
  }
  return true;
}

ParamSet zeros_like(const ParamSet& params) {
  ParamSet z;
  z.layers.reserve(params.layers.size());
  for (const auto& l : params.layers)
    z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), RowVector::Zero(l.bias.size())});
  return z;
}

ParamSet init_params(const MLPSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParamSet p;
  int fan_in = spec.input_dim;
  for (int h : spec.hidden) {
    p.layers.push_back(init_layer(fan_in, h, rng));
    fan_in = h;
  }
  p.layers.push_back(init_layer(fan_in, spec.output_dim, rng));
  return p;
}

BoundParams bind(diff::Tape& tape, const ParamSet& params, bool requires_grad) {
  BoundParams out;
  out.reserve(params.layers.size());
  for (const auto& l : params.layers)
    out.push_back({tape.leaf(l.weight, requires_grad), tape.leaf(Matrix(l.bias), requires_grad)});
  return out;
}

ParamSet gradients_of(const diff::Gradients& grads, const BoundParams& bound) {
  ParamSet out;
  out.layers.reserve(bound.size());
  for (const auto& l : bound) out.layers.push_back({grads.of(l.weight), RowVector(grads.of(l.bias))});
  return out;
}

ActorNet ActorNet::create(const MLPSpec& spec, std::uint64_t seed) {
  spec.validate();
  ActorNet net{spec, init_params(spec, seed)};
  // Separate stream for the log-std head; trunk and mean head equal init_params(spec, seed).
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const int fan_in = spec.hidden.empty() ? spec.input_dim : spec.hidden.back();
  net.params.layers.push_back(init_layer(fan_in, spec.output_dim, rng));
  return net;
}

ActorOutput forward_actor(const ActorNet& net, const Matrix& states) {
  if (states.cols() != net.spec.input_dim)
    throw ShapeError("forward_actor: state batch " + shape_str(states) + " does not match input dim " +
                     std::to_string(net.spec.input_dim));
  const std::size_t depth = net.trunk_depth();
  Matrix h = states;
  for (std::size_t i = 0; i < depth; ++i) h = activate(affine(h, net.params.layers[i]), net.spec.activation);
  ActorOutput out;
  out.mu = affine(h, net.params.layers[depth]);
  out.log_std = affine(h, net.params.layers[depth + 1]).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  return out;
}

ActorVars forward_actor(const ActorNet& net, const BoundParams& bound, diff::Var states) {
  if (states.cols() != net.spec.input_dim)
    throw ShapeError("forward_actor: state batch " + shape_str(states.value()) + " does not match input dim " +
                     std::to_string(net.spec.input_dim));
  const std::size_t depth = net.trunk_depth();
  diff::Var h = states;
  for (std::size_t i = 0; i < depth; ++i) h = activate(affine(h, bound[i]), net.spec.activation);
  return {affine(h, bound[depth]), clamp(affine(h, bound[depth + 1]), kLogStdMin, kLogStdMax)};
}

CriticNet CriticNet::create(int state_dim, int action_dim, const std::vector<int>& hidden, std::uint64_t seed,
                            Activation activation) {
  MLPSpec spec{state_dim + action_dim, hidden, 1, activation};
  if (state_dim < 1 || action_dim < 1) throw ConfigError("CriticNet: state and action dims must be >= 1");
  return CriticNet{spec, state_dim, init_params(spec, seed)};
}

Vector forward_critic(const CriticNet& net, const Matrix& states, const Matrix& actions) {
  if (states.rows() != actions.rows() || states.cols() != net.state_dim || actions.cols() != net.action_dim())
    throw ShapeError("forward_critic: states " + shape_str(states) + " / actions " + shape_str(actions) +
                     " do not match critic input dim " + std::to_string(net.spec.input_dim));
  Matrix h(states.rows(), net.spec.input_dim);
  h << states, actions;
  const std::size_t depth = net.spec.hidden.size();
  for (std::size_t i = 0; i < depth; ++i) h = activate(affine(h, net.params.layers[i]), net.spec.activation);
  return affine(h, net.params.layers[depth]).col(0);
}

diff::Var forward_critic(const CriticNet& net, const BoundParams& bound, diff::Var states, diff::Var actions) {
  if (states.rows() != actions.rows() || states.cols() != net.state_dim || actions.cols() != net.action_dim())
    throw ShapeError("forward_critic: states " + shape_str(states.value()) + " / actions " +
                     shape_str(actions.value()) + " do not match critic input dim " +
                     std::to_string(net.spec.input_dim));
  diff::Var h = concat_cols(states, actions);
  const std::size_t depth = net.spec.hidden.size();
  for (std::size_t i = 0; i < depth; ++i) h = activate(affine(h, bound[i]), net.spec.activation);
  return affine(h, bound[depth]);
}

void polyak_update(ParamSet& target, const ParamSet& model, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw ContractError("polyak_update: tau must lie in [0, 1]");
  if (!target.same_shape(model)) throw ShapeError("polyak_update: target and model shapes differ");
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    auto& t = target.layers[i];
    const auto& m = model.layers[i];
    t.weight = tau * t.weight + (1.0 - tau) * m.weight;
    t.bias = tau * t.bias + (1.0 - tau) * m.bias;
  }
}

}  // namespace opac
