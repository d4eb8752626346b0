#include "opac/optim.hpp"

#include <cmath>

#include "opac/errors.hpp"

namespace opac {

Adam::Adam(const ParamSet& like, AdamConfig config) : config_(config), m_(zeros_like(like)), v_(zeros_like(like)) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("Adam: learning rate must be positive");
}

void Adam::step(ParamSet& params, const ParamSet& grads) {
  if (!params.same_shape(m_) || !grads.same_shape(m_)) throw ShapeError("Adam::step: parameter shape mismatch");
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;

  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    update(params.layers[i].weight, m_.layers[i].weight, v_.layers[i].weight, grads.layers[i].weight);
    update(params.layers[i].bias, m_.layers[i].bias, v_.layers[i].bias, grads.layers[i].bias);
  }
}

}  // namespace opac
