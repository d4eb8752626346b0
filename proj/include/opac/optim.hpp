#pragma once

#include <cstdint>

#include "opac/nets.hpp"

namespace opac {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive moment estimation with bias correction, one instance per ParamSet.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamSet& like, AdamConfig config);

  void step(ParamSet& params, const ParamSet& grads);
  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  ParamSet m_;
  ParamSet v_;
  std::uint64_t t_ = 0;
};

}  // namespace opac
