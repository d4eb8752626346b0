#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <utility>

#include "opac/errors.hpp"

namespace opac::diff {

// Central-difference gradient of a scalar function of a parameter vector:
// entry i is (f(p + h e_i) - f(p - h e_i)) / (2h).
template <typename F>
Eigen::VectorXd finite_diff_gradient(F&& f, const Eigen::VectorXd& params, double step) {
  if (!(step > 0.0)) throw ContractError("finite_diff_gradient: step must be positive");
  Eigen::VectorXd probe = params;
  Eigen::VectorXd grad(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double up = f(static_cast<const Eigen::VectorXd&>(probe));
    probe[i] = saved - step;
    const double down = f(static_cast<const Eigen::VectorXd&>(probe));
    probe[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// Largest elementwise discrepancy between an analytic and a numeric gradient.
// Entries whose analytic magnitude is below `abs_floor` are compared
// absolutely; the rest relatively.
struct GradientComparison {
  double max_relative = 0.0;
  double max_absolute_small = 0.0;
  bool within(double rel_tol, double abs_tol) const {
    return max_relative < rel_tol && max_absolute_small < abs_tol;
  }
};

inline GradientComparison compare_gradients(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                                            double abs_floor = 1e-6) {
  if (analytic.size() != numeric.size()) throw ShapeError("compare_gradients: length mismatch");
  GradientComparison out;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    if (std::abs(a) < abs_floor) {
      out.max_absolute_small = std::max(out.max_absolute_small, std::abs(a - n));
    } else {
      out.max_relative = std::max(out.max_relative, std::abs(a - n) / std::max(std::abs(a), std::abs(n)));
    }
  }
  return out;
}

}  // namespace opac::diff
