#include "opac/policy.hpp"

#include <cmath>
#include <numbers>

#include "opac/errors.hpp"

namespace opac {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

void check_same(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + ") vs (" + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
}

void check_bounds_dim(const Matrix& m, const ActionBounds& bounds, const char* what) {
  if (m.cols() != bounds.dim())
    throw ShapeError(std::string(what) + ": action dim " + std::to_string(m.cols()) + " vs bounds dim " +
                     std::to_string(bounds.dim()));
}

}  // namespace

ActionBounds ActionBounds::symmetric(int dim, double bound) {
  return {RowVector::Constant(dim, -bound), RowVector::Constant(dim, bound)};
}

void ActionBounds::validate() const {
  if (low.size() == 0 || low.size() != high.size()) throw ConfigError("ActionBounds: low/high size mismatch");
  for (Eigen::Index i = 0; i < low.size(); ++i) {
    if (!std::isfinite(low[i]) || !std::isfinite(high[i]) || !(low[i] < high[i]))
      throw ConfigError("ActionBounds: need finite low < high in every dimension");
  }
}

bool ActionBounds::contains(const RowVector& a) const {
  return a.size() == low.size() && (a.array() >= low.array()).all() && (a.array() <= high.array()).all();
}

double log_one_minus_tanh_sq(double u) { return 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u)); }

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

ActionBatch sample_reparam(const Matrix& mu, const Matrix& log_std, const Matrix& eps, const ActionBounds& bounds) {
  check_same(mu, log_std, "sample_reparam");
  check_same(mu, eps, "sample_reparam");
  check_bounds_dim(mu, bounds, "sample_reparam");
  const RowVector scale = bounds.scale();
  const RowVector center = bounds.center();
  const double log_scale_sum = scale.array().log().sum();

  ActionBatch out;
  out.pre_squash = mu.array() + log_std.array().exp() * eps.array();
  out.action = (out.pre_squash.array().tanh().rowwise() * scale.array()).rowwise() + center.array();
  out.log_prob.resize(mu.rows());
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    double lp = -log_scale_sum;
    for (Eigen::Index j = 0; j < mu.cols(); ++j) {
      lp += -0.5 * eps(i, j) * eps(i, j) - log_std(i, j) - kHalfLog2Pi;
      lp -= log_one_minus_tanh_sq(out.pre_squash(i, j));
    }
    out.log_prob[i] = lp;
  }
  return out;
}

ActionSample sample_reparam(const RowVector& mu, const RowVector& log_std, const RowVector& eps,
                            const ActionBounds& bounds) {
  ActionBatch b = sample_reparam(Matrix(mu), Matrix(log_std), Matrix(eps), bounds);
  return {b.pre_squash.row(0), b.action.row(0), b.log_prob[0]};
}

Vector log_prob_of(const Matrix& mu, const Matrix& log_std, const Matrix& actions, const ActionBounds& bounds) {
  check_same(mu, log_std, "log_prob_of");
  check_same(mu, actions, "log_prob_of");
  check_bounds_dim(mu, bounds, "log_prob_of");
  const RowVector scale = bounds.scale();
  const RowVector center = bounds.center();
  const double log_scale_sum = scale.array().log().sum();

  Vector out(mu.rows());
  for (Eigen::Index i = 0; i < mu.rows(); ++i) {
    double lp = -log_scale_sum;
    for (Eigen::Index j = 0; j < mu.cols(); ++j) {
      const double a = actions(i, j);
      if (!(a >= bounds.low[j] && a <= bounds.high[j]))
        throw ContractError("log_prob_of: action " + std::to_string(a) + " outside bounds [" +
                            std::to_string(bounds.low[j]) + ", " + std::to_string(bounds.high[j]) + "]");
      const double y = std::clamp((a - center[j]) / scale[j], -1.0 + kSquashEdge, 1.0 - kSquashEdge);
      const double u = std::atanh(y);
      const double z = (u - mu(i, j)) * std::exp(-log_std(i, j));
      lp += -0.5 * z * z - log_std(i, j) - kHalfLog2Pi - log_one_minus_tanh_sq(u);
    }
    out[i] = lp;
  }
  return out;
}

double log_prob_of(const RowVector& mu, const RowVector& log_std, const RowVector& action,
                   const ActionBounds& bounds) {
  return log_prob_of(Matrix(mu), Matrix(log_std), Matrix(action), bounds)[0];
}

Matrix deterministic_action(const Matrix& mu, const ActionBounds& bounds) {
  check_bounds_dim(mu, bounds, "deterministic_action");
  return (mu.array().tanh().rowwise() * bounds.scale().array()).rowwise() + bounds.center().array();
}

SquashedVars sample_reparam(diff::Var mu, diff::Var log_std, const Matrix& eps, const ActionBounds& bounds) {
  check_same(mu.value(), log_std.value(), "sample_reparam");
  check_same(mu.value(), eps, "sample_reparam");
  check_bounds_dim(mu.value(), bounds, "sample_reparam");
  diff::Tape& tape = mu.tape();
  const RowVector scale = bounds.scale();

  diff::Var u = mu + mul(exp(log_std), tape.constant(eps));
  diff::Var action = mul(tanh(u), tape.constant(Matrix(scale))) + tape.constant(Matrix(bounds.center()));

  Matrix base = -0.5 * eps.array().square() - kHalfLog2Pi;
  base.array().rowwise() -= scale.array().log();
  // log(1 - tanh(u)^2) = 2 log 2 - 2u - 2 softplus(-2u)
  diff::Var correction = (-2.0 * u) - 2.0 * softplus(-2.0 * u) + 2.0 * std::numbers::ln2;
  diff::Var log_prob = row_sum(tape.constant(std::move(base)) - log_std - correction);
  return {action, log_prob};
}

diff::Var deterministic_action(diff::Var mu, const ActionBounds& bounds) {
  check_bounds_dim(mu.value(), bounds, "deterministic_action");
  diff::Tape& tape = mu.tape();
  return mul(tanh(mu), tape.constant(Matrix(bounds.scale()))) + tape.constant(Matrix(bounds.center()));
}

void SmoothingSpec::validate() const {
  if (!(sigma > 0.0) || !(noise_clip > 0.0)) throw ConfigError("SmoothingSpec: sigma and noise clip must be > 0");
}

Matrix smooth_actions(const Matrix& actions, const Matrix& noise, const SmoothingSpec& smoothing,
                      const ActionBounds& bounds) {
  if (noise.rows() != actions.rows() || noise.cols() != actions.cols() || actions.cols() != bounds.dim())
    throw ShapeError("smooth_actions: actions, noise and bounds disagree in shape");
  const RowVector scale = bounds.scale();
  Matrix out(actions.rows(), actions.cols());
  for (Eigen::Index i = 0; i < actions.rows(); ++i) {
    for (Eigen::Index j = 0; j < actions.cols(); ++j) {
      const double e = std::clamp(noise(i, j), -smoothing.noise_clip, smoothing.noise_clip);
      out(i, j) = std::clamp(actions(i, j) + scale[j] * e, bounds.low[j], bounds.high[j]);
    }
  }
  return out;
}

TargetActions target_action(const ActorNet& actor_target, const Matrix& next_states,
                            const std::optional<SmoothingSpec>& smoothing, const ActionBounds& bounds,
                            bool stochastic, Rng& rng) {
  const ActorOutput out = forward_actor(actor_target, next_states);
  TargetActions t;
  if (stochastic) {
    const Matrix eps = standard_normal(out.mu.rows(), out.mu.cols(), rng);
    t.actions = sample_reparam(out.mu, out.log_std, eps, bounds).action;
  } else {
    t.actions = deterministic_action(out.mu, bounds);
  }
  if (smoothing) {
    smoothing->validate();
    std::normal_distribution<double> noise(0.0, smoothing->sigma);
    Matrix draws(t.actions.rows(), t.actions.cols());
    for (Eigen::Index i = 0; i < draws.rows(); ++i)
      for (Eigen::Index j = 0; j < draws.cols(); ++j) draws(i, j) = noise(rng);
    t.actions = smooth_actions(t.actions, draws, *smoothing, bounds);
  }
  t.log_prob = stochastic ? log_prob_of(out.mu, out.log_std, t.actions, bounds) : Vector::Zero(t.actions.rows());
  return t;
}

}  // namespace opac
