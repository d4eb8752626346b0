#pragma once

// Define-by-run reverse-mode differentiation over dense Eigen matrices.
//
// Every value is a 2-D matrix (rows = batch, cols = features); scalars are
// 1x1. A BasicTape records nodes in creation order, so a node's parents always
// have smaller indices and a single reverse sweep computes all adjoints.
// Gradients flowing into a node from several consumers are summed.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "opac/errors.hpp"

namespace opac::diff {

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kTanh,
  kRelu,
  kExp,
  kLog,
  kSquare,
  kSoftplus,
  kSum,
  kMean,
  kRowSum,
  kScale,
  kAddScalar,
  kClamp,
  kConcatCols,
};

inline const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSquare: return "square";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kRowSum: return "row_sum";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kClamp: return "clamp";
    case OpKind::kConcatCols: return "concat_cols";
  }
  return "?";
}

template <typename Scalar>
class BasicTape;

template <typename Scalar>
class BasicVar {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  BasicVar() = default;
  BasicVar(BasicTape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  BasicTape<Scalar>& tape() const {
    if (tape_ == nullptr) throw ContractError("use of an unbound tape variable");
    return *tape_;
  }
  const Matrix& value() const { return tape().value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  BasicTape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class BasicGradients {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Var = BasicVar<Scalar>;

  BasicGradients(std::vector<Matrix> grads, std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  // True when some path from the root reached this node.
  bool reached(Var v) const { return v.id() < grads_.size() && grads_[v.id()].size() != 0; }

  // Adjoint of the root w.r.t. v; zeros when v does not influence the root.
  Matrix of(Var v) const {
    if (v.id() >= shapes_.size()) throw ContractError("gradient lookup for a node not on this tape");
    if (reached(v)) return grads_[v.id()];
    const auto [r, c] = shapes_[v.id()];
    return Matrix::Zero(r, c);
  }

 private:
  std::vector<Matrix> grads_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes_;
};

template <typename Scalar>
class BasicTape {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Var = BasicVar<Scalar>;
  using Gradients = BasicGradients<Scalar>;

  BasicTape() { nodes_.reserve(64); }
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true) {
    Node n;
    n.value = std::move(value);
    n.op = OpKind::kLeaf;
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }
  Var constant(Matrix value) { return leaf(std::move(value), false); }
  Var scalar(Scalar v, bool requires_grad = true) { return leaf(Matrix::Constant(1, 1, v), requires_grad); }

  std::size_t size() const { return nodes_.size(); }
  const Matrix& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  // Appends the result of `op` applied to the inputs. `p0`, `p1` carry the
  // scalar parameters of kScale / kAddScalar (p0) and kClamp (p0, p1).
  Var apply(OpKind op, Var a, Var b = {}, Scalar p0 = Scalar(0), Scalar p1 = Scalar(0)) {
    check_owned(a);
    const bool binary = is_binary(op);
    if (binary) check_owned(b);
    const Matrix& x = value(a);
    Node n;
    n.op = op;
    n.p0 = p0;
    n.p1 = p1;
    n.parents[0] = a.id();
    n.n_parents = 1;
    n.requires_grad = node(a).requires_grad;
    if (binary) {
      n.parents[1] = b.id();
      n.n_parents = 2;
      n.requires_grad = n.requires_grad || node(b).requires_grad;
    }

    switch (op) {
      case OpKind::kLeaf:
        throw ContractError("apply: leaf is not an operation");
      case OpKind::kMatMul: {
        const Matrix& y = value(b);
        if (x.cols() != y.rows()) throw shape_error(op, x, y);
        n.value.noalias() = x * y;
        break;
      }
      case OpKind::kAdd:
      case OpKind::kSub:
      case OpKind::kMul: {
        const Matrix& y = value(b);
        const bool same = x.rows() == y.rows() && x.cols() == y.cols();
        const bool row_bcast = y.rows() == 1 && x.cols() == y.cols() && x.rows() != 1;
        if (!same && !row_bcast) throw shape_error(op, x, y);
        if (same) {
          if (op == OpKind::kAdd) n.value = x + y;
          else if (op == OpKind::kSub) n.value = x - y;
          else n.value = x.cwiseProduct(y);
        } else {
          if (op == OpKind::kAdd) n.value = x.rowwise() + y.row(0);
          else if (op == OpKind::kSub) n.value = x.rowwise() - y.row(0);
          else n.value = x.array().rowwise() * y.row(0).array();
        }
        break;
      }
      case OpKind::kTanh: n.value = x.array().tanh(); break;
      case OpKind::kRelu: n.value = x.cwiseMax(Scalar(0)); break;
      case OpKind::kExp: n.value = x.array().exp(); break;
      case OpKind::kLog:
        if ((x.array() <= Scalar(0)).any()) {
          throw DomainError("log: argument has non-positive entries (min " +
                            std::to_string(static_cast<double>(x.minCoeff())) + ")");
        }
        n.value = x.array().log();
        break;
      case OpKind::kSquare: n.value = x.array().square(); break;
      case OpKind::kSoftplus:
        n.value = x.unaryExpr([](Scalar v) {
          using std::exp;
          using std::log1p;
          using std::abs;
          return (v > Scalar(0) ? v : Scalar(0)) + log1p(exp(-abs(v)));
        });
        break;
      case OpKind::kSum: n.value = Matrix::Constant(1, 1, x.sum()); break;
      case OpKind::kMean:
        if (x.size() == 0) throw shape_error(op, x);
        n.value = Matrix::Constant(1, 1, x.mean());
        break;
      case OpKind::kRowSum: n.value = x.rowwise().sum(); break;
      case OpKind::kScale: n.value = p0 * x; break;
      case OpKind::kAddScalar: n.value = x.array() + p0; break;
      case OpKind::kClamp:
        if (p0 > p1) throw ContractError("clamp: lower bound exceeds upper bound");
        n.value = x.cwiseMax(p0).cwiseMin(p1);
        break;
      case OpKind::kConcatCols: {
        const Matrix& y = value(b);
        if (x.rows() != y.rows()) throw shape_error(op, x, y);
        n.value.resize(x.rows(), x.cols() + y.cols());
        n.value << x, y;
        break;
      }
    }
    return push(std::move(n));
  }

  // Reverse sweep from a 1x1 root.
  Gradients backward(Var root) const {
    check_owned(root);
    const Matrix& rv = value(root);
    if (rv.rows() != 1 || rv.cols() != 1) {
      std::ostringstream os;
      os << "backward: root must be scalar-shaped, got (" << rv.rows() << "x" << rv.cols() << ")";
      throw ContractError(os.str());
    }
    const std::size_t count = root.id() + 1;
    std::vector<Matrix> g(nodes_.size());
    g[root.id()] = Matrix::Ones(1, 1);

    for (std::size_t i = count; i-- > 0;) {
      if (g[i].size() == 0) continue;
      const Node& n = nodes_[i];
      if (n.op == OpKind::kLeaf) continue;
      const Matrix& G = g[i];
      const Node& pa = nodes_[n.parents[0]];
      const bool ga = pa.requires_grad;
      const Node* pb = n.n_parents > 1 ? &nodes_[n.parents[1]] : nullptr;
      const bool gb = pb != nullptr && pb->requires_grad;
      const Matrix& x = pa.value;

      switch (n.op) {
        case OpKind::kLeaf: break;
        case OpKind::kMatMul:
          if (ga) accumulate(g, n.parents[0], G * pb->value.transpose());
          if (gb) accumulate(g, n.parents[1], x.transpose() * G);
          break;
        case OpKind::kAdd:
        case OpKind::kSub: {
          if (ga) accumulate(g, n.parents[0], G);
          if (gb) {
            const Scalar sign = n.op == OpKind::kAdd ? Scalar(1) : Scalar(-1);
            if (pb->value.rows() == x.rows()) accumulate(g, n.parents[1], sign * G);
            else accumulate(g, n.parents[1], sign * G.colwise().sum());
          }
          break;
        }
        case OpKind::kMul: {
          const Matrix& y = pb->value;
          const bool bcast = y.rows() != x.rows();
          if (ga) {
            if (bcast) accumulate(g, n.parents[0], G.array().rowwise() * y.row(0).array());
            else accumulate(g, n.parents[0], G.cwiseProduct(y));
          }
          if (gb) {
            if (bcast) accumulate(g, n.parents[1], G.cwiseProduct(x).colwise().sum());
            else accumulate(g, n.parents[1], G.cwiseProduct(x));
          }
          break;
        }
        case OpKind::kTanh:
          if (ga) accumulate(g, n.parents[0], G.array() * (Scalar(1) - n.value.array().square()));
          break;
        case OpKind::kRelu:
          if (ga) accumulate(g, n.parents[0], (x.array() > Scalar(0)).select(G.array(), Scalar(0)));
          break;
        case OpKind::kExp:
          if (ga) accumulate(g, n.parents[0], G.cwiseProduct(n.value));
          break;
        case OpKind::kLog:
          if (ga) accumulate(g, n.parents[0], G.cwiseQuotient(x));
          break;
        case OpKind::kSquare:
          if (ga) accumulate(g, n.parents[0], Scalar(2) * G.cwiseProduct(x));
          break;
        case OpKind::kSoftplus:
          if (ga) {
            accumulate(g, n.parents[0], G.array() * x.array().unaryExpr([](Scalar v) {
              using std::exp;
              return Scalar(1) / (Scalar(1) + exp(-v));
            }));
          }
          break;
        case OpKind::kSum:
          if (ga) accumulate(g, n.parents[0], Matrix::Constant(x.rows(), x.cols(), G(0, 0)));
          break;
        case OpKind::kMean:
          if (ga) {
            accumulate(g, n.parents[0],
                       Matrix::Constant(x.rows(), x.cols(), G(0, 0) / static_cast<Scalar>(x.size())));
          }
          break;
        case OpKind::kRowSum:
          if (ga) accumulate(g, n.parents[0], G.replicate(1, x.cols()));
          break;
        case OpKind::kScale:
          if (ga) accumulate(g, n.parents[0], n.p0 * G);
          break;
        case OpKind::kAddScalar:
          if (ga) accumulate(g, n.parents[0], G);
          break;
        case OpKind::kClamp:
          if (ga) {
            accumulate(g, n.parents[0],
                       (x.array() >= n.p0 && x.array() <= n.p1).select(G.array(), Scalar(0)));
          }
          break;
        case OpKind::kConcatCols:
          if (ga) accumulate(g, n.parents[0], G.leftCols(x.cols()));
          if (gb) accumulate(g, n.parents[1], G.rightCols(pb->value.cols()));
          break;
      }
    }

    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
    shapes.reserve(nodes_.size());
    for (const auto& n : nodes_) shapes.emplace_back(n.value.rows(), n.value.cols());
    return Gradients(std::move(g), std::move(shapes));
  }

 private:
  struct Node {
    Matrix value;
    std::size_t parents[2] = {0, 0};
    std::uint8_t n_parents = 0;
    OpKind op = OpKind::kLeaf;
    Scalar p0 = Scalar(0);
    Scalar p1 = Scalar(0);
    bool requires_grad = false;
  };

  static bool is_binary(OpKind op) {
    return op == OpKind::kMatMul || op == OpKind::kAdd || op == OpKind::kSub || op == OpKind::kMul ||
           op == OpKind::kConcatCols;
  }

  static ShapeError shape_error(OpKind op, const Matrix& a) {
    std::ostringstream os;
    os << op_name(op) << ": invalid shape (" << a.rows() << "x" << a.cols() << ")";
    return ShapeError(os.str());
  }
  static ShapeError shape_error(OpKind op, const Matrix& a, const Matrix& b) {
    std::ostringstream os;
    os << op_name(op) << ": shape mismatch (" << a.rows() << "x" << a.cols() << ") vs (" << b.rows() << "x"
       << b.cols() << ")";
    return ShapeError(os.str());
  }

  template <typename Expr>
  static void accumulate(std::vector<Matrix>& g, std::size_t id, const Expr& contribution) {
    if (g[id].size() == 0) g[id] = contribution;
    else g[id].array() += contribution.array();
  }

  void check_owned(Var v) const {
    if (&v.tape() != this || v.id() >= nodes_.size()) throw ContractError("variable does not belong to this tape");
  }
  const Node& node(Var v) const {
    check_owned(v);
    return nodes_[v.id()];
  }

  Var push(Node&& n) {
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

// Expression-style free functions. Both operands of a binary op must live on
// the same tape.

template <typename S>
BasicVar<S> matmul(BasicVar<S> a, BasicVar<S> b) { return a.tape().apply(OpKind::kMatMul, a, b); }
template <typename S>
BasicVar<S> operator+(BasicVar<S> a, BasicVar<S> b) { return a.tape().apply(OpKind::kAdd, a, b); }
template <typename S>
BasicVar<S> operator-(BasicVar<S> a, BasicVar<S> b) { return a.tape().apply(OpKind::kSub, a, b); }
template <typename S>
BasicVar<S> mul(BasicVar<S> a, BasicVar<S> b) { return a.tape().apply(OpKind::kMul, a, b); }
template <typename S>
BasicVar<S> tanh(BasicVar<S> a) { return a.tape().apply(OpKind::kTanh, a); }
template <typename S>
BasicVar<S> relu(BasicVar<S> a) { return a.tape().apply(OpKind::kRelu, a); }
template <typename S>
BasicVar<S> exp(BasicVar<S> a) { return a.tape().apply(OpKind::kExp, a); }
template <typename S>
BasicVar<S> log(BasicVar<S> a) { return a.tape().apply(OpKind::kLog, a); }
template <typename S>
BasicVar<S> square(BasicVar<S> a) { return a.tape().apply(OpKind::kSquare, a); }
template <typename S>
BasicVar<S> softplus(BasicVar<S> a) { return a.tape().apply(OpKind::kSoftplus, a); }
template <typename S>
BasicVar<S> sum(BasicVar<S> a) { return a.tape().apply(OpKind::kSum, a); }
template <typename S>
BasicVar<S> mean(BasicVar<S> a) { return a.tape().apply(OpKind::kMean, a); }
template <typename S>
BasicVar<S> row_sum(BasicVar<S> a) { return a.tape().apply(OpKind::kRowSum, a); }
template <typename S>
BasicVar<S> clamp(BasicVar<S> a, S lo, S hi) { return a.tape().apply(OpKind::kClamp, a, {}, lo, hi); }
template <typename S>
BasicVar<S> concat_cols(BasicVar<S> a, BasicVar<S> b) { return a.tape().apply(OpKind::kConcatCols, a, b); }

template <typename S>
BasicVar<S> operator*(S s, BasicVar<S> a) { return a.tape().apply(OpKind::kScale, a, {}, s); }
template <typename S>
BasicVar<S> operator*(BasicVar<S> a, S s) { return s * a; }
template <typename S>
BasicVar<S> operator-(BasicVar<S> a) { return S(-1) * a; }
template <typename S>
BasicVar<S> operator+(BasicVar<S> a, S s) { return a.tape().apply(OpKind::kAddScalar, a, {}, s); }
template <typename S>
BasicVar<S> operator+(S s, BasicVar<S> a) { return a + s; }
template <typename S>
BasicVar<S> operator-(BasicVar<S> a, S s) { return a + (-s); }
template <typename S>
BasicVar<S> operator-(S s, BasicVar<S> a) { return (-a) + s; }

using Tape = BasicTape<double>;
using Var = BasicVar<double>;
using Gradients = BasicGradients<double>;

}  // namespace opac::diff
