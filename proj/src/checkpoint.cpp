#include "opac/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "opac/errors.hpp"

namespace opac {
namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

  void matrix(const Matrix& m) {
    u32(2);
    u64(static_cast<std::uint64_t>(m.rows()));
    u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
  }
  void vector(const RowVector& v) {
    u32(1);
    u64(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index j = 0; j < v.size(); ++j) f64(v[j]);
  }
  void params(const ParamSet& p) {
    for (const auto& l : p.layers) {
      matrix(l.weight);
      vector(l.bias);
    }
  }

 private:
  template <typename U>
  void le(U v) {
    std::array<char, sizeof(U)> bytes;
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
    out_.write(bytes.data(), bytes.size());
  }
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint8_t u8() {
    char c;
    if (!in_.get(c)) fail();
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() { return le<std::uint32_t>(); }
  std::uint64_t u64() { return le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }

  RowVector vector(Eigen::Index size) {
    if (u32() != 1) throw std::runtime_error("checkpoint: expected a rank-1 array");
    expect_dim(size);
    RowVector v(size);
    for (Eigen::Index j = 0; j < size; ++j) v[j] = f64();
    return v;
  }

 private:
  void expect_dim(Eigen::Index want) {
    const std::uint64_t got = u64();
    if (got != static_cast<std::uint64_t>(want))
      throw ShapeError("checkpoint: stored dimension " + std::to_string(got) + " but expected " +
                       std::to_string(want));
  }
  [[noreturn]] void fail() { throw std::runtime_error("checkpoint: unexpected end of file"); }
  template <typename U>
  U le() {
    std::array<unsigned char, sizeof(U)> bytes;
    if (!in_.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) fail();
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
};

std::vector<int> widths_of(const ParamSet& p, std::size_t depth) {
  std::vector<int> w;
  for (std::size_t i = 0; i < depth; ++i) w.push_back(static_cast<int>(p.layers[i].weight.cols()));
  return w;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  if (ckpt.critics.size() != ckpt.critic_targets.size() || ckpt.critics.empty())
    throw ContractError("write_checkpoint: critic models and targets must pair up");
  Writer w(out);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const auto& critic0 = ckpt.critics.front();
  w.u32(static_cast<std::uint32_t>(ckpt.actor.trunk_depth()));
  w.u32(static_cast<std::uint32_t>(ckpt.critics.size()));
  w.u32(static_cast<std::uint32_t>(critic0.spec.hidden.size()));
  w.u32(static_cast<std::uint32_t>(ckpt.actor.spec.input_dim));
  w.u32(static_cast<std::uint32_t>(ckpt.actor.spec.output_dim));
  w.u8(ckpt.actor.spec.activation == Activation::kRelu ? 0 : 1);

  std::size_t arrays = 2 * (ckpt.actor.params.layers.size() + ckpt.actor_target.params.layers.size());
  for (const auto& c : ckpt.critics) arrays += 2 * c.params.layers.size();
  for (const auto& c : ckpt.critic_targets) arrays += 2 * c.params.layers.size();
  w.u32(static_cast<std::uint32_t>(arrays));

  w.params(ckpt.actor.params);
  w.params(ckpt.actor_target.params);
  for (const auto& c : ckpt.critics) w.params(c.params);
  for (const auto& c : ckpt.critic_targets) w.params(c.params);
  w.f64(ckpt.alpha);
  w.u64(ckpt.step);
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof(kCheckpointMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic (expected OPAC1)");
  Reader r(in);
  const std::uint32_t actor_depth = r.u32();
  const std::uint32_t n_critics = r.u32();
  const std::uint32_t critic_depth = r.u32();
  const auto state_dim = static_cast<int>(r.u32());
  const auto action_dim = static_cast<int>(r.u32());
  const Activation act = r.u8() == 0 ? Activation::kRelu : Activation::kTanh;
  const std::uint32_t arrays = r.u32();
  if (n_critics == 0 || arrays != 2 * (2 * (actor_depth + 2) + 2 * n_critics * (critic_depth + 1)))
    throw std::runtime_error("checkpoint: inconsistent layout header");

  // Widths are recovered from the stored shapes: peek each weight's column
  // count as the arrays are consumed.
  auto read_shaped = [&r](std::size_t layer_count) {
    ParamSet p;
    for (std::size_t i = 0; i < layer_count; ++i) {
      if (r.u32() != 2) throw std::runtime_error("checkpoint: expected a rank-2 array");
      const auto rows = static_cast<Eigen::Index>(r.u64());
      const auto cols = static_cast<Eigen::Index>(r.u64());
      Layer l{Matrix(rows, cols), RowVector()};
      for (Eigen::Index a = 0; a < rows; ++a)
        for (Eigen::Index b = 0; b < cols; ++b) l.weight(a, b) = r.f64();
      l.bias = r.vector(cols);
      p.layers.push_back(std::move(l));
    }
    return p;
  };

  Checkpoint ck;
  auto make_actor = [&](ParamSet p) {
    MLPSpec spec{state_dim, widths_of(p, actor_depth), action_dim, act};
    if (p.layers.front().weight.rows() != state_dim) throw ShapeError("checkpoint: actor input dim mismatch");
    return ActorNet{spec, std::move(p)};
  };
  ck.actor = make_actor(read_shaped(actor_depth + 2));
  ck.actor_target = make_actor(read_shaped(actor_depth + 2));
  auto make_critic = [&](ParamSet p) {
    MLPSpec spec{state_dim + action_dim, widths_of(p, critic_depth), 1, act};
    if (p.layers.front().weight.rows() != state_dim + action_dim)
      throw ShapeError("checkpoint: critic input dim mismatch");
    return CriticNet{spec, state_dim, std::move(p)};
  };
  for (std::uint32_t i = 0; i < n_critics; ++i) ck.critics.push_back(make_critic(read_shaped(critic_depth + 1)));
  for (std::uint32_t i = 0; i < n_critics; ++i)
    ck.critic_targets.push_back(make_critic(read_shaped(critic_depth + 1)));
  ck.alpha = r.f64();
  ck.step = r.u64();
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace opac
