#pragma once

// Binary checkpoint of the eight (or six, for two-critic variants) networks,
// the entropy temperature and the gradient-step counter.
//
// Layout, all integers and floats little-endian:
//   "OPAC1"
//   u32 actor_trunk_depth, u32 n_critics, u32 critic_hidden_depth,
//   u32 state_dim, u32 action_dim, u8 activation
//   u32 array_count
//   array_count x { u32 rank, u64 dim[rank], f64 data[prod(dim)] row-major }
//   f64 alpha, u64 step
// Arrays appear as (weight, bias) per layer for: actor, actor target, each
// critic model, then each critic target.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "opac/nets.hpp"

namespace opac {

inline constexpr char kCheckpointMagic[5] = {'O', 'P', 'A', 'C', '1'};

struct Checkpoint {
  ActorNet actor;
  ActorNet actor_target;
  std::vector<CriticNet> critics;
  std::vector<CriticNet> critic_targets;
  double alpha = 0.0;
  std::uint64_t step = 0;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace opac
