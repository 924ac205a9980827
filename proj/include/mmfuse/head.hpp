#pragma once

#include <array>

#include "mmfuse/ops.hpp"
#include "mmfuse/param_store.hpp"

namespace mmfuse {

inline constexpr Index kJointDim = 1280;
inline constexpr std::array<Index, 3> kHeadWidths = {1024, 512, 256};

/// attended | relation | content.
template <typename T>
ad::Var<T> fuse_joint(const ad::Var<T>& attended, const ad::Var<T>& relation,
                      const ad::Var<T>& content);

/// Registers head.fc1..fc3.{W,b} (1280 -> 1024 -> 512 -> 256) and head.out.{W,b} (256 -> 1).
template <typename T>
void add_head_params(ParamStore<T>& ps, const Rng& rng);

/// Three ReLU layers, each followed by inverted dropout when `rng` is given
/// and p > 0, then a sigmoid unit. Returns B x 1 probabilities.
template <typename T>
ad::Var<T> head_forward(ParamStore<T>& ps, const ad::Var<T>& joint, double dropout_p, Rng* rng);

} // namespace mmfuse
