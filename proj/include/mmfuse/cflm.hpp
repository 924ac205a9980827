#pragma once

#include "mmfuse/features.hpp"
#include "mmfuse/ops.hpp"
#include "mmfuse/param_store.hpp"

namespace mmfuse {

inline constexpr Index kContentDim = schema::kToxDim + schema::kNsfwDim + 1 + schema::kCapDim;

/// tox | nsfw | msl | cap, length 524.
Vector assemble_content(const Vector& tox, const Vector& nsfw, double msl, const Vector& cap);

/// Registers cflm.{W_f,b_f}: kContentDim -> out_dim.
template <typename T>
void add_cflm_params(ParamStore<T>& ps, const Rng& rng, Index out_dim = 256);

/// ReLU(content W_f + b_f) for a B x kContentDim batch.
template <typename T>
ad::Var<T> cflm_forward(ParamStore<T>& ps, const ad::Var<T>& content);

} // namespace mmfuse
