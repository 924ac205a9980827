#pragma once

#include <string>
#include <utility>

#include "mmfuse/ops.hpp"
#include "mmfuse/param_store.hpp"

namespace mmfuse {

enum class Modality { Text, Image };

/// "txt" or "img".
const char* modality_tag(Modality m);

struct ManmConfig {
    Index d_txt = 768;
    Index d_region_in = 1024;
    Index d_model = 768;
    Index geometry_dim = 6;
    Index msan_dim = 256;
    int msan_heads = 4;
    Index seq_len = 100;
    ad::ReduceMode pool = ad::ReduceMode::Max;

    /// Throws ArgumentError on inconsistent widths.
    void validate() const;
};

/// Registers every attention-module parameter under the "manm." prefix.
/// Weights get fan-in uniform init, biases zero. Parameter names:
///
///   manm.region.{W,b}            region projection
///   manm.pos.{W,b}               geometry embedding
///   manm.{txt,img}.{W_Q,W_K,W_V} bias-free query/key/value maps
///   manm.gate_{img,txt}.*        gate set of the cross-attention that yields
///                                the image (resp. text) attended sequence:
///                                W_QG b_QG W_KG b_KG W_QM b_QM W_KM b_KM
///   manm.msan_{img,txt}.{W_q,W_k,W_v,W_o,b_o}
template <typename T>
void add_manm_params(ParamStore<T>& ps, const ManmConfig& cfg, const Rng& rng);

/// regions * W_i + b_i.
template <typename T>
ad::Var<T> project_regions(ParamStore<T>& ps, const ad::Var<T>& regions);

/// proj (elementwise) sigmoid(geometry * W_I + b_I).
template <typename T>
ad::Var<T> context_aware_regions(ParamStore<T>& ps, const ad::Var<T>& proj,
                                 const ad::Var<T>& geometry);

template <typename T>
struct Qkv {
    ad::Var<T> q, k, v;
};

template <typename T>
Qkv<T> qkv(ParamStore<T>& ps, const ad::Var<T>& x, Modality which);

template <typename T>
struct GateMasks {
    ad::Var<T> mq, mk;
};

/// G = (Q W_QG + b_QG) * (K W_KG + b_KG); M_Q = sigmoid(G W_QM + b_QM),
/// M_K = sigmoid(G W_KM + b_KM). `gate` selects the parameter set by the
/// modality of the attended output.
template <typename T>
GateMasks<T> adaptive_gate(ParamStore<T>& ps, const ad::Var<T>& q, const ad::Var<T>& k,
                           Modality gate);

/// softmax((M_Q * Q)(M_K * K)^T / sqrt(d)) V per segment, keys limited to each
/// segment's valid rows.
template <typename T>
ad::Var<T> gated_cross_attention(const ad::Var<T>& q, const ad::Var<T>& k, const ad::Var<T>& v,
                                 const GateMasks<T>& masks, const ad::Segments& segs);

/// Multi-head self-attention over each segment's valid rows followed by the
/// output projection. Output width cfg.msan_dim.
template <typename T>
ad::Var<T> msan(ParamStore<T>& ps, const ManmConfig& cfg, const ad::Var<T>& x, Modality which,
                const ad::Segments& segs);

/// Per-segment pooling of both sequences, concatenated image then text.
template <typename T>
ad::Var<T> pool_concat(const ad::Var<T>& x_img, const ad::Segments& img_segs,
                       const ad::Var<T>& x_txt, const ad::Segments& txt_segs, ad::ReduceMode mode);

template <typename T>
struct ManmTrace {
    ad::Var<T> x_img;       // cross-attended, text query positions
    ad::Var<T> x_txt;       // cross-attended, region query positions
    ad::Var<T> msan_img;
    ad::Var<T> msan_txt;
    ad::Var<T> attended;    // B x 2*msan_dim
};

/// Full attention module on a stacked ragged batch. `text_segs` and
/// `image_segs` share offsets and lengths and carry the valid token and
/// region counts.
///
/// The image-side sequence attends with text queries and keys over region
/// values, so its rows are text positions and it is masked by the token count;
/// the text side is the mirror image.
template <typename T>
ManmTrace<T> manm_forward(ParamStore<T>& ps, const ManmConfig& cfg, const ad::Var<T>& tokens,
                          const ad::Var<T>& regions, const ad::Var<T>& geometry,
                          const ad::Segments& text_segs, const ad::Segments& image_segs);

} // namespace mmfuse
