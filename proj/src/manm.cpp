#include "mmfuse/manm.hpp"

#include "mmfuse/error.hpp"

namespace mmfuse {

using namespace ad;

namespace {

std::string key(const char* group, Modality m, const char* name) {
    return std::string("manm.") + group + modality_tag(m) + "." + name;
}

template <typename T>
Var<T> p(ParamStore<T>& ps, const Var<T>& on, const std::string& name) {
    return on.tape().param(ps.at(name));
}

template <typename T>
void add_weight(ParamStore<T>& ps, const std::string& name, Index in, Index out, const Rng& rng) {
    Param<T>& w = ps.add(name, in, out);
    Rng r = rng.split(name);
    init_fan_in(w, r);
}

template <typename T>
void add_bias(ParamStore<T>& ps, const std::string& name, Index out) {
    ps.add(name, 1, out);
}

} // namespace

const char* modality_tag(Modality m) {
    return m == Modality::Text ? "txt" : "img";
}

void ManmConfig::validate() const {
    if (d_model != d_txt) {
        throw ArgumentError("manm: d_model must equal d_txt");
    }
    if (msan_heads < 1 || msan_dim % msan_heads != 0) {
        throw ArgumentError("manm: msan_dim must be divisible by msan_heads");
    }
    if (d_region_in < 1 || geometry_dim < 1 || seq_len < 1) {
        throw ArgumentError("manm: widths and seq_len must be positive");
    }
}

template <typename T>
void add_manm_params(ParamStore<T>& ps, const ManmConfig& cfg, const Rng& rng) {
    cfg.validate();
    const Index d = cfg.d_model;
    add_weight(ps, "manm.region.W", cfg.d_region_in, d, rng);
    add_bias(ps, "manm.region.b", d);
    add_weight(ps, "manm.pos.W", cfg.geometry_dim, d, rng);
    add_bias(ps, "manm.pos.b", d);
    for (Modality m : {Modality::Text, Modality::Image}) {
        for (const char* n : {"W_Q", "W_K", "W_V"}) {
            add_weight(ps, key("", m, n), d, d, rng);
        }
    }
    for (Modality m : {Modality::Image, Modality::Text}) {
        for (const char* n : {"QG", "KG", "QM", "KM"}) {
            add_weight(ps, key("gate_", m, (std::string("W_") + n).c_str()), d, d, rng);
            add_bias(ps, key("gate_", m, (std::string("b_") + n).c_str()), d);
        }
    }
    for (Modality m : {Modality::Image, Modality::Text}) {
        for (const char* n : {"W_q", "W_k", "W_v"}) {
            add_weight(ps, key("msan_", m, n), d, cfg.msan_dim, rng);
        }
        add_weight(ps, key("msan_", m, "W_o"), cfg.msan_dim, cfg.msan_dim, rng);
        add_bias(ps, key("msan_", m, "b_o"), cfg.msan_dim);
    }
}

template <typename T>
Var<T> project_regions(ParamStore<T>& ps, const Var<T>& regions) {
    return affine(regions, p(ps, regions, "manm.region.W"), p(ps, regions, "manm.region.b"));
}

template <typename T>
Var<T> context_aware_regions(ParamStore<T>& ps, const Var<T>& proj, const Var<T>& geometry) {
    const Var<T> pos =
        sigmoid(affine(geometry, p(ps, geometry, "manm.pos.W"), p(ps, geometry, "manm.pos.b")));
    return hadamard(proj, pos);
}

template <typename T>
Qkv<T> qkv(ParamStore<T>& ps, const Var<T>& x, Modality which) {
    return {matmul(x, p(ps, x, key("", which, "W_Q"))), matmul(x, p(ps, x, key("", which, "W_K"))),
            matmul(x, p(ps, x, key("", which, "W_V")))};
}

template <typename T>
GateMasks<T> adaptive_gate(ParamStore<T>& ps, const Var<T>& q, const Var<T>& k, Modality gate) {
    if (q.rows() != k.rows() || q.cols() != k.cols()) {
        throw DimensionError("adaptive_gate: Q is " + shape_str(q.value()) + " but K is " +
                             shape_str(k.value()));
    }
    auto w = [&](const char* n) { return p(ps, q, key("gate_", gate, n)); };
    const Var<T> g = hadamard(affine(q, w("W_QG"), w("b_QG")), affine(k, w("W_KG"), w("b_KG")));
    return {sigmoid(affine(g, w("W_QM"), w("b_QM"))), sigmoid(affine(g, w("W_KM"), w("b_KM")))};
}

template <typename T>
Var<T> gated_cross_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                             const GateMasks<T>& masks, const Segments& segs) {
    return attention(hadamard(masks.mq, q), hadamard(masks.mk, k), v, segs, 1);
}

template <typename T>
Var<T> msan(ParamStore<T>& ps, const ManmConfig& cfg, const Var<T>& x, Modality which,
            const Segments& segs) {
    auto w = [&](const char* n) { return p(ps, x, key("msan_", which, n)); };
    const Var<T> heads = attention(matmul(x, w("W_q")), matmul(x, w("W_k")), matmul(x, w("W_v")),
                                   segs, cfg.msan_heads);
    return affine(heads, w("W_o"), w("b_o"));
}

template <typename T>
Var<T> pool_concat(const Var<T>& x_img, const Segments& img_segs, const Var<T>& x_txt,
                   const Segments& txt_segs, ReduceMode mode) {
    return concat_cols<T>({segment_reduce(x_img, img_segs, mode), segment_reduce(x_txt, txt_segs, mode)});
}

template <typename T>
ManmTrace<T> manm_forward(ParamStore<T>& ps, const ManmConfig& cfg, const Var<T>& tokens,
                          const Var<T>& regions, const Var<T>& geometry, const Segments& text_segs,
                          const Segments& image_segs) {
    if (tokens.cols() != cfg.d_txt || regions.cols() != cfg.d_region_in ||
        geometry.cols() != cfg.geometry_dim || tokens.rows() != regions.rows() ||
        geometry.rows() != regions.rows()) {
        throw DimensionError("manm_forward: tokens " + shape_str(tokens.value()) + ", regions " +
                             shape_str(regions.value()) + ", geometry " +
                             shape_str(geometry.value()));
    }
    text_segs.check(tokens.rows(), "manm_forward");
    image_segs.check(regions.rows(), "manm_forward");

    const Var<T> f_img = context_aware_regions(ps, project_regions(ps, regions), geometry);
    const Qkv<T> t = qkv(ps, tokens, Modality::Text);
    const Qkv<T> i = qkv(ps, f_img, Modality::Image);

    ManmTrace<T> out;
    out.x_img = gated_cross_attention(t.q, t.k, i.v, adaptive_gate(ps, t.q, t.k, Modality::Image),
                                      text_segs);
    out.x_txt = gated_cross_attention(i.q, i.k, t.v, adaptive_gate(ps, i.q, i.k, Modality::Text),
                                      image_segs);
    out.msan_img = msan(ps, cfg, out.x_img, Modality::Image, text_segs);
    out.msan_txt = msan(ps, cfg, out.x_txt, Modality::Text, image_segs);
    out.attended = pool_concat(out.msan_img, text_segs, out.msan_txt, image_segs, cfg.pool);
    return out;
}

#define MMFUSE_INSTANTIATE(T)                                                                      \
    template void add_manm_params<T>(ParamStore<T>&, const ManmConfig&, const Rng&);               \
    template Var<T> project_regions<T>(ParamStore<T>&, const Var<T>&);                             \
    template Var<T> context_aware_regions<T>(ParamStore<T>&, const Var<T>&, const Var<T>&);        \
    template Qkv<T> qkv<T>(ParamStore<T>&, const Var<T>&, Modality);                               \
    template GateMasks<T> adaptive_gate<T>(ParamStore<T>&, const Var<T>&, const Var<T>&, Modality); \
    template Var<T> gated_cross_attention<T>(const Var<T>&, const Var<T>&, const Var<T>&,          \
                                             const GateMasks<T>&, const Segments&);                \
    template Var<T> msan<T>(ParamStore<T>&, const ManmConfig&, const Var<T>&, Modality,            \
                            const Segments&);                                                      \
    template Var<T> pool_concat<T>(const Var<T>&, const Segments&, const Var<T>&, const Segments&, \
                                   ReduceMode);                                                    \
    template ManmTrace<T> manm_forward<T>(ParamStore<T>&, const ManmConfig&, const Var<T>&,        \
                                          const Var<T>&, const Var<T>&, const Segments&,           \
                                          const Segments&);

MMFUSE_INSTANTIATE(float)
MMFUSE_INSTANTIATE(double)

} // namespace mmfuse
