#include "mmfuse/cflm.hpp"

#include "mmfuse/error.hpp"

namespace mmfuse {

using namespace ad;

Vector assemble_content(const Vector& tox, const Vector& nsfw, double msl, const Vector& cap) {
    using namespace schema;
    if (tox.size() != kToxDim || nsfw.size() != kNsfwDim || cap.size() != kCapDim) {
        throw DimensionError("assemble_content: tox " + std::to_string(tox.size()) + ", nsfw " +
                             std::to_string(nsfw.size()) + ", cap " + std::to_string(cap.size()));
    }
    Vector f(kContentDim);
    f << tox, nsfw, static_cast<float>(msl), cap;
    return f;
}

template <typename T>
void add_cflm_params(ParamStore<T>& ps, const Rng& rng, Index out_dim) {
    Param<T>& w = ps.add("cflm.W_f", kContentDim, out_dim);
    Rng r = rng.split("cflm.W_f");
    init_fan_in(w, r);
    ps.add("cflm.b_f", 1, out_dim);
}

template <typename T>
Var<T> cflm_forward(ParamStore<T>& ps, const Var<T>& content) {
    if (content.cols() != kContentDim) {
        throw DimensionError("cflm_forward: content is " + shape_str(content.value()) +
                             ", expected width " + std::to_string(kContentDim));
    }
    Tape<T>& t = content.tape();
    return relu(affine(content, t.param(ps.at("cflm.W_f")), t.param(ps.at("cflm.b_f"))));
}

template void add_cflm_params<float>(ParamStore<float>&, const Rng&, Index);
template void add_cflm_params<double>(ParamStore<double>&, const Rng&, Index);
template Var<float> cflm_forward<float>(ParamStore<float>&, const Var<float>&);
template Var<double> cflm_forward<double>(ParamStore<double>&, const Var<double>&);

} // namespace mmfuse
