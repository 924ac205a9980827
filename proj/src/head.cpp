#include "mmfuse/head.hpp"

#include <string>

#include "mmfuse/error.hpp"

namespace mmfuse {

using namespace ad;

template <typename T>
Var<T> fuse_joint(const Var<T>& attended, const Var<T>& relation, const Var<T>& content) {
    if (attended.cols() != 512 || relation.cols() != 512 || content.cols() != 256) {
        throw DimensionError("fuse_joint: widths " + std::to_string(attended.cols()) + " + " +
                             std::to_string(relation.cols()) + " + " +
                             std::to_string(content.cols()) + ", expected 512 + 512 + 256");
    }
    return concat_cols<T>({attended, relation, content});
}

template <typename T>
void add_head_params(ParamStore<T>& ps, const Rng& rng) {
    Index in = kJointDim;
    auto layer = [&](const std::string& name, Index out) {
        Param<T>& w = ps.add(name + ".W", in, out);
        Rng r = rng.split(name + ".W");
        init_fan_in(w, r);
        ps.add(name + ".b", 1, out);
        in = out;
    };
    for (std::size_t i = 0; i < kHeadWidths.size(); ++i) {
        layer("head.fc" + std::to_string(i + 1), kHeadWidths[i]);
    }
    layer("head.out", 1);
}

template <typename T>
Var<T> head_forward(ParamStore<T>& ps, const Var<T>& joint, double dropout_p, Rng* rng) {
    if (joint.cols() != kJointDim) {
        throw DimensionError("head_forward: joint is " + shape_str(joint.value()) +
                             ", expected width " + std::to_string(kJointDim));
    }
    Tape<T>& t = joint.tape();
    Var<T> h = joint;
    for (std::size_t i = 0; i < kHeadWidths.size(); ++i) {
        const std::string name = "head.fc" + std::to_string(i + 1);
        h = relu(affine(h, t.param(ps.at(name + ".W")), t.param(ps.at(name + ".b"))));
        if (rng && dropout_p > 0.0) h = dropout(h, dropout_p, *rng);
    }
    return sigmoid(affine(h, t.param(ps.at("head.out.W")), t.param(ps.at("head.out.b"))));
}

#define MMFUSE_INSTANTIATE(T)                                                           \
    template Var<T> fuse_joint<T>(const Var<T>&, const Var<T>&, const Var<T>&);         \
    template void add_head_params<T>(ParamStore<T>&, const Rng&);                       \
    template Var<T> head_forward<T>(ParamStore<T>&, const Var<T>&, double, Rng*);

MMFUSE_INSTANTIATE(float)
MMFUSE_INSTANTIATE(double)

} // namespace mmfuse
