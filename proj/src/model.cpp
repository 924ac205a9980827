#include "mmfuse/model.hpp"

#include <algorithm>

#include "mmfuse/error.hpp"
#include "mmfuse/msl.hpp"

namespace mmfuse {

using namespace ad;

Sample make_sample(const FeatureBundle& b, const Lexicon& lexicon, double msl_min, double msl_max) {
    Sample s;
    s.id = b.id;
    s.label = b.label;
    s.tokens = b.tokens.topRows(b.valid_tokens);
    s.regions = b.regions.topRows(b.valid_regions);
    s.geometry = b.geometry.topRows(b.valid_regions);
    s.pair_txt = b.pair_txt;
    s.pair_img = b.pair_img;
    const double msl = msl_normalize(msl_score_raw(b.raw_text, lexicon), msl_min, msl_max);
    s.content = assemble_content(b.tox, b.nsfw, msl, b.cap);
    return s;
}

Graphs build_graphs(std::span<const Sample> train, double thr) {
    const Index n = static_cast<Index>(train.size());
    Matrix txt(n, schema::kPairDim), img(n, schema::kPairDim);
    for (Index i = 0; i < n; ++i) {
        txt.row(i) = train[static_cast<std::size_t>(i)].pair_txt;
        img.row(i) = train[static_cast<std::size_t>(i)].pair_img;
    }
    return {build_graph(txt, thr, Modality::Text), build_graph(img, thr, Modality::Image)};
}

void attach_neighbors(Sample& s, const Graphs& g) {
    s.nbr_txt = g.txt.query_neighbor_mean(s.pair_txt);
    s.nbr_img = g.img.query_neighbor_mean(s.pair_img);
}

template <typename T>
Batch<T> make_batch(std::span<const Sample* const> samples, Index pad_to) {
    using namespace schema;
    if (samples.empty()) {
        throw ArgumentError("make_batch: empty batch");
    }
    Batch<T> b;
    const auto n = samples.size();
    std::vector<Index> offset, length, vt, vr;
    Index rows = 0;
    for (const Sample* s : samples) {
        const Index t = s->tokens.rows();
        const Index r = s->regions.rows();
        if (t < 1 || r < 1 || s->geometry.rows() != r || s->nbr_txt.size() != kPairDim ||
            s->nbr_img.size() != kPairDim) {
            throw ArgumentError("make_batch: sample '" + s->id +
                                "' has no valid rows or no neighbour means");
        }
        Index len = std::max(t, r);
        if (pad_to > 0) {
            if (pad_to < len) throw DimensionError("make_batch: pad_to shorter than a sample");
            len = pad_to;
        }
        offset.push_back(rows);
        length.push_back(len);
        vt.push_back(t);
        vr.push_back(r);
        rows += len;
    }
    b.text_segs = {offset, length, vt};
    b.image_segs = {offset, length, vr};
    b.tokens = MatrixT<T>::Zero(rows, kTokenDim);
    b.regions = MatrixT<T>::Zero(rows, kRegionDim);
    b.geometry = MatrixT<T>::Zero(rows, kGeometryDim);
    const auto B = static_cast<Index>(n);
    b.pair_txt.resize(B, kPairDim);
    b.pair_img.resize(B, kPairDim);
    b.nbr_txt.resize(B, kPairDim);
    b.nbr_img.resize(B, kPairDim);
    b.content.resize(B, kContentDim);
    for (std::size_t i = 0; i < n; ++i) {
        const Sample& s = *samples[i];
        const Index o = offset[i];
        const auto r = static_cast<Index>(i);
        b.tokens.middleRows(o, vt[i]) = s.tokens.cast<T>();
        b.regions.middleRows(o, vr[i]) = s.regions.cast<T>();
        b.geometry.middleRows(o, vr[i]) = s.geometry.cast<T>();
        b.pair_txt.row(r) = s.pair_txt.cast<T>();
        b.pair_img.row(r) = s.pair_img.cast<T>();
        b.nbr_txt.row(r) = s.nbr_txt.cast<T>();
        b.nbr_img.row(r) = s.nbr_img.cast<T>();
        b.content.row(r) = s.content.cast<T>();
        b.labels.push_back(s.label);
    }
    return b;
}

template <typename T>
void add_model_params(ParamStore<T>& ps, const ModelConfig& cfg, std::uint64_t seed) {
    const Rng root(seed);
    add_manm_params(ps, cfg.manm, root);
    add_gfrm_params(ps, root, schema::kPairDim, 256);
    add_cflm_params(ps, root, 256);
    add_head_params(ps, root);
}

template <typename T>
ModelTrace<T> model_forward(Tape<T>& tape, ParamStore<T>& ps, const ModelConfig& cfg,
                            const Batch<T>& batch, double dropout_p, Rng* rng) {
    ModelTrace<T> out;
    out.attended = manm_forward(ps, cfg.manm, tape.constant(batch.tokens),
                                tape.constant(batch.regions), tape.constant(batch.geometry),
                                batch.text_segs, batch.image_segs)
                       .attended;
    out.relation = gfrm_forward(ps, tape.constant(batch.nbr_img), tape.constant(batch.pair_img),
                                tape.constant(batch.nbr_txt), tape.constant(batch.pair_txt));
    out.content = cflm_forward(ps, tape.constant(batch.content));
    out.joint = fuse_joint(out.attended, out.relation, out.content);
    out.prob = head_forward(ps, out.joint, dropout_p, rng);
    return out;
}

double predict_one(ParamStore<float>& ps, const ModelConfig& cfg, const Sample& s) {
    const Sample* one[] = {&s};
    const Batch<float> b = make_batch<float>(one);
    Tape<float> tape(false);
    return model_forward(tape, ps, cfg, b).prob.value()(0, 0);
}

#define MMFUSE_INSTANTIATE(T)                                                                \
    template Batch<T> make_batch<T>(std::span<const Sample* const>, Index);                  \
    template void add_model_params<T>(ParamStore<T>&, const ModelConfig&, std::uint64_t);    \
    template ModelTrace<T> model_forward<T>(Tape<T>&, ParamStore<T>&, const ModelConfig&,    \
                                            const Batch<T>&, double, Rng*);

MMFUSE_INSTANTIATE(float)
MMFUSE_INSTANTIATE(double)

} // namespace mmfuse
