#pragma once

#include <span>
#include <string>
#include <vector>

#include "mmfuse/cflm.hpp"
#include "mmfuse/features.hpp"
#include "mmfuse/gfrm.hpp"
#include "mmfuse/head.hpp"
#include "mmfuse/lexicon.hpp"
#include "mmfuse/manm.hpp"

namespace mmfuse {

struct ModelConfig {
    ManmConfig manm;
    double graph_thr = 0.85;
};

/// A bundle reduced to what the model consumes: valid sequence rows only,
/// the assembled content vector and the graph neighbour means.
struct Sample {
    std::string id;
    int label = 0;
    Matrix tokens;   // valid_tokens x 768
    Matrix regions;  // valid_regions x 1024
    Matrix geometry; // valid_regions x 6
    Vector pair_txt;
    Vector pair_img;
    Vector content;  // kContentDim
    Vector nbr_txt;  // filled by attach_neighbors
    Vector nbr_img;
};

Sample make_sample(const FeatureBundle& b, const Lexicon& lexicon, double msl_min, double msl_max);

struct Graphs {
    SimilarityGraph txt;
    SimilarityGraph img;
};

/// Graphs over the pair vectors of `train`.
Graphs build_graphs(std::span<const Sample> train, double thr);

/// Neighbour means for one sample (inductive query; a stored node resolves to itself).
void attach_neighbors(Sample& s, const Graphs& g);

/// Stacked model input. Sample s occupies rows [offset, offset + length) of
/// the sequence matrices, where length is max(valid tokens, valid regions),
/// or seq_len when padding to the full schema length.
template <typename T>
struct Batch {
    ad::Segments text_segs;  // valid = token counts
    ad::Segments image_segs; // valid = region counts
    MatrixT<T> tokens, regions, geometry;
    MatrixT<T> pair_txt, pair_img, nbr_txt, nbr_img, content;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
};

template <typename T>
Batch<T> make_batch(std::span<const Sample* const> samples, Index pad_to = 0);

template <typename T>
struct ModelTrace {
    ad::Var<T> attended; // B x 512
    ad::Var<T> relation; // B x 512
    ad::Var<T> content;  // B x 256
    ad::Var<T> joint;    // B x 1280
    ad::Var<T> prob;     // B x 1
};

/// Registers and initialises every parameter. Initialisation draws from
/// per-parameter streams of Rng(seed).
template <typename T>
void add_model_params(ParamStore<T>& ps, const ModelConfig& cfg, std::uint64_t seed);

/// Full forward pass recorded on `tape`. Dropout is active only when `rng` is
/// non-null and dropout_p > 0.
template <typename T>
ModelTrace<T> model_forward(ad::Tape<T>& tape, ParamStore<T>& ps, const ModelConfig& cfg,
                            const Batch<T>& batch, double dropout_p = 0.0, Rng* rng = nullptr);

/// Inference probability of a single sample.
double predict_one(ParamStore<float>& ps, const ModelConfig& cfg, const Sample& s);

/// Copy of a parameter store with a different scalar type.
template <typename To, typename From>
ParamStore<To> cast_params(const ParamStore<From>& src) {
    ParamStore<To> out;
    for (const auto& p : src) {
        Param<To>& q = out.add(p.name, p.value.rows(), p.value.cols());
        q.value = p.value.template cast<To>();
    }
    return out;
}

} // namespace mmfuse
