#pragma once

#include <functional>
#include <vector>

#include "mmfuse/adam.hpp"
#include "mmfuse/model.hpp"

namespace mmfuse {

struct TrainConfig {
    int batch_size = 128;
    double lr = 1e-4;
    int epochs = 10;
    double dropout_p = 0.3;
    std::uint64_t seed = 0;
    double thr = 0.85; // graph threshold

    /// Throws ArgumentError on out-of-range fields.
    void validate() const;
};

/// Everything inference needs: weights, the training-split graphs, and the
/// MSL lexicon with its normalisation range.
struct TrainedModel {
    ModelConfig model;
    TrainConfig train;
    ParamStore<float> params;
    Graphs graphs;
    Lexicon lexicon;
    double msl_min = 0.0;
    double msl_max = 0.0;

    Sample prepare(const FeatureBundle& b) const;
};

struct TrainResult {
    TrainedModel model;
    std::vector<double> loss_log; // per epoch, mean training loss over samples
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Mini-batch BCE training with Adam over every parameter. Samples are
/// reshuffled each epoch; the last partial batch is kept. Rng(seed) is split
/// into "init", "shuffle" and "dropout" streams.
TrainResult train_model(std::span<const FeatureBundle> train, const Lexicon& lexicon,
                        double msl_min, double msl_max, const TrainConfig& cfg,
                        const ModelConfig& model_cfg = {}, const EpochCallback& on_epoch = {});

} // namespace mmfuse
