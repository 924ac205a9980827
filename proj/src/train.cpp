#include "mmfuse/train.hpp"

#include <cmath>

#include "mmfuse/error.hpp"

namespace mmfuse {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ArgumentError("lr must be finite and >= 0");
    if (epochs < 0) throw ArgumentError("epochs must be >= 0");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ArgumentError("dropout_p must lie in [0, 1)");
    if (!std::isfinite(thr)) throw ArgumentError("thr must be finite");
}

Sample TrainedModel::prepare(const FeatureBundle& b) const {
    Sample s = make_sample(b, lexicon, msl_min, msl_max);
    attach_neighbors(s, graphs);
    return s;
}

TrainResult train_model(std::span<const FeatureBundle> train, const Lexicon& lexicon,
                        double msl_min, double msl_max, const TrainConfig& cfg,
                        const ModelConfig& model_cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (train.empty()) {
        throw ArgumentError("training split is empty");
    }
    TrainResult out;
    TrainedModel& m = out.model;
    m.model = model_cfg;
    m.model.graph_thr = cfg.thr;
    m.train = cfg;
    m.lexicon = lexicon;
    m.msl_min = msl_min;
    m.msl_max = msl_max;

    std::vector<Sample> samples;
    samples.reserve(train.size());
    for (const auto& b : train) samples.push_back(make_sample(b, lexicon, msl_min, msl_max));
    m.graphs = build_graphs(samples, cfg.thr);
    for (auto& s : samples) attach_neighbors(s, m.graphs);

    const Rng root(cfg.seed);
    add_model_params(m.params, m.model, root.split("init").seed());
    Rng shuffle_rng = root.split("shuffle");
    Rng dropout_rng = root.split("dropout");
    const AdamConfig adam{cfg.lr};

    std::vector<std::size_t> order(samples.size());
    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const Sample*> members;
            for (std::size_t i = start; i < end; ++i) members.push_back(&samples[order[i]]);
            const Batch<float> batch = make_batch<float>(members);
            ad::Tape<float> tape;
            const auto trace = model_forward(tape, m.params, m.model, batch, cfg.dropout_p, &dropout_rng);
            const auto loss = ad::bce_mean(trace.prob, std::span<const int>(batch.labels));
            total += static_cast<double>(loss.value()(0, 0)) * static_cast<double>(members.size());
            tape.backward(loss);
            adam_step(m.params, adam, ++step);
        }
        out.loss_log.push_back(total / static_cast<double>(samples.size()));
        if (on_epoch) on_epoch(epoch + 1, out.loss_log.back());
    }
    return out;
}

} // namespace mmfuse
