#pragma once

#include <optional>
#include <string>

#include "mmfuse/metrics.hpp"
#include "mmfuse/tta.hpp"

namespace mmfuse {

struct EvalResult {
    MetricsReport metrics;
    std::vector<Prediction> predictions;
    bool tta = false;
    long tta_skipped = 0;
};

/// Per-sample inference over `test` at threshold 0.5. With `tta`, predictions
/// come from tta_predict using stream i of Rng(seed).split("tta") for sample i.
EvalResult evaluate(TrainedModel& model, std::span<const FeatureBundle> test,
                    const TtaConfig* tta = nullptr, std::uint64_t seed = 0);

/// Metrics and predictions as a JSON document (stable key order). Per-copy
/// similarities are included when `verbose`.
std::string eval_json(const EvalResult& r, const std::string& config_json, bool verbose);

} // namespace mmfuse
