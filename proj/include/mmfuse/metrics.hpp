#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace mmfuse {

struct ClassMetrics {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Binary classification report. Class c's counts treat c as the positive
/// label. A ratio whose denominator is zero is reported as 0 and named in
/// `undefined`, e.g. "precision[1]".
struct MetricsReport {
    long n = 0;
    double accuracy = 0.0;
    std::array<ClassMetrics, 2> per_class;
    double macro_f1 = 0.0;
    std::vector<std::string> undefined;
};

/// Throws ArgumentError on length mismatch, an empty input, or a non-binary value.
MetricsReport compute_metrics(std::span<const int> labels, std::span<const int> predictions);

/// Fixed-width text table.
std::string format_metrics_table(const MetricsReport& r);

} // namespace mmfuse
