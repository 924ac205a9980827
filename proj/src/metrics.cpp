#include "mmfuse/metrics.hpp"

#include <cstdio>

#include "mmfuse/error.hpp"

namespace mmfuse {

namespace {

double ratio(long num, long den, const std::string& name, std::vector<std::string>& undefined) {
    if (den == 0) {
        undefined.push_back(name);
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

} // namespace

MetricsReport compute_metrics(std::span<const int> labels, std::span<const int> predictions) {
    if (labels.size() != predictions.size()) {
        throw ArgumentError("metrics: " + std::to_string(labels.size()) + " labels but " +
                            std::to_string(predictions.size()) + " predictions");
    }
    if (labels.empty()) {
        throw ArgumentError("metrics: no samples");
    }
    MetricsReport r;
    r.n = static_cast<long>(labels.size());
    long correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        const int p = predictions[i];
        if ((y != 0 && y != 1) || (p != 0 && p != 1)) {
            throw ArgumentError("metrics: labels and predictions must be 0 or 1");
        }
        correct += y == p;
        for (int c = 0; c < 2; ++c) {
            ClassMetrics& m = r.per_class[static_cast<std::size_t>(c)];
            if (p == c && y == c) ++m.tp;
            else if (p == c) ++m.fp;
            else if (y == c) ++m.fn;
            else ++m.tn;
        }
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
    for (int c = 0; c < 2; ++c) {
        ClassMetrics& m = r.per_class[static_cast<std::size_t>(c)];
        const std::string tag = "[" + std::to_string(c) + "]";
        m.precision = ratio(m.tp, m.tp + m.fp, "precision" + tag, r.undefined);
        m.recall = ratio(m.tp, m.tp + m.fn, "recall" + tag, r.undefined);
        if (m.precision + m.recall == 0.0) {
            r.undefined.push_back("f1" + tag);
            m.f1 = 0.0;
        } else {
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        }
    }
    r.macro_f1 = (r.per_class[0].f1 + r.per_class[1].f1) / 2.0;
    return r;
}

std::string format_metrics_table(const MetricsReport& r) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %9s %9s %9s %6s %6s %6s %6s\n", "class", "precision",
                  "recall", "f1", "tp", "fp", "fn", "tn");
    out += line;
    for (int c = 0; c < 2; ++c) {
        const ClassMetrics& m = r.per_class[static_cast<std::size_t>(c)];
        std::snprintf(line, sizeof line, "%-8d %9.4f %9.4f %9.4f %6ld %6ld %6ld %6ld\n", c,
                      m.precision, m.recall, m.f1, m.tp, m.fp, m.fn, m.tn);
        out += line;
    }
    std::snprintf(line, sizeof line, "\n%-10s %8ld\n%-10s %8.4f\n%-10s %8.4f\n", "samples", r.n,
                  "accuracy", r.accuracy, "macro-F1", r.macro_f1);
    out += line;
    if (!r.undefined.empty()) {
        out += "undefined (reported as 0):";
        for (const auto& u : r.undefined) out += " " + u;
        out += "\n";
    }
    return out;
}

} // namespace mmfuse
