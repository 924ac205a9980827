#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mmfuse/param_store.hpp"
#include "mmfuse/rng.hpp"

namespace mmfuse {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t samples = 0;
    std::string worst_param;
    Index worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::vector<std::string> warnings;
};

/// Compares the gradients already stored in `params` against central
/// differences of `f` on `n_samples` coordinates.
///
/// Coordinates are chosen round-robin over parameters (so every tensor is
/// visited) with a random entry inside each. Relative error is
/// |a - n| / max(|a|, |n|, denom_floor); the floor keeps coordinates whose
/// true gradient is zero from dividing noise by noise.
///
/// `f` must be deterministic. Parameter values are restored afterwards.
template <typename T>
GradCheckResult finite_diff_check(const std::function<double(ParamStore<T>&)>& f,
                                  ParamStore<T>& params, std::size_t n_samples, double h,
                                  Rng& rng, double denom_floor = 1e-7) {
    GradCheckResult res;
    if (n_samples == 0) {
        res.warnings.emplace_back("finite_diff_check: n_samples = 0, nothing checked");
        return res;
    }
    if (!(h > 0.0)) {
        throw ArgumentError("finite_diff_check: h must be positive");
    }
    std::vector<Param<T>*> plist;
    for (auto& p : params) {
        if (p.size() > 0) {
            plist.push_back(&p);
        }
    }
    if (plist.empty()) {
        res.warnings.emplace_back("finite_diff_check: no parameters");
        return res;
    }
    for (std::size_t i = 0; i < n_samples; ++i) {
        Param<T>& p = *plist[i % plist.size()];
        const Index idx = static_cast<Index>(rng.below(static_cast<std::uint64_t>(p.size())));
        T& slot = p.value.data()[idx];
        const T saved = slot;
        slot = static_cast<T>(saved + h);
        const double fp = f(params);
        slot = static_cast<T>(saved - h);
        const double fm = f(params);
        slot = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = static_cast<double>(p.grad.data()[idx]);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), denom_floor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++res.samples;
        if (rel > res.max_rel_error || res.worst_index < 0) {
            res.max_rel_error = std::max(rel, res.max_rel_error);
            if (rel >= res.max_rel_error) {
                res.worst_param = p.name;
                res.worst_index = idx;
                res.worst_analytic = analytic;
                res.worst_numeric = numeric;
            }
        }
    }
    return res;
}

} // namespace mmfuse
