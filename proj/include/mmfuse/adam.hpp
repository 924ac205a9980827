#pragma once

#include <cmath>
#include <cstdint>

#include "mmfuse/param_store.hpp"

namespace mmfuse {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update over every parameter, then zeroes the grads.
/// `step` is the 1-based update count.
template <typename T>
void adam_step(ParamStore<T>& params, const AdamConfig& cfg, std::int64_t step) {
    if (step < 1) {
        throw ArgumentError("adam_step: step must be >= 1, got " + std::to_string(step));
    }
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
    const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
    const T lr = static_cast<T>(cfg.lr);
    const T eps = static_cast<T>(cfg.eps);
    for (auto& p : params) {
        T* __restrict value = p.value.data();
        T* __restrict grad = p.grad.data();
        T* __restrict m = p.m.data();
        T* __restrict v = p.v.data();
        for (Index i = 0, n = p.size(); i < n; ++i) {
            const T g = grad[i];
            m[i] = b1 * m[i] + (T(1) - b1) * g;
            v[i] = b2 * v[i] + (T(1) - b2) * g * g;
            value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            grad[i] = T(0);
        }
    }
}

} // namespace mmfuse
