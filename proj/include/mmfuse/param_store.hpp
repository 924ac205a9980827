#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <string>
#include <string_view>

#include "mmfuse/error.hpp"
#include "mmfuse/rng.hpp"
#include "mmfuse/tensor.hpp"

namespace mmfuse {

/// A trainable tensor with its gradient and Adam moments. Vectors are 1xN.
template <typename T>
struct Param {
    std::string name;
    MatrixT<T> value;
    MatrixT<T> grad;
    MatrixT<T> m;
    MatrixT<T> v;

    Index size() const { return value.size(); }
};

/// Named parameters in insertion order. References returned by add() and at()
/// stay valid for the lifetime of the store.
template <typename T>
class ParamStore {
public:
    ParamStore() = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

    Param<T>& add(std::string name, Index rows, Index cols) {
        if (index_.contains(name)) {
            throw ArgumentError("duplicate parameter name: " + name);
        }
        index_.emplace(name, params_.size());
        Param<T>& p = params_.emplace_back();
        p.name = std::move(name);
        p.value = MatrixT<T>::Zero(rows, cols);
        p.grad = MatrixT<T>::Zero(rows, cols);
        p.m = MatrixT<T>::Zero(rows, cols);
        p.v = MatrixT<T>::Zero(rows, cols);
        return p;
    }

    Param<T>* find(std::string_view name) {
        auto it = index_.find(std::string(name));
        return it == index_.end() ? nullptr : &params_[it->second];
    }

    const Param<T>* find(std::string_view name) const {
        auto it = index_.find(std::string(name));
        return it == index_.end() ? nullptr : &params_[it->second];
    }

    Param<T>& at(std::string_view name) {
        if (Param<T>* p = find(name)) {
            return *p;
        }
        throw ArgumentError("unknown parameter: " + std::string(name));
    }

    const Param<T>& at(std::string_view name) const {
        if (const Param<T>* p = find(name)) {
            return *p;
        }
        throw ArgumentError("unknown parameter: " + std::string(name));
    }

    bool contains(std::string_view name) const { return find(name) != nullptr; }

    std::size_t size() const { return params_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) {
            n += static_cast<std::size_t>(p.size());
        }
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) {
            p.grad.setZero();
        }
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::deque<Param<T>> params_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// Uniform(-bound, bound) fill, row-major order.
template <typename T>
void init_uniform(Param<T>& p, double bound, Rng& rng) {
    for (Index i = 0; i < p.value.size(); ++i) {
        p.value.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
}

/// Fan-in scaled init used for every weight matrix: U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
template <typename T>
void init_fan_in(Param<T>& p, Rng& rng) {
    init_uniform(p, std::sqrt(1.0 / static_cast<double>(p.value.rows())), rng);
}

} // namespace mmfuse
