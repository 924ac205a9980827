#include "mmfuse/tape.hpp"

namespace mmfuse::ad {

template <typename T>
Var<T> Tape<T>::constant(Mat value) {
    if (consumed_) {
        throw TapeError("tape already consumed by backward(); record a new forward pass");
    }
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::param(Param<T>& p) {
    if (consumed_) {
        throw TapeError("tape already consumed by backward(); record a new forward pass");
    }
    Node& n = nodes_.emplace_back();
    n.external_value = &p.value;
    if (grad_enabled_) {
        n.external_grad = &p.grad;
        n.needs_grad = true;
        n.has_grad = true;
    }
    return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::record(Mat value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    bool any = false;
    for (const auto& in : inputs) {
        if (&in.tape() != this) {
            throw TapeError("op mixes values from different tapes");
        }
        any = any || needs_grad(in.id());
    }
    return record(std::move(value), any, std::move(fn));
}

template <typename T>
Var<T> Tape<T>::record(Mat value, bool needs_grad, BackwardFn fn) {
    if (consumed_) {
        throw TapeError("tape already consumed by backward(); record a new forward pass");
    }
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad) {
        n.backward = std::move(fn);
    }
    return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
const typename Tape<T>::Mat& Tape<T>::value(int id) const {
    const Node& n = nodes_[id];
    return n.external_value ? *n.external_value : n.value;
}

template <typename T>
typename Tape<T>::Mat& Tape<T>::grad(int id) {
    Node& n = nodes_[id];
    if (n.external_grad) {
        return *n.external_grad;
    }
    if (!n.has_grad) {
        n.grad = Mat::Zero(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return n.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
    if (consumed_) {
        throw TapeError("backward() called twice on the same forward pass");
    }
    if (&loss.tape() != this) {
        throw TapeError("loss belongs to a different tape");
    }
    const Mat& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw DimensionError("backward: loss must be 1x1, got " + shape_str(lv));
    }
    consumed_ = true;
    if (!nodes_[loss.id()].needs_grad) {
        return;
    }
    grad(loss.id())(0, 0) += T(1);
    for (int i = loss.id(); i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.backward && n.has_grad) {
            n.backward(*this, i);
        }
        // Intermediate gradients are dead once propagated.
        if (!n.external_grad && n.has_grad && i != loss.id()) {
            n.grad.resize(0, 0);
            n.has_grad = false;
        }
    }
}

template class Tape<float>;
template class Tape<double>;

} // namespace mmfuse::ad
