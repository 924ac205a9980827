#pragma once

#include <deque>
#include <functional>
#include <initializer_list>

#include "mmfuse/param_store.hpp"
#include "mmfuse/tensor.hpp"

namespace mmfuse::ad {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

    const MatrixT<T>& value() const { return tape_->value(id_); }
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    Tape<T>& tape() const { return *tape_; }
    int id() const { return id_; }
    bool needs_grad() const { return tape_->needs_grad(id_); }

private:
    Tape<T>* tape_ = nullptr;
    int id_ = -1;
};

/// Record-on-forward reverse-mode differentiation over matrix-valued nodes.
///
/// Every op evaluates eagerly and appends a node holding its value and a
/// closure that pushes the node's gradient into its inputs. Parameter nodes
/// alias the ParamStore entry, so backward() accumulates directly into
/// Param::grad. Constants never receive gradients.
///
/// A tape is single-use: backward() may run once, after which the tape must be
/// discarded and the forward pass re-recorded.
template <typename T>
class Tape {
public:
    using Mat = MatrixT<T>;
    using BackwardFn = std::function<void(Tape&, int)>;

    /// With grad_enabled false, parameters enter as read-only values and no
    /// backward closures are kept (inference).
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Mat value);
    Var<T> param(Param<T>& p);

    /// Appends an op node. The node needs a gradient iff any input does; when
    /// none does, `fn` is dropped.
    Var<T> record(Mat value, std::initializer_list<Var<T>> inputs, BackwardFn fn);
    Var<T> record(Mat value, bool needs_grad, BackwardFn fn);

    const Mat& value(int id) const;
    bool needs_grad(int id) const { return nodes_[id].needs_grad; }

    /// Gradient slot of a node, zero-allocated on first access.
    Mat& grad(int id);

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
    /// `loss` must be 1x1.
    void backward(const Var<T>& loss);

    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }
    bool grad_enabled() const { return grad_enabled_; }

private:
    struct Node {
        Mat value;
        const Mat* external_value = nullptr;
        Mat* external_grad = nullptr;
        Mat grad;
        bool needs_grad = false;
        bool has_grad = false;
        BackwardFn backward;
    };

    std::deque<Node> nodes_;
    bool grad_enabled_ = true;
    bool consumed_ = false;
};

extern template class Tape<float>;
extern template class Tape<double>;

} // namespace mmfuse::ad
