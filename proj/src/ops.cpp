#include "mmfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace mmfuse::ad {

namespace {

template <typename T>
void require_same_shape(const MatrixT<T>& a, const MatrixT<T>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                             shape_str(b));
    }
}

template <typename T>
void require_bias_row(const MatrixT<T>& x, const MatrixT<T>& row, const char* op) {
    if (row.rows() != 1 || row.cols() != x.cols()) {
        throw DimensionError(std::string(op) + ": bias " + shape_str(row) +
                             " does not broadcast over " + shape_str(x));
    }
}

template <typename T>
T logistic(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

} // namespace

void Segments::check(Index rows, const char* op) const {
    if (length.size() != offset.size() || valid.size() != offset.size()) {
        throw ArgumentError(std::string(op) + ": inconsistent segment arrays");
    }
    Index expect = 0;
    for (std::size_t s = 0; s < offset.size(); ++s) {
        if (offset[s] != expect) {
            throw ArgumentError(std::string(op) + ": segments must be contiguous");
        }
        if (valid[s] < 1 || valid[s] > length[s]) {
            throw ArgumentError(std::string(op) + ": segment " + std::to_string(s) + " has " +
                                std::to_string(valid[s]) + " valid rows of " +
                                std::to_string(length[s]));
        }
        expect += length[s];
    }
    if (expect != rows) {
        throw DimensionError(std::string(op) + ": segments cover " + std::to_string(expect) +
                             " rows, matrix has " + std::to_string(rows));
    }
}

template <typename T>
MatrixT<T> softmax_rows_value(const MatrixT<T>& m) {
    MatrixT<T> out(m.rows(), m.cols());
    for (Index r = 0; r < m.rows(); ++r) {
        const T mx = m.row(r).maxCoeff();
        out.row(r) = (m.row(r).array() - mx).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

template <typename T>
MatrixT<T> sigmoid_value(const MatrixT<T>& m) {
    const T lo = std::numeric_limits<T>::min();
    const T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
    return m.unaryExpr([lo, hi](T x) { return std::clamp(logistic(x), lo, hi); });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.cols() != bv.rows()) {
        throw DimensionError("matmul: " + shape_str(av) + " * " + shape_str(bv));
    }
    MatrixT<T> out;
    out.noalias() = av * bv;
    const int ia = a.id();
    const int ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(ia)) {
            t.grad(ia).noalias() += g * t.value(ib).transpose();
        }
        if (t.needs_grad(ib)) {
            t.grad(ib).noalias() += t.value(ia).transpose() * g;
        }
    });
}

template <typename T>
Var<T> affine(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    if (xv.cols() != wv.rows()) {
        throw DimensionError("affine: " + shape_str(xv) + " * " + shape_str(wv));
    }
    MatrixT<T> out;
    out.noalias() = xv * wv;
    require_bias_row(out, b.value(), "affine");
    out.rowwise() += b.value().row(0);
    const int ix = x.id();
    const int iw = w.id();
    const int ib = b.id();
    return x.tape().record(std::move(out), {x, w, b}, [ix, iw, ib](Tape<T>& t, int self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(ix)) {
            t.grad(ix).noalias() += g * t.value(iw).transpose();
        }
        if (t.needs_grad(iw)) {
            t.grad(iw).noalias() += t.value(ix).transpose() * g;
        }
        if (t.needs_grad(ib)) {
            t.grad(ib).row(0) += g.colwise().sum();
        }
    });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.value(), b.value(), "add");
    MatrixT<T> out = a.value() + b.value();
    const int ia = a.id();
    const int ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(ia)) {
            t.grad(ia) += g;
        }
        if (t.needs_grad(ib)) {
            t.grad(ib) += g;
        }
    });
}

template <typename T>
Var<T> add_row(const Var<T>& x, const Var<T>& row) {
    require_bias_row(x.value(), row.value(), "add_row");
    MatrixT<T> out = x.value();
    out.rowwise() += row.value().row(0);
    const int ix = x.id();
    const int ir = row.id();
    return x.tape().record(std::move(out), {x, row}, [ix, ir](Tape<T>& t, int self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(ix)) {
            t.grad(ix) += g;
        }
        if (t.needs_grad(ir)) {
            t.grad(ir).row(0) += g.colwise().sum();
        }
    });
}

template <typename T>
Var<T> scale(const Var<T>& x, T alpha) {
    MatrixT<T> out = x.value() * alpha;
    const int ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix, alpha](Tape<T>& t, int self) {
        t.grad(ix) += t.grad(self) * alpha;
    });
}

template <typename T>
Var<T> hadamard(const Var<T>& a, const Var<T>& b) {
    require_same_shape(a.value(), b.value(), "hadamard");
    MatrixT<T> out = a.value().cwiseProduct(b.value());
    const int ia = a.id();
    const int ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, int self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(ia)) {
            t.grad(ia) += g.cwiseProduct(t.value(ib));
        }
        if (t.needs_grad(ib)) {
            t.grad(ib) += g.cwiseProduct(t.value(ia));
        }
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
    MatrixT<T> out = sigmoid_value<T>(x.value());
    const int ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix](Tape<T>& t, int self) {
        const auto& y = t.value(self).array();
        t.grad(ix).array() += t.grad(self).array() * y * (T(1) - y);
    });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
    MatrixT<T> out = x.value().cwiseMax(T(0));
    const int ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix](Tape<T>& t, int self) {
        const auto& xv = t.value(ix).array();
        t.grad(ix).array() += (xv > T(0)).select(t.grad(self).array(), T(0));
    });
}

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
    MatrixT<T> out = softmax_rows_value<T>(x.value());
    const int ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix](Tape<T>& t, int self) {
        const auto& y = t.value(self);
        const auto& g = t.grad(self);
        const auto dots = (g.cwiseProduct(y)).rowwise().sum();
        t.grad(ix).array() += y.array() * (g.colwise() - dots).array();
    });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
    MatrixT<T> out(1, 1);
    out(0, 0) = x.value().sum();
    const int ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix](Tape<T>& t, int self) {
        t.grad(ix).array() += t.grad(self)(0, 0);
    });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
    if (parts.empty()) {
        throw ArgumentError("concat_cols: no inputs");
    }
    const Index rows = parts[0].rows();
    Index cols = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        if (p.rows() != rows) {
            throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].value()) +
                                 " vs " + shape_str(p.value()));
        }
        cols += p.cols();
        any_grad = any_grad || p.needs_grad();
    }
    MatrixT<T> out(rows, cols);
    std::vector<int> ids;
    std::vector<Index> starts;
    Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        ids.push_back(p.id());
        starts.push_back(c);
        c += p.cols();
    }
    return parts[0].tape().record(
        std::move(out), any_grad, [ids, starts](Tape<T>& t, int self) {
            const auto& g = t.grad(self);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (t.needs_grad(ids[i])) {
                    auto& gi = t.grad(ids[i]);
                    gi += g.middleCols(starts[i], gi.cols());
                }
            }
        });
}

namespace {

// Reduces the listed rows of x column-wise. For Max, `argmax` receives the
// winning row per column (first one on ties).
template <typename T>
void reduce_rows_kernel(const MatrixT<T>& x, const std::vector<Index>& rows, ReduceMode mode,
                        Eigen::Ref<MatrixT<T>> out_row, std::vector<Index>* argmax) {
    const Index c = x.cols();
    if (mode == ReduceMode::Mean) {
        out_row.setZero();
        for (Index r : rows) {
            out_row += x.row(r);
        }
        out_row /= static_cast<T>(rows.size());
        return;
    }
    argmax->assign(static_cast<std::size_t>(c), rows.front());
    out_row = x.row(rows.front());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const Index r = rows[i];
        for (Index j = 0; j < c; ++j) {
            if (x(r, j) > out_row(0, j)) {
                out_row(0, j) = x(r, j);
                (*argmax)[static_cast<std::size_t>(j)] = r;
            }
        }
    }
}

} // namespace

template <typename T>
Var<T> reduce_rows(const Var<T>& x, ReduceMode mode, const std::vector<bool>* mask) {
    const auto& xv = x.value();
    std::vector<Index> rows;
    if (mask) {
        if (static_cast<Index>(mask->size()) != xv.rows()) {
            throw DimensionError("reduce_rows: mask length " + std::to_string(mask->size()) +
                                 " for " + shape_str(xv));
        }
        for (Index r = 0; r < xv.rows(); ++r) {
            if ((*mask)[static_cast<std::size_t>(r)]) {
                rows.push_back(r);
            }
        }
    } else {
        for (Index r = 0; r < xv.rows(); ++r) {
            rows.push_back(r);
        }
    }
    if (rows.empty()) {
        throw ArgumentError("reduce_rows: no unmasked rows");
    }
    MatrixT<T> out(1, xv.cols());
    auto argmax = std::make_shared<std::vector<Index>>();
    reduce_rows_kernel<T>(xv, rows, mode, out, argmax.get());
    const int ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix, mode, rows, argmax](Tape<T>& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(ix);
        if (mode == ReduceMode::Mean) {
            const T inv = T(1) / static_cast<T>(rows.size());
            for (Index r : rows) {
                gx.row(r) += g.row(0) * inv;
            }
        } else {
            for (Index j = 0; j < g.cols(); ++j) {
                gx((*argmax)[static_cast<std::size_t>(j)], j) += g(0, j);
            }
        }
    });
}

template <typename T>
Var<T> segment_reduce(const Var<T>& x, const Segments& segs, ReduceMode mode) {
    const auto& xv = x.value();
    segs.check(xv.rows(), "segment_reduce");
    const std::size_t n = segs.count();
    MatrixT<T> out(static_cast<Index>(n), xv.cols());
    auto argmax = std::make_shared<std::vector<std::vector<Index>>>(n);
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<Index> rows;
        for (Index r = 0; r < segs.valid[s]; ++r) {
            rows.push_back(segs.offset[s] + r);
        }
        auto out_row = out.row(static_cast<Index>(s));
        reduce_rows_kernel<T>(xv, rows, mode, out_row, &(*argmax)[s]);
    }
    const int ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix, mode, segs, argmax](Tape<T>& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(ix);
        for (std::size_t s = 0; s < segs.count(); ++s) {
            const Index gs = static_cast<Index>(s);
            if (mode == ReduceMode::Mean) {
                const T inv = T(1) / static_cast<T>(segs.valid[s]);
                for (Index r = 0; r < segs.valid[s]; ++r) {
                    gx.row(segs.offset[s] + r) += g.row(gs) * inv;
                }
            } else {
                const auto& am = (*argmax)[s];
                for (Index j = 0; j < g.cols(); ++j) {
                    gx(am[static_cast<std::size_t>(j)], j) += g(gs, j);
                }
            }
        }
    });
}

namespace {

struct AttentionShape {
    Index dk;
    Index dv;
};

template <typename T>
AttentionShape check_attention(const MatrixT<T>& q, const MatrixT<T>& k, const MatrixT<T>& v,
                               const Segments& segs, int heads) {
    if (q.rows() != k.rows() || q.rows() != v.rows() || q.cols() != k.cols()) {
        throw DimensionError("attention: q " + shape_str(q) + ", k " + shape_str(k) + ", v " +
                             shape_str(v));
    }
    if (heads < 1 || q.cols() % heads != 0 || v.cols() % heads != 0) {
        throw DimensionError("attention: " + std::to_string(heads) +
                             " heads do not divide widths " + std::to_string(q.cols()) + "/" +
                             std::to_string(v.cols()));
    }
    segs.check(q.rows(), "attention");
    return {q.cols() / heads, v.cols() / heads};
}

template <typename T>
MatrixT<T> attention_probs(const MatrixT<T>& q, const MatrixT<T>& k, const Segments& segs,
                           std::size_t s, Index h, Index dk) {
    const Index off = segs.offset[s];
    const Index len = segs.length[s];
    const Index nv = segs.valid[s];
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));
    MatrixT<T> scores;
    scores.noalias() =
        q.block(off, h * dk, len, dk) * k.block(off, h * dk, nv, dk).transpose();
    scores *= scale;
    return softmax_rows_value<T>(scores);
}

} // namespace

template <typename T>
MatrixT<T> attention_weights(const MatrixT<T>& q, const MatrixT<T>& k, const Segments& segs,
                             std::size_t s, int heads, int h) {
    if (q.rows() != k.rows() || q.cols() != k.cols() || heads < 1 || q.cols() % heads != 0) {
        throw DimensionError("attention_weights: q " + shape_str(q) + ", k " + shape_str(k));
    }
    segs.check(q.rows(), "attention_weights");
    return attention_probs<T>(q, k, segs, s, h, q.cols() / heads);
}

template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, const Segments& segs,
                 int heads) {
    const auto& qv = q.value();
    const auto& kv = k.value();
    const auto& vv = v.value();
    const auto [dk, dv] = check_attention<T>(qv, kv, vv, segs, heads);

    // probs[s * heads + h] is length[s] x valid[s].
    auto probs = std::make_shared<std::vector<MatrixT<T>>>();
    probs->reserve(segs.count() * static_cast<std::size_t>(heads));
    MatrixT<T> out(qv.rows(), vv.cols());
    for (std::size_t s = 0; s < segs.count(); ++s) {
        const Index off = segs.offset[s];
        const Index len = segs.length[s];
        const Index nv = segs.valid[s];
        for (Index h = 0; h < heads; ++h) {
            MatrixT<T> p = attention_probs<T>(qv, kv, segs, s, h, dk);
            out.block(off, h * dv, len, dv).noalias() = p * vv.block(off, h * dv, nv, dv);
            probs->push_back(std::move(p));
        }
    }

    const int iq = q.id();
    const int ik = k.id();
    const int iv = v.id();
    return q.tape().record(
        std::move(out), {q, k, v}, [iq, ik, iv, segs, heads, dk, dv, probs](Tape<T>& t, int self) {
            const auto& g = t.grad(self);
            const auto& qv = t.value(iq);
            const auto& kv = t.value(ik);
            const auto& vv = t.value(iv);
            const bool gq = t.needs_grad(iq);
            const bool gk = t.needs_grad(ik);
            const bool gv = t.needs_grad(iv);
            const T scale = T(1) / std::sqrt(static_cast<T>(dk));
            MatrixT<T> dp;
            MatrixT<T> ds;
            for (std::size_t s = 0; s < segs.count(); ++s) {
                const Index off = segs.offset[s];
                const Index len = segs.length[s];
                const Index nv = segs.valid[s];
                for (Index h = 0; h < heads; ++h) {
                    const auto& p = (*probs)[s * static_cast<std::size_t>(heads) +
                                             static_cast<std::size_t>(h)];
                    const auto go = g.block(off, h * dv, len, dv);
                    if (gv) {
                        t.grad(iv).block(off, h * dv, nv, dv).noalias() += p.transpose() * go;
                    }
                    if (!gq && !gk) {
                        continue;
                    }
                    dp.noalias() = go * vv.block(off, h * dv, nv, dv).transpose();
                    const auto dots = p.cwiseProduct(dp).rowwise().sum();
                    ds = p.array() * (dp.colwise() - dots).array();
                    ds *= scale;
                    if (gq) {
                        t.grad(iq).block(off, h * dk, len, dk).noalias() +=
                            ds * kv.block(off, h * dk, nv, dk);
                    }
                    if (gk) {
                        t.grad(ik).block(off, h * dk, nv, dk).noalias() +=
                            ds.transpose() * qv.block(off, h * dk, len, dk);
                    }
                }
            }
        });
}

template <typename T>
Var<T> dropout(const Var<T>& x, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw ArgumentError("dropout: p must be in [0, 1), got " + std::to_string(p));
    }
    if (p == 0.0) {
        return x;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    auto mask = std::make_shared<MatrixT<T>>(x.rows(), x.cols());
    for (Index i = 0; i < mask->size(); ++i) {
        mask->data()[i] = rng.uniform() >= p ? keep_scale : T(0);
    }
    MatrixT<T> out = x.value().cwiseProduct(*mask);
    const int ix = x.id();
    return x.tape().record(std::move(out), {x}, [ix, mask](Tape<T>& t, int self) {
        t.grad(ix) += t.grad(self).cwiseProduct(*mask);
    });
}

double bce_loss(double p, int y) {
    const double pc = std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon);
    return y == 1 ? -std::log(pc) : -std::log(1.0 - pc);
}

template <typename T>
Var<T> bce_mean(const Var<T>& prob, std::span<const int> labels) {
    const auto& pv = prob.value();
    if (pv.cols() != 1 || pv.rows() != static_cast<Index>(labels.size()) || labels.empty()) {
        throw DimensionError("bce_mean: probabilities " + shape_str(pv) + " vs " +
                             std::to_string(labels.size()) + " labels");
    }
    const T eps = static_cast<T>(kBceEpsilon);
    const T n = static_cast<T>(labels.size());
    MatrixT<T> out(1, 1);
    T total = 0;
    for (Index i = 0; i < pv.rows(); ++i) {
        const T pc = std::clamp(pv(i, 0), eps, T(1) - eps);
        total += labels[static_cast<std::size_t>(i)] == 1 ? -std::log(pc) : -std::log(T(1) - pc);
    }
    out(0, 0) = total / n;
    std::vector<int> y(labels.begin(), labels.end());
    const int ip = prob.id();
    return prob.tape().record(std::move(out), {prob}, [ip, y, eps, n](Tape<T>& t, int self) {
        const T g = t.grad(self)(0, 0);
        const auto& pv = t.value(ip);
        auto& gp = t.grad(ip);
        for (Index i = 0; i < pv.rows(); ++i) {
            const T p = pv(i, 0);
            if (p <= eps || p >= T(1) - eps) {
                continue;
            }
            const T d = y[static_cast<std::size_t>(i)] == 1 ? -T(1) / p : T(1) / (T(1) - p);
            gp(i, 0) += g * d / n;
        }
    });
}

#define MMFUSE_INSTANTIATE_OPS(T)                                                             \
    template MatrixT<T> softmax_rows_value<T>(const MatrixT<T>&);                             \
    template MatrixT<T> sigmoid_value<T>(const MatrixT<T>&);                                  \
    template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                  \
    template Var<T> affine<T>(const Var<T>&, const Var<T>&, const Var<T>&);                   \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                                     \
    template Var<T> add_row<T>(const Var<T>&, const Var<T>&);                                 \
    template Var<T> scale<T>(const Var<T>&, T);                                               \
    template Var<T> hadamard<T>(const Var<T>&, const Var<T>&);                                \
    template Var<T> sigmoid<T>(const Var<T>&);                                                \
    template Var<T> relu<T>(const Var<T>&);                                                   \
    template Var<T> softmax_rows<T>(const Var<T>&);                                           \
    template Var<T> sum<T>(const Var<T>&);                                                    \
    template Var<T> concat_cols<T>(std::span<const Var<T>>);                                  \
    template Var<T> reduce_rows<T>(const Var<T>&, ReduceMode, const std::vector<bool>*);      \
    template Var<T> segment_reduce<T>(const Var<T>&, const Segments&, ReduceMode);            \
    template Var<T> attention<T>(const Var<T>&, const Var<T>&, const Var<T>&,                 \
                                 const Segments&, int);                                       \
    template MatrixT<T> attention_weights<T>(const MatrixT<T>&, const MatrixT<T>&,            \
                                             const Segments&, std::size_t, int, int);         \
    template Var<T> dropout<T>(const Var<T>&, double, Rng&);                                  \
    template Var<T> bce_mean<T>(const Var<T>&, std::span<const int>);

MMFUSE_INSTANTIATE_OPS(float)
MMFUSE_INSTANTIATE_OPS(double)

} // namespace mmfuse::ad
