#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mmfuse/rng.hpp"
#include "mmfuse/tape.hpp"

namespace mmfuse::ad {

enum class ReduceMode { Mean, Max };

/// Row layout of a ragged batch stacked into one matrix. Sample s owns rows
/// [offset[s], offset[s] + length[s]); only the first valid[s] of those rows
/// are real data, the rest are padding.
struct Segments {
    std::vector<Index> offset;
    std::vector<Index> length;
    std::vector<Index> valid;

    std::size_t count() const { return offset.size(); }
    Index total_rows() const { return offset.empty() ? 0 : offset.back() + length.back(); }

    static Segments single(Index rows, Index valid_rows) { return {{0}, {rows}, {valid_rows}}; }

    /// Same layout, different validity counts.
    Segments with_valid(std::vector<Index> v) const { return {offset, length, std::move(v)}; }

    /// Throws unless the layout is contiguous and 1 <= valid <= length.
    void check(Index rows, const char* op) const;
};

// -- Plain kernels (no tape) ------------------------------------------------

/// Row-wise softmax with per-row max subtraction.
template <typename T>
MatrixT<T> softmax_rows_value(const MatrixT<T>& m);

/// Elementwise logistic function, clamped so every output lies strictly in (0, 1).
template <typename T>
MatrixT<T> sigmoid_value(const MatrixT<T>& m);

// -- Differentiable ops ------------------------------------------------------

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

/// x * W + b with b a 1xN row broadcast over rows.
template <typename T>
Var<T> affine(const Var<T>& x, const Var<T>& w, const Var<T>& b);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

/// Adds a 1xN row to every row of x.
template <typename T>
Var<T> add_row(const Var<T>& x, const Var<T>& row);

template <typename T>
Var<T> scale(const Var<T>& x, T alpha);

template <typename T>
Var<T> hadamard(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> softmax_rows(const Var<T>& x);

template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts);

template <typename T>
Var<T> concat_cols(std::initializer_list<Var<T>> parts) {
    return concat_cols<T>(std::span<const Var<T>>(parts.begin(), parts.size()));
}

/// Column-wise reduction over the rows of x to a 1xC row. With a mask, only
/// rows whose mask entry is true take part; at least one must be.
template <typename T>
Var<T> reduce_rows(const Var<T>& x, ReduceMode mode, const std::vector<bool>* mask = nullptr);

/// Per-segment column-wise reduction over each segment's valid rows -> S x C.
template <typename T>
Var<T> segment_reduce(const Var<T>& x, const Segments& segs, ReduceMode mode);

/// Scaled dot-product attention computed independently per segment and head.
///
/// Columns of q/k split into `heads` equal blocks of width dk, columns of v into
/// blocks of width dv. Within segment s, query rows attend over the first
/// valid[s] key rows only; later keys get zero weight (a -inf score). Scores
/// are scaled by 1/sqrt(dk). Output has v's shape.
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, const Segments& segs,
                 int heads = 1);

/// Attention weights of segment `s`, head `h` for the same configuration
/// (length[s] x valid[s]). Used for inspection and tests.
template <typename T>
MatrixT<T> attention_weights(const MatrixT<T>& q, const MatrixT<T>& k, const Segments& segs,
                             std::size_t s, int heads = 1, int h = 0);

/// Inverted dropout: zeroes each entry with probability p and scales survivors
/// by 1/(1-p). p == 0 returns x unchanged.
template <typename T>
Var<T> dropout(const Var<T>& x, double p, Rng& rng);

/// Lower clamp applied to probabilities inside bce_mean; upper clamp is 1 - eps.
inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross-entropy of a Bx1 probability column against 0/1 labels.
template <typename T>
Var<T> bce_mean(const Var<T>& prob, std::span<const int> labels);

/// Scalar BCE with the same clamp as bce_mean.
double bce_loss(double p, int y);

} // namespace mmfuse::ad
