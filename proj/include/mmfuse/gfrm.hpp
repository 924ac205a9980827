#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmfuse/manm.hpp"

namespace mmfuse {

/// Cosine similarity in double precision, clamped to [-1, 1]. A zero-norm
/// input yields 0 and, when `warnings` is given, appends a note there.
double cosine_similarity(const Vector& u, const Vector& v,
                         std::vector<std::string>* warnings = nullptr);

/// Threshold graph over a frozen embedding set.
///
/// Nodes i != j are adjacent iff their cosine similarity is strictly greater
/// than thr. There are no self-loops. neighbor_mean row k is the mean of the
/// raw embeddings of k's neighbours, or zero when k is isolated.
class SimilarityGraph {
public:
    SimilarityGraph() = default;

    Index size() const { return nodes_.rows(); }
    double threshold() const { return thr_; }
    Modality modality() const { return modality_; }

    const Matrix& nodes() const { return nodes_; }
    const Matrix& neighbor_mean() const { return neighbor_mean_; }
    bool adjacent(Index i, Index j) const { return adj_[static_cast<std::size_t>(i * size() + j)] != 0; }
    std::size_t edge_count() const { return edges_; }
    std::vector<Index> degrees() const;
    const std::vector<std::string>& warnings() const { return warnings_; }

    /// Neighbour mean of node i; throws ArgumentError when out of range.
    Vector node_neighbor_mean(Index i) const;

    /// Neighbour mean of an embedding not in the graph, thresholded against the
    /// stored nodes. An embedding bitwise equal to a stored node resolves to
    /// that node, so the node itself is not counted as its own neighbour.
    Vector query_neighbor_mean(const Vector& embedding) const;

    /// Index of a stored node bitwise equal to `embedding`, if any.
    std::optional<Index> find_node(const Vector& embedding) const;

    friend SimilarityGraph build_graph(const Matrix& embeddings, double thr, Modality modality);

private:
    Matrix nodes_;
    Eigen::MatrixXd unit_; // L2-normalised rows, zero rows kept zero
    std::vector<unsigned char> adj_;
    Matrix neighbor_mean_;
    std::size_t edges_ = 0;
    double thr_ = 0.85;
    Modality modality_ = Modality::Text;
    std::vector<std::string> warnings_;
    std::unordered_multimap<std::uint64_t, Index> lookup_;

    Vector mean_of(const std::vector<Index>& members) const;
};

SimilarityGraph build_graph(const Matrix& embeddings, double thr, Modality modality = Modality::Text);

/// Registers gfrm.{img,txt}.{W,b}: (2 * pair_dim) -> out_dim each.
template <typename T>
void add_gfrm_params(ParamStore<T>& ps, const Rng& rng, Index pair_dim = 512, Index out_dim = 256);

/// ReLU(concat(neighbor_mean, self) W + b) row-wise.
template <typename T>
ad::Var<T> sage_forward(ParamStore<T>& ps, Modality m, const ad::Var<T>& neighbor_mean,
                        const ad::Var<T>& self);

/// concat(sage image, sage text).
template <typename T>
ad::Var<T> gfrm_forward(ParamStore<T>& ps, const ad::Var<T>& nbr_img, const ad::Var<T>& pair_img,
                        const ad::Var<T>& nbr_txt, const ad::Var<T>& pair_txt);

} // namespace mmfuse
