#include "mmfuse/gfrm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mmfuse/error.hpp"

namespace mmfuse {

using namespace ad;

namespace {

std::uint64_t hash_row(const float* data, Index n) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < sizeof(float) * static_cast<std::size_t>(n); ++i) {
        h = (h ^ bytes[i]) * 0x100000001b3ull;
    }
    return h;
}

} // namespace

double cosine_similarity(const Vector& u, const Vector& v, std::vector<std::string>* warnings) {
    if (u.size() != v.size()) {
        throw DimensionError("cosine_similarity: lengths " + std::to_string(u.size()) + " and " +
                             std::to_string(v.size()));
    }
    const Eigen::RowVectorXd a = u.cast<double>();
    const Eigen::RowVectorXd b = v.cast<double>();
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        if (warnings) warnings->push_back("cosine similarity of a zero-norm vector taken as 0");
        return 0.0;
    }
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

SimilarityGraph build_graph(const Matrix& embeddings, double thr, Modality modality) {
    SimilarityGraph g;
    const Index n = embeddings.rows();
    g.nodes_ = embeddings;
    g.thr_ = thr;
    g.modality_ = modality;
    g.unit_ = embeddings.cast<double>();
    for (Index i = 0; i < n; ++i) {
        const double norm = g.unit_.row(i).norm();
        if (norm == 0.0) {
            g.warnings_.push_back("node " + std::to_string(i) +
                                  " has a zero-norm embedding; its similarities are 0");
        } else {
            g.unit_.row(i) /= norm;
        }
        g.lookup_.emplace(hash_row(embeddings.row(i).data(), embeddings.cols()), i);
    }
    const Eigen::MatrixXd sim = g.unit_ * g.unit_.transpose();
    g.adj_.assign(static_cast<std::size_t>(n * n), 0);
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            // symmetric by construction: one decision per unordered pair
            const double s = std::clamp(sim(i, j), -1.0, 1.0);
            if (s > thr) {
                g.adj_[static_cast<std::size_t>(i * n + j)] = 1;
                g.adj_[static_cast<std::size_t>(j * n + i)] = 1;
                ++g.edges_;
            }
        }
    }
    g.neighbor_mean_ = Matrix::Zero(n, embeddings.cols());
    std::vector<Index> members;
    for (Index i = 0; i < n; ++i) {
        members.clear();
        for (Index j = 0; j < n; ++j) {
            if (g.adjacent(i, j)) members.push_back(j);
        }
        g.neighbor_mean_.row(i) = g.mean_of(members);
    }
    return g;
}

Vector SimilarityGraph::mean_of(const std::vector<Index>& members) const {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(nodes_.cols());
    for (Index j : members) acc += nodes_.row(j).cast<double>();
    if (!members.empty()) acc /= static_cast<double>(members.size());
    return acc.cast<float>();
}

std::vector<Index> SimilarityGraph::degrees() const {
    std::vector<Index> d(static_cast<std::size_t>(size()), 0);
    for (Index i = 0; i < size(); ++i) {
        for (Index j = 0; j < size(); ++j) d[static_cast<std::size_t>(i)] += adjacent(i, j);
    }
    return d;
}

Vector SimilarityGraph::node_neighbor_mean(Index i) const {
    if (i < 0 || i >= size()) {
        throw ArgumentError("graph node index " + std::to_string(i) + " out of range [0, " +
                            std::to_string(size()) + ")");
    }
    return neighbor_mean_.row(i);
}

std::optional<Index> SimilarityGraph::find_node(const Vector& e) const {
    if (e.size() != nodes_.cols()) return std::nullopt;
    const auto range = lookup_.equal_range(hash_row(e.data(), e.size()));
    for (auto it = range.first; it != range.second; ++it) {
        const Index i = it->second;
        if (std::memcmp(nodes_.row(i).data(), e.data(), sizeof(float) * static_cast<std::size_t>(e.size())) == 0) {
            return i;
        }
    }
    return std::nullopt;
}

Vector SimilarityGraph::query_neighbor_mean(const Vector& e) const {
    if (e.size() != nodes_.cols()) {
        throw DimensionError("graph query: embedding length " + std::to_string(e.size()) +
                             ", graph width " + std::to_string(nodes_.cols()));
    }
    if (const auto i = find_node(e)) return neighbor_mean_.row(*i);
    Eigen::RowVectorXd u = e.cast<double>();
    const double norm = u.norm();
    if (norm > 0.0) u /= norm;
    const Eigen::VectorXd sim = unit_ * u.transpose();
    std::vector<Index> members;
    for (Index j = 0; j < size(); ++j) {
        if (std::clamp(sim[j], -1.0, 1.0) > thr_) members.push_back(j);
    }
    return mean_of(members);
}

template <typename T>
void add_gfrm_params(ParamStore<T>& ps, const Rng& rng, Index pair_dim, Index out_dim) {
    for (Modality m : {Modality::Image, Modality::Text}) {
        const std::string base = std::string("gfrm.") + modality_tag(m);
        Param<T>& w = ps.add(base + ".W", 2 * pair_dim, out_dim);
        Rng r = rng.split(base + ".W");
        init_fan_in(w, r);
        ps.add(base + ".b", 1, out_dim);
    }
}

template <typename T>
Var<T> sage_forward(ParamStore<T>& ps, Modality m, const Var<T>& neighbor_mean, const Var<T>& self) {
    const std::string base = std::string("gfrm.") + modality_tag(m);
    Tape<T>& t = self.tape();
    return relu(affine(concat_cols<T>({neighbor_mean, self}), t.param(ps.at(base + ".W")),
                       t.param(ps.at(base + ".b"))));
}

template <typename T>
Var<T> gfrm_forward(ParamStore<T>& ps, const Var<T>& nbr_img, const Var<T>& pair_img,
                    const Var<T>& nbr_txt, const Var<T>& pair_txt) {
    return concat_cols<T>({sage_forward(ps, Modality::Image, nbr_img, pair_img),
                           sage_forward(ps, Modality::Text, nbr_txt, pair_txt)});
}

#define MMFUSE_INSTANTIATE(T)                                                                   \
    template void add_gfrm_params<T>(ParamStore<T>&, const Rng&, Index, Index);                 \
    template Var<T> sage_forward<T>(ParamStore<T>&, Modality, const Var<T>&, const Var<T>&);    \
    template Var<T> gfrm_forward<T>(ParamStore<T>&, const Var<T>&, const Var<T>&, const Var<T>&, \
                                    const Var<T>&);

MMFUSE_INSTANTIATE(float)
MMFUSE_INSTANTIATE(double)

} // namespace mmfuse
