#include <cmath>
#include <cstring>

#include "doctest.h"
#include "mmfuse/error.hpp"
#include "mmfuse/grad_check.hpp"
#include "mmfuse/manm.hpp"

using namespace mmfuse;
using namespace mmfuse::ad;

namespace {

template <typename T>
MatrixT<T> randn(Index r, Index c, Rng& rng, double scale = 1.0) {
    MatrixT<T> m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(scale * rng.normal());
    return m;
}

template <typename T>
MatrixT<T> rand_unit(Index r, Index c, Rng& rng) {
    MatrixT<T> m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform());
    return m;
}

template <typename T>
ParamStore<T> manm_store(std::uint64_t seed = 1) {
    ParamStore<T> ps;
    add_manm_params(ps, ManmConfig{}, Rng(seed));
    return ps;
}

// Reference attention in double: softmax(q k^T / sqrt(d)) v over the first `valid` keys.
Eigen::MatrixXd attention_oracle(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                 const Eigen::MatrixXd& v, Index valid) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(q.rows(), v.cols());
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    for (Index i = 0; i < q.rows(); ++i) {
        std::vector<double> s(static_cast<std::size_t>(valid));
        double mx = -1e300;
        for (Index j = 0; j < valid; ++j) {
            double d = 0;
            for (Index c = 0; c < q.cols(); ++c) d += q(i, c) * k(j, c);
            s[static_cast<std::size_t>(j)] = d * scale;
            mx = std::max(mx, d * scale);
        }
        double z = 0;
        for (auto& x : s) z += (x = std::exp(x - mx));
        for (Index j = 0; j < valid; ++j) out.row(i) += s[static_cast<std::size_t>(j)] / z * v.row(j);
    }
    return out;
}

} // namespace

TEST_CASE("project_regions") {
    auto ps = manm_store<double>();
    Rng rng(2);
    SUBCASE("zero weight gives the bias on every row") {
        ps.at("manm.region.W").value.setZero();
        ps.at("manm.region.b").value.setConstant(0.25);
        Tape<double> t;
        const auto out = project_regions(ps, t.constant(randn<double>(100, 1024, rng)));
        CHECK(out.rows() == 100);
        CHECK(out.cols() == 768);
        CHECK((out.value().array() == 0.25).all());
    }
    SUBCASE("matches matmul plus bias") {
        ps.at("manm.region.b").value = randn<double>(1, 768, rng);
        const MatrixT<double> x = randn<double>(5, 1024, rng);
        Tape<double> t;
        const auto out = project_regions(ps, t.constant(x));
        Eigen::MatrixXd ref = x * ps.at("manm.region.W").value;
        ref.rowwise() += ps.at("manm.region.b").value.row(0);
        CHECK((out.value() - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("wrong width") {
        Tape<double> t;
        CHECK_THROWS_AS(project_regions(ps, t.constant(randn<double>(3, 512, rng))), DimensionError);
    }
}

TEST_CASE("context_aware_regions") {
    auto ps = manm_store<double>();
    Rng rng(3);
    const MatrixT<double> proj = randn<double>(6, 768, rng);
    const MatrixT<double> geo = rand_unit<double>(6, 6, rng);
    SUBCASE("zero position weights halve the projection") {
        ps.at("manm.pos.W").value.setZero();
        Tape<double> t;
        const auto out = context_aware_regions(ps, t.constant(proj), t.constant(geo));
        CHECK((out.value() - proj / 2).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("zero row stays zero and entries are bounded by the projection") {
        MatrixT<double> p = proj;
        p.row(2).setZero();
        ps.at("manm.pos.b").value = randn<double>(1, 768, rng);
        Tape<double> t;
        const auto out = context_aware_regions(ps, t.constant(p), t.constant(geo));
        CHECK(out.value().row(2).isZero(0.0));
        CHECK((out.value().cwiseAbs().array() <= p.cwiseAbs().array()).all());
    }
}

TEST_CASE("qkv") {
    auto ps = manm_store<double>();
    Rng rng(4);
    const MatrixT<double> x = randn<double>(3, 768, rng);
    SUBCASE("identity weights") {
        for (const char* n : {"manm.txt.W_Q", "manm.txt.W_K", "manm.txt.W_V"}) {
            ps.at(n).value = MatrixT<double>::Identity(768, 768);
        }
        Tape<double> t;
        const auto r = qkv(ps, t.constant(x), Modality::Text);
        CHECK(r.q.value() == x);
        CHECK(r.k.value() == x);
        CHECK(r.v.value() == x);
    }
    SUBCASE("modalities are isolated") {
        Tape<double> t1;
        const MatrixT<double> before = qkv(ps, t1.constant(x), Modality::Text).q.value();
        ps.at("manm.img.W_Q").value.setConstant(7.0);
        Tape<double> t2;
        CHECK(qkv(ps, t2.constant(x), Modality::Text).q.value() == before);
        CHECK(qkv(ps, t2.constant(x), Modality::Image).q.value() != before);
    }
    SUBCASE("shape") {
        Tape<double> t;
        const auto r = qkv(ps, t.constant(randn<double>(100, 768, rng)), Modality::Image);
        CHECK(r.v.rows() == 100);
        CHECK(r.v.cols() == 768);
    }
}

TEST_CASE("adaptive_gate") {
    auto ps = manm_store<float>();
    Rng rng(5);
    SUBCASE("zero gate parameters give masks of one half") {
        for (auto& p : ps) {
            if (p.name.starts_with("manm.gate_img.")) p.value.setZero();
        }
        Tape<float> t;
        const auto m = adaptive_gate(ps, t.constant(randn<float>(4, 768, rng)),
                                     t.constant(randn<float>(4, 768, rng)), Modality::Image);
        CHECK((m.mq.value().array() == 0.5f).all());
        CHECK((m.mk.value().array() == 0.5f).all());
    }
    SUBCASE("masks lie strictly inside (0, 1) on 10^4 random row pairs") {
        for (auto& p : ps) {
            if (p.name.starts_with("manm.gate_txt.b")) p.value = randn<float>(1, 768, rng);
        }
        MatrixT<float> q = randn<float>(10000, 768, rng);
        MatrixT<float> k = randn<float>(10000, 768, rng);
        for (Index r = 0; r < q.rows(); r += 7) {
            q.row(r) *= 100.0f; // push some rows into saturation
            k.row(r) *= 100.0f;
        }
        Tape<float> t(false);
        const auto m = adaptive_gate(ps, t.constant(q), t.constant(k), Modality::Text);
        CHECK(m.mq.value().allFinite());
        CHECK((m.mq.value().array() > 0.0f).all());
        CHECK((m.mq.value().array() < 1.0f).all());
        CHECK((m.mk.value().array() > 0.0f).all());
        CHECK((m.mk.value().array() < 1.0f).all());
    }
    SUBCASE("zero query with zero biases cancels the key") {
        for (auto& p : ps) {
            if (p.name.starts_with("manm.gate_img.b")) p.value.setZero();
        }
        Tape<float> t;
        const auto a = adaptive_gate(ps, t.constant(MatrixT<float>::Zero(3, 768)),
                                     t.constant(randn<float>(3, 768, rng)), Modality::Image);
        const auto b = adaptive_gate(ps, t.constant(MatrixT<float>::Zero(3, 768)),
                                     t.constant(randn<float>(3, 768, rng, 10.0)), Modality::Image);
        CHECK(a.mq.value() == b.mq.value());
        CHECK((a.mk.value().array() == 0.5f).all());
    }
    SUBCASE("shape mismatch") {
        Tape<float> t;
        CHECK_THROWS_AS(adaptive_gate(ps, t.constant(randn<float>(3, 768, rng)),
                                      t.constant(randn<float>(4, 768, rng)), Modality::Image),
                        DimensionError);
    }
}

TEST_CASE("gated_cross_attention") {
    auto ps = manm_store<double>();
    Rng rng(6);
    const Index L = 5;
    const auto segs = Segments::single(L, L);
    Tape<double> t;
    const auto q = t.constant(randn<double>(L, 768, rng));
    const auto k = t.constant(randn<double>(L, 768, rng));
    const auto masks = adaptive_gate(ps, q, k, Modality::Image);

    SUBCASE("identical value rows come back unchanged") {
        MatrixT<double> v(L, 768);
        const MatrixT<double> row = randn<double>(1, 768, rng);
        for (Index r = 0; r < L; ++r) v.row(r) = row;
        const auto out = gated_cross_attention(q, k, t.constant(v), masks, segs);
        CHECK((out.value() - v).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("single position returns V") {
        const auto s1 = Segments::single(1, 1);
        const auto q1 = t.constant(randn<double>(1, 768, rng));
        const auto k1 = t.constant(randn<double>(1, 768, rng));
        const MatrixT<double> v1 = randn<double>(1, 768, rng);
        const auto out = gated_cross_attention(q1, k1, t.constant(v1), adaptive_gate(ps, q1, k1, Modality::Text), s1);
        CHECK(out.value() == v1);
    }
    SUBCASE("weights rows sum to one") {
        const MatrixT<double> mq = hadamard(masks.mq, q).value();
        const MatrixT<double> mk = hadamard(masks.mk, k).value();
        const MatrixT<double> w = attention_weights(mq, mk, segs, 0);
        for (Index r = 0; r < w.rows(); ++r) CHECK(std::abs(w.row(r).sum() - 1.0) < 1e-12);
    }
    SUBCASE("linear in V") {
        const MatrixT<double> v = randn<double>(L, 768, rng);
        const MatrixT<double> base = gated_cross_attention(q, k, t.constant(v), masks, segs).value();
        // powers of two scale exactly
        CHECK(gated_cross_attention(q, k, t.constant(2.0 * v), masks, segs).value() == 2.0 * base);
        CHECK(gated_cross_attention(q, k, t.constant(0.5 * v), masks, segs).value() == 0.5 * base);
        const MatrixT<double> three = gated_cross_attention(q, k, t.constant(3.0 * v), masks, segs).value();
        CHECK((three - 3.0 * base).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("all-ones masks reduce to plain cross-attention") {
        const MatrixT<double> v = randn<double>(L, 768, rng);
        const GateMasks<double> ones{t.constant(MatrixT<double>::Ones(L, 768)),
                                     t.constant(MatrixT<double>::Ones(L, 768))};
        const auto out = gated_cross_attention(q, k, t.constant(v), ones, segs);
        const Eigen::MatrixXd ref = attention_oracle(q.value(), k.value(), v, L);
        CHECK((out.value() - ref).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("keys beyond the valid count are ignored") {
        const MatrixT<double> v = randn<double>(L, 768, rng);
        const auto s3 = Segments::single(L, 3);
        const auto a = gated_cross_attention(q, k, t.constant(v), masks, s3).value();
        MatrixT<double> v2 = v;
        v2.bottomRows(2).setConstant(1e6);
        const auto b = gated_cross_attention(q, k, t.constant(v2), masks, s3).value();
        CHECK(a == b);
    }
}

TEST_CASE("msan") {
    ManmConfig cfg;
    auto ps = manm_store<double>(7);
    Rng rng(8);
    SUBCASE("width and head weights") {
        const Index L = 6;
        const auto segs = Segments::single(L, 4);
        Tape<double> t;
        const MatrixT<double> x = randn<double>(L, 768, rng);
        const auto out = msan(ps, cfg, t.constant(x), Modality::Image, segs);
        CHECK(out.rows() == L);
        CHECK(out.cols() == 256);
        const MatrixT<double> q = x * ps.at("manm.msan_img.W_q").value;
        const MatrixT<double> k = x * ps.at("manm.msan_img.W_k").value;
        for (int h = 0; h < cfg.msan_heads; ++h) {
            const MatrixT<double> w = attention_weights(q, k, segs, 0, cfg.msan_heads, h);
            CHECK(w.cols() == 4);
            for (Index r = 0; r < w.rows(); ++r) CHECK(std::abs(w.row(r).sum() - 1.0) < 1e-12);
        }
    }
    SUBCASE("swapping two rows swaps the outputs") {
        const Index L = 4;
        const auto segs = Segments::single(L, L);
        MatrixT<double> x = randn<double>(L, 768, rng);
        Tape<double> t;
        const MatrixT<double> a = msan(ps, cfg, t.constant(x), Modality::Text, segs).value();
        x.row(1).swap(x.row(3));
        const MatrixT<double> b = msan(ps, cfg, t.constant(x), Modality::Text, segs).value();
        CHECK((a.row(0) - b.row(0)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.row(2) - b.row(2)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.row(1) - b.row(3)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.row(3) - b.row(1)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("pool_concat") {
    Rng rng(9);
    Tape<double> t;
    SUBCASE("single valid row per modality") {
        const MatrixT<double> a = randn<double>(3, 256, rng);
        const MatrixT<double> b = randn<double>(3, 256, rng);
        const auto segs = Segments::single(3, 1);
        const auto out = pool_concat(t.constant(a), segs, t.constant(b), segs, ReduceMode::Max);
        CHECK(out.cols() == 512);
        CHECK(out.value().leftCols(256) == a.row(0));
        CHECK(out.value().rightCols(256) == b.row(0));
    }
    SUBCASE("dominated row leaves the max unchanged") {
        MatrixT<double> a = randn<double>(3, 256, rng);
        const MatrixT<double> b = randn<double>(3, 256, rng);
        const auto two = Segments::single(3, 2);
        const MatrixT<double> before = pool_concat(t.constant(a), two, t.constant(b), two, ReduceMode::Max).value();
        a.row(2) = a.row(0).array() - 1.0;
        const auto three = Segments::single(3, 3);
        const MatrixT<double> after = pool_concat(t.constant(a), three, t.constant(b), two, ReduceMode::Max).value();
        CHECK(before == after);
    }
    SUBCASE("zero valid rows") {
        const Segments empty{{0}, {3}, {0}};
        CHECK_THROWS(pool_concat(t.constant(randn<double>(3, 256, rng)), empty,
                                 t.constant(randn<double>(3, 256, rng)), empty, ReduceMode::Max));
    }
}

namespace {

struct ToyBatch {
    MatrixT<double> tokens, regions, geometry;
    Segments text, image;
};

// Two samples with (tokens, regions) valid counts (2, 3) and (3, 1), laid
// out with `len` rows each.
ToyBatch toy_batch(Rng& rng, Index len0 = 3, Index len1 = 3) {
    ToyBatch b;
    const Index rows = len0 + len1;
    b.tokens = MatrixT<double>::Zero(rows, 768);
    b.regions = MatrixT<double>::Zero(rows, 1024);
    b.geometry = MatrixT<double>::Zero(rows, 6);
    b.tokens.middleRows(0, 2) = randn<double>(2, 768, rng);
    b.tokens.middleRows(len0, 3) = randn<double>(3, 768, rng);
    b.regions.middleRows(0, 3) = randn<double>(3, 1024, rng);
    b.regions.middleRows(len0, 1) = randn<double>(1, 1024, rng);
    b.geometry.middleRows(0, 3) = rand_unit<double>(3, 6, rng);
    b.geometry.middleRows(len0, 1) = rand_unit<double>(1, 6, rng);
    b.text = Segments{{0, len0}, {len0, len1}, {2, 3}};
    b.image = Segments{{0, len0}, {len0, len1}, {3, 1}};
    return b;
}

} // namespace

TEST_CASE("manm_forward") {
    ManmConfig cfg;
    auto ps = manm_store<double>(10);
    Rng rng(11);
    const ToyBatch b = toy_batch(rng);
    SUBCASE("deterministic, finite, 512 wide") {
        Tape<double> t1, t2;
        const auto a = manm_forward(ps, cfg, t1.constant(b.tokens), t1.constant(b.regions),
                                    t1.constant(b.geometry), b.text, b.image);
        const auto c = manm_forward(ps, cfg, t2.constant(b.tokens), t2.constant(b.regions),
                                    t2.constant(b.geometry), b.text, b.image);
        CHECK(a.attended.rows() == 2);
        CHECK(a.attended.cols() == 512);
        CHECK(a.attended.value().allFinite());
        CHECK(a.attended.value() == c.attended.value());
    }
    SUBCASE("padding each sample to 100 rows changes nothing") {
        Rng rng2(11);
        const ToyBatch padded = toy_batch(rng2, 100, 100);
        Tape<double> t;
        const auto a = manm_forward(ps, cfg, t.constant(b.tokens), t.constant(b.regions),
                                    t.constant(b.geometry), b.text, b.image);
        const auto p = manm_forward(ps, cfg, t.constant(padded.tokens), t.constant(padded.regions),
                                    t.constant(padded.geometry), padded.text, padded.image);
        CHECK((a.attended.value() - p.attended.value()).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("manm gradients match finite differences") {
    ManmConfig cfg;
    auto ps = manm_store<double>(12);
    for (auto& p : ps) {
        if (p.name.find(".b") != std::string::npos) {
            Rng r(Rng(13).split(p.name));
            p.value = randn<double>(p.value.rows(), p.value.cols(), r, 0.1);
        }
    }
    Rng rng(14);
    const ToyBatch b = toy_batch(rng);
    const MatrixT<double> weights = randn<double>(2, 512, rng);
    auto build = [&](Tape<double>& t, ParamStore<double>& p) {
        const auto out = manm_forward(p, cfg, t.constant(b.tokens), t.constant(b.regions),
                                      t.constant(b.geometry), b.text, b.image);
        return sum(hadamard(out.attended, t.constant(weights)));
    };
    ps.zero_grad();
    {
        Tape<double> t;
        t.backward(build(t, ps));
    }
    auto f = [&](ParamStore<double>& p) {
        Tape<double> t(false);
        return build(t, p).value()(0, 0);
    };
    Rng pick(15);
    const auto r = finite_diff_check<double>(f, ps, 240, 1e-5, pick, 1e-6);
    CAPTURE(r.worst_param);
    CAPTURE(r.worst_analytic);
    CAPTURE(r.worst_numeric);
    CHECK(r.samples == 240);
    CHECK(r.max_rel_error <= 1e-3);
}
