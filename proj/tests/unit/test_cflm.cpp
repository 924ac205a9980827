#include "doctest.h"
#include "mmfuse/cflm.hpp"
#include "mmfuse/error.hpp"
#include "mmfuse/grad_check.hpp"

using namespace mmfuse;
using namespace mmfuse::ad;

namespace {

Vector iota(Index n, float start) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = start + static_cast<float>(i);
    return v;
}

MatrixT<double> randn(Index r, Index c, Rng& rng) {
    MatrixT<double> m(r, c);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

} // namespace

TEST_CASE("assemble_content order") {
    const Vector tox = iota(6, 100), nsfw = iota(5, 200), cap = iota(512, 300);
    const Vector c = assemble_content(tox, nsfw, 0.25, cap);
    REQUIRE(c.size() == 524);
    CHECK(c.segment(0, 6) == tox);
    CHECK(c.segment(6, 5) == nsfw);
    CHECK(c[11] == 0.25f);
    CHECK(c.segment(12, 512) == cap);
    CHECK_THROWS(assemble_content(iota(5, 0), nsfw, 0.0, cap));
    CHECK_THROWS(assemble_content(tox, nsfw, 0.0, iota(511, 0)));
}

TEST_CASE("cflm_forward") {
    ParamStore<double> ps;
    add_cflm_params(ps, Rng(1));
    Rng rng(2);
    const MatrixT<double> content = randn(4, 524, rng);
    Tape<double> t;
    SUBCASE("width") {
        CHECK(cflm_forward(ps, t.constant(content)).cols() == 256);
        CHECK(cflm_forward(ps, t.constant(content)).rows() == 4);
    }
    SUBCASE("zero weights and bias give zeros") {
        ps.at("cflm.W_f").value.setZero();
        ps.at("cflm.b_f").value.setZero();
        CHECK(cflm_forward(ps, t.constant(content)).value().isZero(0.0));
    }
    SUBCASE("matches relu of the affine map") {
        ps.at("cflm.b_f").value = randn(1, 256, rng);
        MatrixT<double> ref = content * ps.at("cflm.W_f").value;
        ref.rowwise() += ps.at("cflm.b_f").value.row(0);
        ref = ref.cwiseMax(0.0);
        CHECK((cflm_forward(ps, t.constant(content)).value() - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("permuting cap entries with the matching weight rows changes nothing") {
        const MatrixT<double> before = cflm_forward(ps, t.constant(content)).value();
        MatrixT<double> c2 = content;
        MatrixT<double>& w = ps.at("cflm.W_f").value;
        std::vector<Index> perm(512);
        for (Index i = 0; i < 512; ++i) perm[static_cast<std::size_t>(i)] = i;
        for (Index i = 511; i > 0; --i) {
            std::swap(perm[static_cast<std::size_t>(i)],
                      perm[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
        }
        const MatrixT<double> w_old = w;
        for (Index i = 0; i < 512; ++i) {
            const Index j = perm[static_cast<std::size_t>(i)];
            c2.col(12 + i) = content.col(12 + j);
            w.row(12 + i) = w_old.row(12 + j);
        }
        const MatrixT<double> after = cflm_forward(ps, t.constant(c2)).value();
        CHECK((before - after).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("wrong width") {
        CHECK_THROWS_AS(cflm_forward(ps, t.constant(randn(1, 523, rng))), DimensionError);
    }
    SUBCASE("gradients match finite differences") {
        ps.at("cflm.b_f").value = 0.1 * randn(1, 256, rng);
        const MatrixT<double> weights = randn(4, 256, rng);
        auto build = [&](Tape<double>& tp, ParamStore<double>& p) {
            return sum(hadamard(cflm_forward(p, tp.constant(content)), tp.constant(weights)));
        };
        ps.zero_grad();
        {
            Tape<double> tp;
            tp.backward(build(tp, ps));
        }
        auto f = [&](ParamStore<double>& p) {
            Tape<double> tp(false);
            return build(tp, p).value()(0, 0);
        };
        Rng pick(3);
        const auto r = finite_diff_check<double>(f, ps, 200, 1e-5, pick, 1e-6);
        CHECK(r.max_rel_error <= 1e-3);
    }
}
