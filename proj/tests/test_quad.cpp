#include "doctest.h"
#include "oracles.hpp"

#include "monoflow/quad.hpp"

using namespace monoflow;

namespace {

Vec v1(double a) {
    Vec v(1);
    v << a;
    return v;
}

NodePtr k1(double c) { return makeKernel(SymMatrix{{1}}, v1(c)); }

}  // namespace

TEST_CASE("box weights") {
    const BoxQuadrature q = BoxQuadrature::uniform(2, -1, 3, 5);
    CHECK(q.size() == 25);
    CHECK(q.volume() == 16.0);
    double s = 0.0;
    for (double w : q.weights(0)) {
        CHECK(w > 0.0);
        s += w;
    }
    CHECK(s == doctest::Approx(4.0));
    CHECK_THROWS(BoxQuadrature::uniform(1, 0, 1, 4));
    CHECK_THROWS(BoxQuadrature::uniform(1, 0, 1, 1));
}

TEST_CASE("unit mass of the kernel") {
    const auto r = integrate(k1(0), 1.0, BoxQuadrature::uniform(1, -10, 10, 201));
    CHECK(std::abs(r.value - 1.0) < 1e-6);
    CHECK_FALSE(r.tailWarning);
    const auto narrow = integrate(k1(0), 1.0, BoxQuadrature::uniform(1, -2, 2, 41));
    CHECK(narrow.tailWarning);
}

TEST_CASE("geometric mean of shifted kernels integrates to exp(-1/(16t))") {
    // sqrt(H(x) H(x - 1)) = H(x - 1/2) e^{-1/(16 t)} by completing the square
    const NodePtr g = makeBellman(BellmanSpec::weightedGeomMean({0.5, 0.5}), {k1(0), k1(1)});
    const BoxQuadrature q = BoxQuadrature::autoBox(g, 0.1, 4.0, 401);
    const auto r = integrate(g, 1.0, q);
    CHECK(r.value == doctest::Approx(std::exp(-1.0 / 16.0)).epsilon(1e-9));
    CHECK(r.value == doctest::Approx(0.939413).epsilon(1e-6));

    const auto times = geometricTimes(0.1, 4.0, 16);
    const auto tr = functionalTrace(g, FunctionalSpec{Direction::Nondecreasing, std::nullopt}, times, q);
    for (std::size_t i = 0; i < times.size(); ++i)
        CHECK(std::abs(tr.values[i] - std::exp(-1.0 / (16.0 * times[i]))) < 1e-6);
    CHECK(tr.worstViolation > 0.0);
    CHECK(tr.respects(1e-8));
}

TEST_CASE("cosh weight") {
    // E cosh(X) for X ~ N(0, 2t) is e^t
    const WeightSpec w = builtinWeight("cosh");
    const NodePtr u = k1(0);
    const BoxQuadrature q = BoxQuadrature::uniform(1, -40, 40, 801);
    for (double t : {0.5, 1.0, 2.0}) CHECK(integrate(u, t, q, &w).value == doctest::Approx(std::exp(t)).epsilon(1e-9));
    CHECK_THROWS(builtinWeight("nope"));
}

TEST_CASE("kernel trace is constant") {
    const auto q = BoxQuadrature::autoBox(k1(0.3), 0.1, 4.0, 401);
    const auto tr =
        functionalTrace(k1(0.3), FunctionalSpec{Direction::Constant, std::nullopt}, geometricTimes(0.1, 4, 12), q);
    for (double v : tr.values) CHECK(std::abs(v - 1.0) < 1e-8);
    CHECK(tr.worstViolation > -1e-8);
}

TEST_CASE("refinement changes integrals less than the truncation estimate") {
    const NodePtr g = makeBellman(BellmanSpec::harmonicSum(), {k1(0), k1(1.5)});
    for (int count : {41, 81}) {
        const auto coarse = integrate(g, 0.7, BoxQuadrature::uniform(1, -9, 10, count));
        const auto fine = integrate(g, 0.7, BoxQuadrature::uniform(1, -9, 10, 2 * count - 1));
        CHECK(std::abs(fine.value - coarse.value) <= coarse.truncationEstimate);
    }
}

TEST_CASE("tensor factor permutation") {
    const NodePtr a = makeKernel(SymMatrix{{2}}, v1(0.3)), b = makeKernel(SymMatrix{{0.5}}, v1(-1));
    const BoxQuadrature q({{-8, 8, 81}, {-14, 12, 101}});
    const BoxQuadrature qp({{-14, 12, 101}, {-8, 8, 81}});
    const double x = integrate(makeTensor(a, b), 1.3, q).value;
    const double y = integrate(makeTensor(b, a), 1.3, qp).value;
    CHECK(x == doctest::Approx(y).epsilon(1e-13));
}

TEST_CASE("thread count does not change sums") {
    const NodePtr g = makeTensor(makeBellman(BellmanSpec::harmonicSum(), {k1(0), k1(1.5)}), k1(0.2));
    const BoxQuadrature q = BoxQuadrature::uniform(2, -8, 9, 61);
    const double a = integrate(g, 0.8, q, nullptr, 1).value;
    const double b = integrate(g, 0.8, q, nullptr, 4).value;
    const double c = integrate(g, 0.8, q, nullptr, 8).value;
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("Gauss-Hermite rules") {
    const GaussRule r = gaussHermite(20);
    double m0 = 0, m2 = 0, m4 = 0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        m0 += r.weights[i];
        m2 += r.weights[i] * r.nodes[i] * r.nodes[i];
        m4 += r.weights[i] * std::pow(r.nodes[i], 4);
    }
    CHECK(m0 == doctest::Approx(std::sqrt(oracle::kPi)).epsilon(1e-13));
    CHECK(m2 == doctest::Approx(std::sqrt(oracle::kPi) / 2).epsilon(1e-13));
    CHECK(m4 == doctest::Approx(3 * std::sqrt(oracle::kPi) / 4).epsilon(1e-12));
    // E X^4 = 3 s^4 and E e^{X} = e^{s^2 / 2}
    const double s = 1.7;
    CHECK(gaussianExpectation([](const Vec& x) { return std::pow(x(0), 4); }, 1, s, 10) ==
          doctest::Approx(3 * std::pow(s, 4)));
    CHECK(gaussianExpectation([](const Vec& x) { return std::exp(x(0) + 0.5 * x(1)); }, 2, s, 40) ==
          doctest::Approx(std::exp(s * s * 1.25 / 2)).epsilon(1e-12));
}

TEST_CASE("O(2) sampler on R^4") {
    for (int k : {1, 3, 8}) {
        const auto g = groupO2Elements(k);
        CHECK(g->size() == 2 * k);
        Vec e1(4), e2(4);
        e1 << 1, 0, 1, 0;
        e2 << 0, 1, 0, 1;
        bool hasIdentity = false;
        double wsum = 0.0;
        std::mt19937_64 rng(k);
        const Vec x = oracle::randomVec(rng, 4);
        double avg = 0.0;
        for (int j = 0; j < g->size(); ++j) {
            const Mat& R = g->element(j);
            CHECK((R.transpose() * R - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-12);
            CHECK((R * e1 - e1).cwiseAbs().maxCoeff() == 0.0);
            CHECK((R * e2 - e2).cwiseAbs().maxCoeff() == 0.0);
            CHECK((g->apply(j, x) - R * x).cwiseAbs().maxCoeff() < 1e-14);
            if ((R - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0) hasIdentity = true;
            wsum += g->weight(j);
            avg += g->weight(j) * (R * x).squaredNorm();
        }
        CHECK(hasIdentity);
        CHECK(wsum == doctest::Approx(1.0));
        CHECK(avg == doctest::Approx(x.squaredNorm()));
    }
    CHECK(o2Sample(4)->dim() == 2);
}

TEST_CASE("geometric times") {
    const auto t = geometricTimes(0.1, 4.0, 16);
    CHECK(t.size() == 16);
    CHECK(t.front() == doctest::Approx(0.1));
    CHECK(t.back() == doctest::Approx(4.0));
    CHECK(t[1] / t[0] == doctest::Approx(t[15] / t[14]));
}
