#include "doctest.h"
#include "oracles.hpp"

#include "monoflow/bellman.hpp"

using namespace monoflow;

namespace {

std::vector<BellmanSpec> family() {
    return {BellmanSpec::power(2.0),
            BellmanSpec::power(0.5),
            BellmanSpec::weightedGeomMean({0.5, 0.5}),
            BellmanSpec::weightedGeomMean({0.25, 0.25, 0.5}),
            BellmanSpec::weightedGeomMean({0.75, 0.75}),
            BellmanSpec::harmonicSum(2),
            BellmanSpec::harmonicSum(3),
            BellmanSpec::lqNorm(2.0, 1.0),
            BellmanSpec::lqNorm(3.0, 1.5),
            BellmanSpec::lqNorm(1.5, 3.0),
            BellmanSpec::linear({1.0, 2.0})};
}

Vec positivePoint(std::mt19937_64& rng, int m) {
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    Vec x(m);
    for (int j = 0; j < m; ++j) x(j) = std::exp(u(rng));
    return x;
}

// direct formula for each family, written independently of the library
double directValue(const BellmanSpec& B, const Vec& x) {
    const auto& p = B.params();
    switch (B.family()) {
    case BellmanSpec::Family::Power: return std::pow(x(0), p[0]);
    case BellmanSpec::Family::WeightedGeomMean: {
        double v = 1.0;
        for (int j = 0; j < x.size(); ++j) v *= std::pow(x(j), p[j]);
        return v;
    }
    case BellmanSpec::Family::HarmonicSum: {
        double s = 0.0;
        for (int j = 0; j < x.size(); ++j) s += 1.0 / x(j);
        return 1.0 / s;
    }
    case BellmanSpec::Family::LqNormP:
        return std::pow(std::pow(x(0), p[1]) + std::pow(x(1), p[1]), p[0] / p[1]);
    case BellmanSpec::Family::Linear: {
        double s = 0.0;
        for (int j = 0; j < x.size(); ++j) s += p[j] * x(j);
        return s;
    }
    }
    return 0.0;
}

}  // namespace

TEST_CASE("oracles agree with direct formulas and finite differences") {
    std::mt19937_64 rng(1);
    for (const auto& B : family()) {
        CAPTURE(B.name());
        for (int trial = 0; trial < 20; ++trial) {
            const Vec x = positivePoint(rng, B.arity());
            CHECK(B.value(x) == doctest::Approx(directValue(B, x)).epsilon(1e-13));
            const double h = 1e-5;
            const Vec g = B.gradient(x);
            const Mat H = B.hessian(x);
            for (int j = 0; j < B.arity(); ++j) {
                Vec a = x, b = x;
                a(j) += h;
                b(j) -= h;
                const double fd = (directValue(B, a) - directValue(B, b)) / (2 * h);
                CHECK(std::abs(g(j) - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
                const Vec ga = B.gradient(a), gb = B.gradient(b);
                for (int k = 0; k < B.arity(); ++k) {
                    const double fdh = (ga(k) - gb(k)) / (2 * h);
                    CHECK(std::abs(H(k, j) - fdh) <= 1e-6 * std::max(1.0, std::abs(fdh)));
                }
            }
        }
    }
}

TEST_CASE("theta hessian matches log B(e^s) by differences") {
    std::mt19937_64 rng(2);
    for (const auto& B : family()) {
        CAPTURE(B.name());
        for (int trial = 0; trial < 10; ++trial) {
            std::uniform_real_distribution<double> u(-1.0, 1.0);
            Vec s(B.arity());
            for (int j = 0; j < B.arity(); ++j) s(j) = u(rng);
            auto theta = [&](const Vec& v) { return std::log(directValue(B, v.array().exp().matrix())); };
            CHECK(B.theta(s) == doctest::Approx(theta(s)).epsilon(1e-12));
            const double h = 1e-4;
            const Mat T = B.thetaHessian(s);
            for (int i = 0; i < B.arity(); ++i)
                for (int j = 0; j < B.arity(); ++j) {
                    Vec pp = s, pm = s, mp = s, mm = s;
                    pp(i) += h, pp(j) += h;
                    pm(i) += h, pm(j) -= h;
                    mp(i) -= h, mp(j) += h;
                    mm(i) -= h, mm(j) -= h;
                    const double fd = (theta(pp) - theta(pm) - theta(mp) + theta(mm)) / (4 * h * h);
                    CHECK(std::abs(T(i, j) - fd) < 1e-6);
                }
        }
    }
}

TEST_CASE("theta hessian closed forms") {
    const Vec z = Vec::Zero(2);
    CHECK(BellmanSpec::weightedGeomMean({0.3, 0.7}).thetaHessian(z).cwiseAbs().maxCoeff() == 0.0);
    Vec one(1);
    one << 0.4;
    CHECK(BellmanSpec::power(3.0).thetaHessian(one).cwiseAbs().maxCoeff() == 0.0);
    // h''(0) = -1/4 for the harmonic sum
    const Mat T = BellmanSpec::harmonicSum(2).thetaHessian(z);
    CHECK(T(0, 0) == doctest::Approx(-0.25));
    CHECK(T(0, 1) == doctest::Approx(0.25));
    CHECK(T(1, 1) == doctest::Approx(-0.25));
    // h''(x) = -e^x / (1 + e^x)^2 off the diagonal point
    Vec s(2);
    s << 0.0, 0.7;
    const double hpp = -std::exp(0.7) / std::pow(1.0 + std::exp(0.7), 2);
    const Mat T2 = BellmanSpec::harmonicSum(2).thetaHessian(s);
    CHECK(T2(0, 0) == doctest::Approx(hpp).epsilon(1e-12));
    CHECK(T2(0, 1) == doctest::Approx(-hpp).epsilon(1e-12));
}

TEST_CASE("flags") {
    CHECK(BellmanSpec::weightedGeomMean({0.5, 0.5}).concave());
    CHECK(BellmanSpec::weightedGeomMean({0.5, 0.5}).thetaConvex());
    CHECK_FALSE(BellmanSpec::weightedGeomMean({0.75, 0.75}).concave());
    CHECK(BellmanSpec::harmonicSum().concave());
    CHECK_FALSE(BellmanSpec::harmonicSum().thetaConvex());
    CHECK(BellmanSpec::lqNorm(2, 1).thetaConvex());
    CHECK(BellmanSpec::lqNorm(2, 1).lambdaMin() == 1.0);
    CHECK(BellmanSpec::lqNorm(1.5, 3).lambdaMin() == 2.0);
    CHECK(BellmanSpec::power(2).lambdaMin() == 1.0);
    CHECK(BellmanSpec::power(0.5).concave());
    for (const auto& B : family()) CHECK(B.increasing());
    CHECK(BellmanSpec::harmonicSum().name() == "hsum");
    CHECK(BellmanSpec::weightedGeomMean({0.5, 0.5}).name() == "wgm(0.5,0.5)");
    CHECK_THROWS(BellmanSpec::power(0.0));
    CHECK_THROWS(BellmanSpec::lqNorm(1.0, 0.0));
    CHECK_THROWS(BellmanSpec::harmonicSum(1));
}

TEST_CASE("theta convexity flag agrees with sampled theta hessians") {
    std::mt19937_64 rng(7);
    for (const auto& B : family()) {
        CAPTURE(B.name());
        double worst = 1e300;
        for (int trial = 0; trial < 200; ++trial) {
            std::uniform_real_distribution<double> u(-3.0, 3.0);
            Vec s(B.arity());
            for (int j = 0; j < B.arity(); ++j) s(j) = u(rng);
            worst = std::min(worst, SymMatrix(B.thetaHessian(s)).minEigenvalue());
        }
        CHECK((worst >= -1e-12) == B.thetaConvex());
    }
}
