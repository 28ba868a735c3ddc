#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's numerical code paths except for plain value evaluation.

#include "monoflow/expr.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

namespace oracle {

using monoflow::Mat;
using monoflow::Vec;

inline constexpr double kPi = std::numbers::pi;

/// Eigenvalues of [[a, b], [b, c]] in ascending order.
inline std::pair<double, double> eig2(double a, double b, double c) {
    const double m = 0.5 * (a + c), r = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    return {m - r, m + r};
}

inline Mat randomSPD(std::mt19937_64& rng, int n, double lo = 0.5, double hi = 2.0) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(lo, hi);
    Mat G(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = nd(rng);
    // orthonormal basis by Gram-Schmidt, then prescribed spectrum
    Mat Q = G;
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < j; ++k) Q.col(j) -= Q.col(k).dot(Q.col(j)) * Q.col(k);
        Q.col(j) /= Q.col(j).norm();
    }
    Mat D = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) D(i, i) = ud(rng);
    return Q * D * Q.transpose();
}

inline Mat randomOrthogonal(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> nd;
    Mat Q(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) Q(i, j) = nd(rng);
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < j; ++k) Q.col(j) -= Q.col(k).dot(Q.col(j)) * Q.col(k);
        Q.col(j) /= Q.col(j).norm();
    }
    return Q;
}

inline Vec randomVec(std::mt19937_64& rng, int n, double scale = 1.0) {
    std::normal_distribution<double> nd;
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = scale * nd(rng);
    return v;
}

/// Determinant by cofactor expansion (n <= 4).
inline double detCofactor(const Mat& m) {
    const int n = static_cast<int>(m.rows());
    if (n == 1) return m(0, 0);
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
        Mat minor(n - 1, n - 1);
        for (int r = 1; r < n; ++r)
            for (int c = 0, cc = 0; c < n; ++c)
                if (c != j) minor(r - 1, cc++) = m(r, c);
        s += ((j % 2) ? -1.0 : 1.0) * m(0, j) * detCofactor(minor);
    }
    return s;
}

/// Unit-mass gaussian heat kernel written out directly.
inline double kernel(const Mat& A, double tau, const Vec& y) {
    const int n = static_cast<int>(y.size());
    const double q = y.dot(A * y);
    return std::sqrt(detCofactor(A)) * std::pow(4.0 * kPi * tau, -n / 2.0) * std::exp(-q / (4.0 * tau));
}

/// Central differences of a scalar field f(t, x).
struct FD {
    std::function<double(double, const Vec&)> f;
    double h = 1e-4;

    double dt(double t, const Vec& x) const { return (f(t + h, x) - f(t - h, x)) / (2 * h); }
    Vec grad(double t, const Vec& x) const {
        Vec g(x.size());
        for (int i = 0; i < x.size(); ++i) {
            Vec a = x, b = x;
            a(i) += h;
            b(i) -= h;
            g(i) = (f(t, a) - f(t, b)) / (2 * h);
        }
        return g;
    }
    Mat hess(double t, const Vec& x) const {
        const int n = static_cast<int>(x.size());
        Mat H(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                Vec pp = x, pm = x, mp = x, mm = x;
                pp(i) += h, pp(j) += h;
                pm(i) += h, pm(j) -= h;
                mp(i) -= h, mp(j) += h;
                mm(i) -= h, mm(j) -= h;
                H(i, j) = (f(t, pp) - f(t, pm) - f(t, mp) + f(t, mm)) / (4 * h * h);
            }
        return H;
    }
};

/// Composite Simpson rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int panels = 4000) {
    const double h = (b - a) / panels;
    double s = f(a) + f(b);
    for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

inline double relErr(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b))); }

}  // namespace oracle
