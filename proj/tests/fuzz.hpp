#pragma once

// Random .mq program generator. Well-typed programs are built so that every
// side condition holds by construction (shared diffusion matrices, matched
// convolution constants, BL equality data, sufficient time powers); ill-typed
// ones break exactly one condition and record the rule expected to refuse them.

#include "monoflow/certify.hpp"
#include "monoflow/dsl.hpp"
#include "monoflow/quad.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

namespace fuzz {

using monoflow::Mat;

struct Generated {
    std::string source;
    int dim = 1;
    std::string expectedRule;  // empty for well-typed programs
};

class Generator {
public:
    explicit Generator(unsigned long long seed) : rng_(seed) {}

    Generated wellTyped() {
        const int depth = pick(4) + 1;
        const int d = std::vector<int>{1, 1, 1, 2, 2, 3}[pick(6)];
        total_ = d;
        return finish(free(depth, d, true), d, "");
    }

    Generated illTyped(int category) {
        switch (category % 3) {
        case 0: {  // broken BL datum
            const int d = pick(2) + 1;
            const Mat M = niceSPD(d);
            std::string e;
            if (d == 2 && pick(2) == 0) {
                // both maps see only the first coordinate: M is singular
                e = "gmean(1/2: L=[[1, 0]] A=[[1]] : " + target(1, one(), false) + ", 1/2: L=[[1, 0]] A=[[2]] : " +
                    target(1, one() * 2.0, false) + ")";
            } else {
                e = "gmean(1/4: L=" + mat(Mat::Identity(d, d)) + " A=" + mat(M) + " : " + target(1, M, false) +
                    ", 1/4: L=" + mat(Mat::Identity(d, d)) + " A=" + mat(M) + " : " + target(1, M, false) + ")";
            }
            return finish(wrap(e, d), d, "R6-brascamp-lieb");
        }
        case 1: {  // exponents violate 1/p1 + 1/p2 = 1 + 1/p
            Mat s(1, 1);
            s << pickOf({0.5, 1.0, 2.0});
            const char* ex[] = {"p=2, p1=3/2, p2=3/2", "p=1, p1=4/3, p2=4/3", "p=3, p1=2, p2=5/4"};
            const std::string e =
                std::string("conv(") + ex[pick(3)] + ", " + target(1, s, false) + ", " + target(1, s, false) + ")";
            return finish(wrap(e, 1), 1, "R7-convolution");
        }
        default: {  // anisotropic convolution
            const int d = pick(2) + 2;
            Mat M = Mat::Identity(d, d);
            M(0, 0) = pickOf({0.5, 2.0, 1.5});
            const std::string e = "conv(p=2, p1=4/3, p2=4/3, " + target(1, M, false) + ", " + target(1, M, false) + ")";
            return finish(wrap(e, d), d, "R7-convolution");
        }
        }
    }

private:
    std::mt19937_64 rng_;
    int total_ = 1;  // dimension of the program being built

    static Mat one() { return Mat::Identity(1, 1); }

    int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }
    double pickOf(const std::vector<double>& v) { return v[pick(static_cast<int>(v.size()))]; }

    static std::string num(double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }

    static std::string mat(const Mat& m) {
        std::string s = "[";
        for (int i = 0; i < m.rows(); ++i) {
            s += i ? ", [" : "[";
            for (int j = 0; j < m.cols(); ++j) s += (j ? ", " : "") + num(m(i, j));
            s += "]";
        }
        return s + "]";
    }

    Mat niceSPD(int d) {
        for (;;) {
            Mat M = Mat::Zero(d, d);
            for (int i = 0; i < d; ++i) M(i, i) = pickOf({0.5, 1.0, 1.5, 2.0});
            for (int i = 0; i < d; ++i)
                for (int j = i + 1; j < d; ++j) M(i, j) = M(j, i) = pickOf({0.0, 0.25, -0.25});
            if (Eigen::SelfAdjointEigenSolver<Mat>(M).eigenvalues().minCoeff() > 0.2) return M;
        }
    }

    Mat niceMap(int d) {
        Mat L = Mat::Identity(d, d);
        for (int i = 0; i < d; ++i) L(i, i) = pickOf({1.0, -1.0});
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j) L(i, j) = pickOf({0.0, 0.5, -0.5});
        if (d > 1 && pick(2) == 0) L.row(0).swap(L.row(d - 1));
        return L;
    }

    std::string atom(const Mat& M) {
        const int d = static_cast<int>(M.rows());
        std::string mix = "[";
        const int terms = pick(2) + 1;
        for (int k = 0; k < terms; ++k) {
            mix += k ? ", (" : "(";
            mix += num(pickOf({1.0, 0.5, 2.0, 0.25})) + ", [";
            for (int i = 0; i < d; ++i) mix += (i ? ", " : "") + num(0.25 * (pick(13) - 6));
            mix += "])";
        }
        mix += "]";
        const double t0 = pickOf({0.0, 0.0, 0.125, 0.25});
        return "heat(A=" + mat(M) + ", mix=" + mix + (t0 > 0 ? ", t0=" + num(t0) : "") + ")";
    }

    /// Super or exact node whose certified diffusion matrix is M. With
    /// needLiYau the node also carries a Li-Yau matrix K <= M.
    std::string target(int depth, const Mat& M, bool needLiYau) {
        if (depth <= 0) return atom(M);
        const int d = static_cast<int>(M.rows());
        const int choice = needLiYau ? std::vector<int>{0, 1, 1, 5}[pick(4)] : pick(7);
        switch (choice) {
        case 0: return atom(M);
        case 1:
            return "sum(" + num(pickOf({1.0, 0.5, 2.0})) + ": " + target(depth - 1, M, needLiYau) + ", " +
                   num(pickOf({1.0, 0.25, 3.0})) + ": " + target(depth - 1, M, needLiYau) + ")";
        case 2: {
            const int k = pick(3) + 1;
            return "wgm(" + std::to_string(k) + "/4: " + target(depth - 1, M, false) + ", " + std::to_string(4 - k) +
                   "/4: " + target(depth - 1, M, false) + ")";
        }
        case 3: return "pow(" + std::string(pick(2) ? "1/2" : "3/4") + ", " + target(depth - 1, M, false) + ")";
        case 4: return "hsum(" + target(depth - 1, M, false) + ", " + target(depth - 1, M, false) + ")";
        case 5: {
            const std::string I = mat(Mat::Identity(d, d)), A = mat(M);
            return "gmean(1/3: L=" + I + " A=" + A + " : " + target(depth - 1, M, needLiYau) + ", 2/3: L=" + I +
                   " A=" + A + " : " + target(depth - 1, M, needLiYau) + ")";
        }
        default: {
            Mat v(d, 1);
            for (int i = 0; i < d; ++i) v(i, 0) = 0.25 * (pick(9) - 4);
            std::string vs = "[";
            for (int i = 0; i < d; ++i) vs += (i ? ", " : "") + num(v(i, 0));
            return "shift(" + target(depth - 1, M, needLiYau) + ", " + vs + "])";
        }
        }
    }

    std::string free(int depth, int d, bool root) {
        if (depth <= 0) return atom(niceSPD(d));
        for (;;) {
            switch (pick(8)) {
            case 0: return target(depth, niceSPD(d), false);
            case 1:
                if (d >= 2) {
                    const int d1 = pick(d - 1) + 1;
                    return "tensor(" + free(depth - 1, d1, false) + ", " + free(depth - 1, d - d1, false) + ")";
                }
                break;
            case 2: return "compose(" + mat(niceMap(d)) + ", " + free(depth - 1, d, false) + ")";
            case 3:
                if (d == 2)
                    return "gavg(" + std::to_string(pick(3) + 2) + ", " +
                           target(depth - 1, Mat::Identity(2, 2) * pickOf({0.5, 1.0, 2.0}), false) + ")";
                break;
            case 4: {
                const Mat M = niceSPD(d);
                const int which = pick(3);
                const double p = which == 2 ? 3.0 : 2.0;
                const char* pq = which == 0 ? "2, 1" : which == 1 ? "2, 2" : "3, 3/2";
                return "tpow(" + num((p - 1) * d / 2.0) + ", lqnorm(" + pq + ", " + target(depth - 1, M, true) +
                       ", " + target(depth - 1, M, true) + "))";
            }
            case 5:
                // convolutions evaluate by inner quadrature; keep them off 3D grids
                if (d == 1 && total_ <= 2) {
                    const double s = pickOf({0.5, 1.0, 2.0});
                    Mat a(1, 1), b(1, 1);
                    if (root && pick(3) == 0) {
                        a << s;
                        return "conv(p=1/2, p1=2/3, p2=2/3, " + atom(a) + ", " + atom(a) + ")";
                    }
                    if (pick(2)) {
                        a << s;
                        return "conv(p=2, p1=4/3, p2=4/3, " + target(depth - 1, a, false) + ", " +
                               target(depth - 1, a, false) + ")";
                    }
                    a << 0.625 * s;
                    b << s;
                    return "conv(p=2, p1=3/2, p2=6/5, " + target(depth - 1, a, false) + ", " +
                           target(depth - 1, b, false) + ")";
                }
                break;
            case 6: return "tpow(" + std::string(pick(2) ? "1/4" : "1/2") + ", " + target(depth - 1, niceSPD(d), false) + ")";
            default: return target(depth, niceSPD(d), false);
            }
        }
    }

    std::string wrap(const std::string& e, int d) {
        switch (pick(3)) {
        case 0: return "compose(" + mat(niceMap(d)) + ", " + e + ")";
        case 1: return "sum(1: " + e + ")";
        default: return e;
        }
    }

    static Generated finish(const std::string& expr, int d, const std::string& rule) {
        std::string box = "[";
        for (int i = 0; i < d; ++i) box += i ? ", [-1, 1, 3]" : "[-1, 1, 3]";
        box += "]";
        const std::string head = "let f = " + expr + ";\n";
        const std::string times = "t=[" + num(kTmin) + ", " + num(kTmax) + ", 8]";
        std::string src = head + "check f " + times + " box=" + box + ";\n";
        if (rule.empty()) {
            // Box from the envelope (hull +- 6 widths); spacing resolves the
            // narrowest direction the certified diffusion allows at tmin.
            const auto node = monoflow::dsl::lower(monoflow::dsl::parse(src))[0].node;
            const double lmax = monoflow::certify(node).diffusion.maxEigenvalue();
            const auto a = node->envelope(kTmin), b = node->envelope(kTmax);
            const double r = 6.0 * std::max(a.width, b.width);
            const double h = std::sqrt(2.0 * kTmin / lmax) / 1.2;
            const int cap = d == 1 ? 4001 : d == 2 ? 401 : 71;
            box = "[";
            for (int i = 0; i < d; ++i) {
                const double lo = std::min(a.lo(i), b.lo(i)) - r, hi = std::max(a.hi(i), b.hi(i)) + r;
                int count = static_cast<int>(std::ceil((hi - lo) / h)) + 1;
                count = std::min(cap, count | 1);
                box += (i ? ", [" : "[") + num(lo) + ", " + num(hi) + ", " + std::to_string(count) + "]";
            }
            box += "]";
            src = head + "check f " + times + " box=" + box + ";\n";
        }
        return {src, d, rule};
    }

    static constexpr double kTmin = 0.5, kTmax = 2.0;
};

}  // namespace fuzz
