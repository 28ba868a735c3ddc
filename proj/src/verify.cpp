#include "monoflow/verify.hpp"

#include "monoflow/parallel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace monoflow {

namespace {

constexpr int kPrimes[kMaxDim] = {2, 3, 5, 7, 11, 13, 17, 19};

double radicalInverse(unsigned long long i, int base) {
    double inv = 1.0 / base, f = inv, r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

}  // namespace

Vec haltonPoint(unsigned long long index, int dim) {
    if (dim < 1 || dim > kMaxDim) throw DimensionError("Halton dimension out of range");
    Vec v(dim);
    for (int d = 0; d < dim; ++d) v(d) = radicalInverse(index, kPrimes[d]);
    return v;
}

std::vector<SamplePoint> samplePoints(const NodePtr& node, const std::vector<double>& times, int spacePoints,
                                      unsigned long long seed, const Vec* lo, const Vec* hi, bool clip) {
    const int n = node->dim();
    std::vector<SamplePoint> out;
    out.reserve(times.size() * spacePoints);
    const unsigned long long base = 1 + seed * 100003ULL;
    for (std::size_t i = 0; i < times.size(); ++i) {
        Vec blo, bhi;
        const auto region = [&] {
            const Envelope e = node->envelope(times[i]);
            blo = e.lo.array() - 2.5 * e.width;
            bhi = e.hi.array() + 2.5 * e.width;
        };
        if (lo && hi) {
            if (clip) {
                region();
                blo = blo.cwiseMax(*lo);
                bhi = bhi.cwiseMin(*hi);
                if ((bhi.array() <= blo.array()).any()) region();
            } else {
                blo = *lo;
                bhi = *hi;
            }
        } else {
            region();
        }
        for (int j = 0; j < spacePoints; ++j) {
            const Vec u = haltonPoint(base + i * spacePoints + j, n);
            SamplePoint s;
            s.t = times[i];
            s.x = blo.array() + u.array() * (bhi - blo).array();
            out.push_back(s);
        }
    }
    return out;
}

Residual supersolutionResidual(const NodePtr& node, const Certificate& cert, double t, const Vec& x) {
    const Jet2 j = evalJet(node, t, x);
    const double tr = (cert.diffusion.inverse().mat() * j.hess).trace();
    Residual r;
    r.value = j.dt - tr;
    if (cert.kind == CertKind::Sub) r.value = -r.value;
    r.scale = std::max({std::abs(j.dt), std::abs(tr), j.value / t, std::numeric_limits<double>::min()});
    return r;
}

double liYauGap(const NodePtr& node, const SymMatrix& K, double t, const Vec& x) {
    const Jet2 j = evalJet(node, t, x);
    return (logHessian(j) + K * (0.5 / t)).minEigenvalue();
}

double liYauTraceGap(const NodePtr& node, const SymMatrix& K, double t, const Vec& x) {
    const Jet2 j = evalJet(node, t, x);
    return logHessian(j).trace() + K.trace() / (2.0 * t);
}

bool PointCheckSummary::pass() const {
    for (const auto& p : points)
        if (!p.residualPass || !p.liYauPass) return false;
    return true;
}

PointCheckSummary checkPoints(const NodePtr& node, const Certificate& cert, const std::vector<SamplePoint>& samples,
                              double tol, int threads, bool keepPoints, const SymMatrix* liYauOverride) {
    const std::optional<SymMatrix> K = liYauOverride ? std::optional<SymMatrix>(*liYauOverride) : cert.liYau;
    const Mat Minv = cert.diffusion.inverse().mat();
    std::vector<PointReport> reports(samples.size());
    std::vector<char> ok(samples.size(), 0);
    parallelFor(samples.size(), threads, [&](std::size_t i) {
        const SamplePoint& s = samples[i];
        PointReport r;
        r.t = s.t;
        r.x = s.x;
        try {
            const Jet2 j = evalJet(node, s.t, s.x);
            const double tr = (Minv * j.hess).trace();
            double res = j.dt - tr;
            if (cert.kind == CertKind::Sub) res = -res;
            const double scale =
                std::max({std::abs(j.dt), std::abs(tr), j.value / s.t, std::numeric_limits<double>::min()});
            r.residual = res / scale;
            r.residualPass = r.residual >= -tol;
            if (K) {
                r.liYauGap = (logHessian(j) + *K * (0.5 / s.t)).minEigenvalue();
                r.liYauPass = r.liYauGap >= -tol;
            }
            ok[i] = 1;
        } catch (const EvalError&) {
            ok[i] = 0;
        }
        reports[i] = r;
    });
    PointCheckSummary sum;
    sum.liYauChecked = K.has_value();
    double worstR = std::numeric_limits<double>::infinity(), worstL = worstR;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!ok[i]) {
            ++sum.skipped;
            continue;
        }
        ++sum.count;
        worstR = std::min(worstR, reports[i].residual);
        if (K) worstL = std::min(worstL, reports[i].liYauGap);
        if (keepPoints || !reports[i].residualPass || !reports[i].liYauPass) sum.points.push_back(reports[i]);
    }
    sum.worstResidual = sum.count ? worstR : 0.0;
    sum.worstLiYauGap = (sum.count && K) ? worstL : 0.0;
    return sum;
}

double explicitCounterexampleLaplacian(double t, const Vec& x, const Vec& a1, const Vec& a2) {
    const double n = static_cast<double>(x.size());
    const double s = ((x - a1).squaredNorm() - (x - a2).squaredNorm()) / (4.0 * t);
    const double c = std::cosh(s / 2.0);
    const double hpp = -1.0 / (4.0 * c * c);
    return -n / (2.0 * t) + hpp * (a1 - a2).squaredNorm() / (4.0 * t * t);
}

// ---------------------------------------------------------------- traces on solutions

namespace {

void checkTimes(const std::vector<double>& times) {
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] > 0.0)) throw std::invalid_argument("trace times must be positive");
        if (i > 0 && !(times[i] > times[i - 1])) throw std::invalid_argument("trace times must increase strictly");
    }
}

}  // namespace

FunctionalTrace qpTrace(const NodePtr& u1, const NodePtr& u2, double p, const std::vector<double>& times,
                        const BoxQuadrature& q, int threads) {
    if (!(p >= 1.0 && p <= 2.0)) throw std::invalid_argument("Q_p needs 1 <= p <= 2");
    checkTimes(times);
    FunctionalTrace tr;
    tr.direction = Direction::Nondecreasing;
    tr.times = times;
    for (double t : times) {
        const auto cross = integrateFunction(
            [&](const Vec& x) { return std::pow(evalValue(u1, t, x) * evalValue(u2, t, x), 1.0 / p); }, q, threads);
        const auto a = integrateFunction([&](const Vec& x) { return std::pow(evalValue(u1, t, x), 2.0 / p); }, q,
                                         threads);
        const auto b = integrateFunction([&](const Vec& x) { return std::pow(evalValue(u2, t, x), 2.0 / p); }, q,
                                         threads);
        tr.values.push_back(cross.value * cross.value - a.value * b.value);
        tr.truncation.push_back(2.0 * std::abs(cross.value) * cross.truncationEstimate +
                                std::abs(b.value) * a.truncationEstimate + std::abs(a.value) * b.truncationEstimate);
        tr.tailWarning = tr.tailWarning || cross.tailWarning || a.tailWarning || b.tailWarning;
    }
    finalizeTrace(tr);
    return tr;
}

FunctionalTrace dirichletEnergyTrace(const NodePtr& u, const std::vector<double>& times, const BoxQuadrature& q,
                                     int threads) {
    checkTimes(times);
    FunctionalTrace tr;
    tr.direction = Direction::Nonincreasing;
    tr.times = times;
    for (double t : times) {
        const auto r = integrateFunction(
            [&](const Vec& x) {
                try {
                    return evalJet(u, t, x).grad.squaredNorm();
                } catch (const EvalError&) {
                    return 0.0;
                }
            },
            q, threads);
        tr.values.push_back(r.value);
        tr.truncation.push_back(r.truncationEstimate);
        tr.tailWarning = tr.tailWarning || r.tailWarning;
    }
    finalizeTrace(tr);
    return tr;
}

FunctionalTrace entropyTrace(const NodePtr& u, const std::vector<double>& times, const BoxQuadrature& q,
                             int threads) {
    checkTimes(times);
    FunctionalTrace tr;
    tr.direction = Direction::Nondecreasing;
    tr.times = times;
    for (double t : times) {
        const auto r = integrateFunction(
            [&](const Vec& x) {
                const double v = evalValue(u, t, x);
                return v > 0.0 ? -v * std::log(v) : 0.0;
            },
            q, threads);
        tr.values.push_back(r.value);
        tr.truncation.push_back(r.truncationEstimate);
        tr.tailWarning = tr.tailWarning || r.tailWarning;
    }
    finalizeTrace(tr);
    return tr;
}

// ---------------------------------------------------------------- densities

double Density1D::mass() const {
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += (i == 0 || i + 1 == f.size() ? 0.5 : 1.0) * f[i];
    return s * h;
}

Density1D sampleDensity(const std::function<double(double)>& fn, double lo, double hi, int count) {
    if (count < 5 || !(hi > lo)) throw std::invalid_argument("density grid needs count >= 5 and hi > lo");
    Density1D d;
    d.lo = lo;
    d.h = (hi - lo) / (count - 1);
    d.f.resize(count);
    for (int i = 0; i < count; ++i) d.f[i] = fn(d.x(i));
    return d;
}

Density1D convolve(const Density1D& a, const Density1D& b) {
    if (std::abs(a.h - b.h) > 1e-12 * a.h) throw std::invalid_argument("convolved grids must share a spacing");
    Density1D c;
    c.lo = a.lo + b.lo;
    c.h = a.h;
    c.f.assign(a.f.size() + b.f.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.f.size(); ++i)
        for (std::size_t j = 0; j < b.f.size(); ++j) c.f[i + j] += a.f[i] * b.f[j];
    for (double& v : c.f) v *= a.h;
    return c;
}

double fisherInfo(const Density1D& d) {
    const std::size_t n = d.f.size();
    if (n < 5) throw std::invalid_argument("density grid too small");
    double s = 0.0;
    for (std::size_t i = 2; i + 2 < n; ++i) {
        if (d.f[i] <= kValueFloor) continue;
        const double df = (-d.f[i + 2] + 8.0 * d.f[i + 1] - 8.0 * d.f[i - 1] + d.f[i - 2]) / (12.0 * d.h);
        s += df * df / d.f[i];
    }
    return s * d.h;
}

double entropy(const Density1D& d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.f.size(); ++i) {
        const double v = d.f[i];
        if (v <= 0.0) continue;
        s -= (i == 0 || i + 1 == d.f.size() ? 0.5 : 1.0) * v * std::log(v);
    }
    return s * d.h;
}

EPIResult epiCheck(const Density1D& f1, const Density1D& f2, double relTol) {
    for (const Density1D* d : {&f1, &f2})
        if (std::abs(d->mass() - 1.0) > 1e-6) throw std::invalid_argument("EPI inputs must have unit mass");
    EPIResult r;
    r.lhs = std::exp(2.0 * entropy(convolve(f1, f2)));
    r.rhs = std::exp(2.0 * entropy(f1)) + std::exp(2.0 * entropy(f2));
    r.ok = r.lhs >= r.rhs * (1.0 - relTol);
    return r;
}

BlachmanResult blachmanCheck(const Density1D& f1, const Density1D& f2, double a1, double a2) {
    BlachmanResult r;
    r.lhs = a1 * a1 * fisherInfo(f1) + a2 * a2 * fisherInfo(f2);
    r.rhs = (a1 + a2) * (a1 + a2) * fisherInfo(convolve(f1, f2));
    return r;
}

// ---------------------------------------------------------------- convolution witness

std::pair<double, double> convLambdas(double p1, double p2) {
    const double a1 = 1.0 - 1.0 / p1, a2 = 1.0 - 1.0 / p2;
    const double s = a1 + a2;
    if (s == 0.0) throw std::invalid_argument("convolution weights undefined for 1/p1' + 1/p2' = 0");
    return {(a1 / s) * (a1 / s), (a2 / s) * (a2 / s)};
}

namespace {

struct GridNode {
    Vec y;
    double w;
};

std::vector<GridNode> gridNodes(const BoxQuadrature& q) {
    const int n = q.dim();
    std::vector<std::vector<double>> ws(n);
    for (int d = 0; d < n; ++d) ws[d] = q.weights(d);
    std::vector<GridNode> out;
    std::vector<int> idx(n, 0);
    for (;;) {
        GridNode g;
        g.y = Vec(n);
        g.w = 1.0;
        for (int d = 0; d < n; ++d) {
            const Axis& a = q.axes()[d];
            g.y(d) = a.lo + (a.hi - a.lo) * idx[d] / (a.count - 1);
            g.w *= ws[d][idx[d]];
        }
        out.push_back(g);
        int d = n - 1;
        while (d >= 0 && ++idx[d] == q.axes()[d].count) idx[d--] = 0;
        if (d < 0) break;
    }
    return out;
}

}  // namespace

ConvWitness convNonnegativityWitness(const NodePtr& u1, const NodePtr& u2, double p, double p1, double p2,
                                     const Vec& X, double t, const Vec& x, const BoxQuadrature& q,
                                     bool withDouble) {
    (void)p;
    ConvWitness w;
    std::tie(w.lambda1, w.lambda2) = convLambdas(p1, p2);
    const auto nodes = gridNodes(q);
    std::vector<double> F(nodes.size(), 0.0), a1(nodes.size(), 0.0), a2(nodes.size(), 0.0);
    double C = 0.0, S11 = 0.0, S22 = 0.0, S12 = 0.0, D1 = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        try {
            const Jet2 j1 = evalJet(u1, t, x - nodes[i].y);
            const Jet2 j2 = evalJet(u2, t, nodes[i].y);
            F[i] = std::pow(j1.value, 1.0 / p1) * std::pow(j2.value, 1.0 / p2);
            a1[i] = (j1.grad / j1.value).dot(X);
            a2[i] = (j2.grad / j2.value).dot(X);
        } catch (const EvalError&) {
            F[i] = 0.0;
        }
        const double fw = F[i] * nodes[i].w;
        C += fw;
        S11 += fw * a1[i] * a1[i];
        S22 += fw * a2[i] * a2[i];
        S12 += fw * a1[i] * a2[i];
        D1 += fw * a1[i];
    }
    const double gradC = D1 / p1;
    w.single = w.lambda1 / (p1 * p1) * C * S11 + w.lambda2 / (p2 * p2) * C * S22 +
               (1.0 - w.lambda1 - w.lambda2) / (p1 * p2) * C * S12 - gradC * gradC;
    if (withDouble) {
        const double c1 = std::sqrt(w.lambda1) / p1, c2 = std::sqrt(w.lambda2) / p2;
        std::vector<double> G(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) G[i] = c1 * a1[i] + c2 * a2[i];
        double total = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (F[i] == 0.0) continue;
            double row = 0.0;
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                const double d = G[i] - G[k];
                row += F[k] * nodes[k].w * d * d;
            }
            total += F[i] * nodes[i].w * row;
        }
        w.doubleIntegral = 0.5 * total;
    }
    return w;
}

// ---------------------------------------------------------------- geometric-mean identity

BLDecomposition blResidualDecomposition(const NodePtr& node, double t, const Vec& x) {
    NodePtr gm = node;
    BLDecomposition d;
    if (node->kind() == NodeKind::TimePower) {
        d.beta = node->beta();
        gm = node->children()[0];
    }
    if (gm->kind() != NodeKind::GeomMean) throw std::invalid_argument("decomposition needs a gmean node");
    const std::size_t m = gm->children().size();
    const BLDatumResult bl = checkBLDatum(gm->coeffs(), gm->maps(), gm->mats());
    const Mat Minv = bl.M.inverse().mat();
    const Jet2 J = evalJet(node, t, x);
    d.lhs = (J.dt - (Minv * J.hess).trace()) / J.value;

    std::vector<Vec> ws;
    Vec acc = Vec::Zero(x.size());
    std::vector<Vec> gs;
    std::vector<Mat> Hs;
    for (std::size_t j = 0; j < m; ++j) {
        const Mat& L = gm->maps()[j].mat();
        const Mat& A = gm->mats()[j].mat();
        const Mat Ainv = gm->mats()[j].inverse().mat();
        const Jet2 jj = evalJet(gm->children()[j], t, L * x);
        const double pj = gm->coeffs()[j];
        d.first += pj * (jj.dt - (Ainv * jj.hess).trace()) / jj.value;
        const Vec g = jj.grad / jj.value;
        const Mat LLt = L * L.transpose();
        const Vec w = L.transpose() * LLt.inverse() * Ainv * g;
        ws.push_back(w);
        gs.push_back(g);
        Hs.push_back(logHessian(jj).mat());
        acc += pj * L.transpose() * A * L * w;
    }
    const Vec wbar = Minv * acc;
    for (std::size_t j = 0; j < m; ++j) {
        const Mat& L = gm->maps()[j].mat();
        const Mat& A = gm->mats()[j].mat();
        const double pj = gm->coeffs()[j];
        const Mat D = gm->mats()[j].inverse().mat() - L * Minv * L.transpose();
        const Vec dw = ws[j] - wbar;
        d.second += pj * dw.dot(L.transpose() * A * L * dw);
        const Vec ALw = A * L * ws[j];
        d.third += pj * ALw.dot(D * ALw);
        d.fourth += pj * (D * (Hs[j] + A / (2.0 * t))).trace();
    }
    return d;
}

}  // namespace monoflow
