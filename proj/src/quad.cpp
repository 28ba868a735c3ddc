#include "monoflow/quad.hpp"

#include "monoflow/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace monoflow {

// ---------------------------------------------------------------- functional.hpp bits

const char* directionName(Direction d) {
    switch (d) {
    case Direction::Nondecreasing: return "nondecreasing";
    case Direction::Nonincreasing: return "nonincreasing";
    case Direction::Constant: return "constant";
    }
    return "?";
}

WeightSpec builtinWeight(const std::string& name) {
    if (name == "one")
        return {name, [](const Vec&) { return 1.0; },
                [](const Vec& x) { return Mat(Mat::Zero(x.size(), x.size())); }};
    if (name == "cosh")
        return {name, [](const Vec& x) { return std::cosh(x(0)); },
                [](const Vec& x) {
                    Mat h = Mat::Zero(x.size(), x.size());
                    h(0, 0) = std::cosh(x(0));
                    return h;
                }};
    if (name == "coshsum")
        return {name, [](const Vec& x) { return x.array().cosh().sum(); },
                [](const Vec& x) { return Mat(x.array().cosh().matrix().asDiagonal()); }};
    if (name == "sqnorm")
        return {name, [](const Vec& x) { return x.squaredNorm() + 1.0; },
                [](const Vec& x) { return Mat(2.0 * Mat::Identity(x.size(), x.size())); }};
    throw std::invalid_argument("unknown weight '" + name + "' (known: one, cosh, coshsum, sqnorm)");
}

std::vector<std::string> builtinWeightNames() { return {"one", "cosh", "coshsum", "sqnorm"}; }

std::vector<double> FunctionalTrace::deltas() const {
    std::vector<double> d;
    for (std::size_t i = 1; i < values.size(); ++i) d.push_back(values[i] - values[i - 1]);
    return d;
}

double FunctionalTrace::maxAbs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
}

namespace {

double oriented(Direction dir, double delta) {
    switch (dir) {
    case Direction::Nondecreasing: return delta;
    case Direction::Nonincreasing: return -delta;
    case Direction::Constant: return -std::abs(delta);
    }
    return delta;
}

}  // namespace

void finalizeTrace(FunctionalTrace& tr) {
    double worst = std::numeric_limits<double>::infinity();
    const auto d = tr.deltas();
    for (double v : d) worst = std::min(worst, oriented(tr.direction, v));
    tr.worstViolation = d.empty() ? 0.0 : worst;
}

bool FunctionalTrace::respects(double relTol) const {
    const double scale = maxAbs();
    for (std::size_t i = 1; i < values.size(); ++i) {
        double allowance = relTol * scale;
        if (i < truncation.size()) allowance += truncation[i] + truncation[i - 1];
        if (oriented(direction, values[i] - values[i - 1]) < -allowance) return false;
    }
    return true;
}

// ---------------------------------------------------------------- boxes

BoxQuadrature::BoxQuadrature(std::vector<Axis> axes) : axes_(std::move(axes)) {
    if (axes_.empty() || int(axes_.size()) > kMaxDim) throw DimensionError("quadrature box needs 1..8 axes");
    for (const auto& a : axes_) {
        if (a.count < 3) throw std::invalid_argument("quadrature count must be >= 3");
        if (a.count % 2 == 0) throw std::invalid_argument("quadrature count must be odd");
        if (!(a.hi > a.lo)) throw std::invalid_argument("quadrature box must have hi > lo");
    }
}

BoxQuadrature BoxQuadrature::uniform(int n, double lo, double hi, int count) {
    return BoxQuadrature(std::vector<Axis>(n, Axis{lo, hi, count}));
}

BoxQuadrature BoxQuadrature::autoBox(const NodePtr& node, double tmin, double tmax, int count) {
    const Envelope a = node->envelope(tmax), b = node->envelope(tmin);
    const Vec lo = a.lo.cwiseMin(b.lo), hi = a.hi.cwiseMax(b.hi);
    const double r = 8.0 * std::max(a.width, b.width);
    std::vector<Axis> axes;
    for (int d = 0; d < node->dim(); ++d) axes.push_back({lo(d) - r, hi(d) + r, count});
    return BoxQuadrature(std::move(axes));
}

long long BoxQuadrature::size() const {
    long long s = 1;
    for (const auto& a : axes_) s *= a.count;
    return s;
}

double BoxQuadrature::volume() const {
    double v = 1.0;
    for (const auto& a : axes_) v *= a.hi - a.lo;
    return v;
}

std::vector<double> BoxQuadrature::weights(int axis) const {
    const Axis& a = axes_[axis];
    const double h = (a.hi - a.lo) / (a.count - 1);
    std::vector<double> w(a.count, h);
    w.front() = w.back() = 0.5 * h;
    return w;
}

namespace {

struct SliceSums {
    double fine = 0.0;
    double coarse = 0.0;
    double boundaryMax = 0.0;
    double peak = 0.0;
};

double coarseWeight(const Axis& a, int i) {
    if (i % 2 != 0) return 0.0;
    const double h2 = 2.0 * (a.hi - a.lo) / (a.count - 1);
    return (i == 0 || i == a.count - 1) ? 0.5 * h2 : h2;
}

}  // namespace

IntegralResult integrateFunction(const std::function<double(const Vec&)>& f, const BoxQuadrature& q, int threads) {
    const int n = q.dim();
    const auto& axes = q.axes();
    std::vector<std::vector<double>> fw(n);
    std::vector<std::vector<double>> cw(n);
    for (int d = 0; d < n; ++d) {
        fw[d] = q.weights(d);
        for (int i = 0; i < axes[d].count; ++i) cw[d].push_back(coarseWeight(axes[d], i));
    }
    const int rows = axes[0].count;
    std::vector<SliceSums> slices(rows);
    parallelFor(rows, threads, [&](std::size_t i0) {
        SliceSums s;
        std::vector<int> idx(n, 0);
        idx[0] = static_cast<int>(i0);
        Vec x(n);
        for (;;) {
            double wf = 1.0, wc = 1.0;
            bool boundary = false;
            for (int d = 0; d < n; ++d) {
                const Axis& a = axes[d];
                x(d) = a.lo + (a.hi - a.lo) * idx[d] / (a.count - 1);
                if (d > 0) {
                    wf *= fw[d][idx[d]];
                    wc *= cw[d][idx[d]];
                }
                boundary = boundary || idx[d] == 0 || idx[d] == a.count - 1;
            }
            const double v = f(x);
            s.fine += wf * v;
            s.coarse += wc * v;
            s.peak = std::max(s.peak, std::abs(v));
            if (boundary) s.boundaryMax = std::max(s.boundaryMax, std::abs(v));
            int d = n - 1;
            while (d >= 1 && ++idx[d] == axes[d].count) idx[d--] = 0;
            if (d < 1) break;
        }
        slices[i0] = s;
    });
    std::vector<double> fine(rows), coarse(rows);
    double peak = 0.0, boundary = 0.0;
    for (int i = 0; i < rows; ++i) {
        fine[i] = fw[0][i] * slices[i].fine;
        coarse[i] = cw[0][i] * slices[i].coarse;
        peak = std::max(peak, slices[i].peak);
        boundary = std::max(boundary, slices[i].boundaryMax);
    }
    IntegralResult r;
    r.value = pairwiseSum(fine);
    const double c = pairwiseSum(coarse);
    r.truncationEstimate = std::abs(r.value - c) + 64.0 * std::numeric_limits<double>::epsilon() * std::abs(r.value);
    r.boundaryRatio = peak > 0.0 ? boundary / peak : 0.0;
    r.tailWarning = r.boundaryRatio > 1e-9;
    return r;
}

IntegralResult integrate(const NodePtr& node, double t, const BoxQuadrature& q, const WeightSpec* weight,
                         int threads) {
    if (!(t > 0.0)) throw std::invalid_argument("integration time must be positive");
    if (q.dim() != node->dim()) throw DimensionError("quadrature box dimension does not match node");
    if (weight)
        return integrateFunction([&](const Vec& x) { return evalValue(node, t, x) * weight->value(x); }, q, threads);
    return integrateFunction([&](const Vec& x) { return evalValue(node, t, x); }, q, threads);
}

FunctionalTrace functionalTrace(const NodePtr& node, const FunctionalSpec& spec, const std::vector<double>& times,
                                const BoxQuadrature& q, int threads) {
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] > 0.0)) throw std::invalid_argument("trace times must be positive");
        if (i > 0 && !(times[i] > times[i - 1])) throw std::invalid_argument("trace times must increase strictly");
    }
    FunctionalTrace tr;
    tr.direction = spec.direction;
    tr.times = times;
    const WeightSpec* w = spec.weight ? &*spec.weight : nullptr;
    for (double t : times) {
        const IntegralResult r = integrate(node, t, q, w, threads);
        tr.values.push_back(r.value);
        tr.truncation.push_back(r.truncationEstimate);
        tr.tailWarning = tr.tailWarning || r.tailWarning;
    }
    finalizeTrace(tr);
    return tr;
}

// ---------------------------------------------------------------- gaussian rules

GaussRule gaussHermite(int m) {
    if (m < 1) throw std::invalid_argument("Gauss-Hermite order must be >= 1");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
    for (int k = 1; k < m; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(0.5 * k);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    GaussRule r;
    for (int i = 0; i < m; ++i) {
        r.nodes.push_back(es.eigenvalues()(i));
        const double v0 = es.eigenvectors()(0, i);
        r.weights.push_back(std::sqrt(std::numbers::pi) * v0 * v0);
    }
    return r;
}

double gaussianExpectation(const std::function<double(const Vec&)>& f, int n, double s, int m, const Vec* mean) {
    const GaussRule g = gaussHermite(m);
    std::vector<int> idx(n, 0);
    Vec y(n);
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(std::pow(m, n)));
    const double scale = std::sqrt(2.0) * s;
    for (;;) {
        double w = 1.0;
        for (int d = 0; d < n; ++d) {
            y(d) = scale * g.nodes[idx[d]] + (mean ? (*mean)(d) : 0.0);
            w *= g.weights[idx[d]] / std::sqrt(std::numbers::pi);
        }
        terms.push_back(w * f(y));
        int d = n - 1;
        while (d >= 0 && ++idx[d] == m) idx[d--] = 0;
        if (d < 0) break;
    }
    return pairwiseSum(terms);
}

// ---------------------------------------------------------------- groups

namespace {

std::vector<Mat> planeMaps(int k) {
    if (k < 1) throw std::invalid_argument("group sample count must be >= 1");
    std::vector<Mat> maps;
    for (int j = 0; j < k; ++j) {
        const double a = 2.0 * std::numbers::pi * j / k;
        const double c = j == 0 ? 1.0 : std::cos(a), s = j == 0 ? 0.0 : std::sin(a);
        Mat r(2, 2);
        r << c, -s, s, c;
        maps.push_back(r);
        Mat f(2, 2);
        f << c, s, s, -c;  // rotation composed with reflection diag(1,-1)
        maps.push_back(f);
    }
    return maps;
}

}  // namespace

std::shared_ptr<const GroupSampler> groupO2Elements(int k) {
    auto maps = planeMaps(k);
    std::vector<double> w(maps.size(), 1.0 / maps.size());
    return std::make_shared<const GroupSampler>(
        GroupSampler::diagonalPairs4D(std::move(maps), std::move(w), "O2-diagonal-pairs(" + std::to_string(k) + ")"));
}

std::shared_ptr<const GroupSampler> o2Sample(int k) {
    auto maps = planeMaps(k);
    std::vector<double> w(maps.size(), 1.0 / maps.size());
    return std::make_shared<const GroupSampler>(std::move(maps), std::move(w), "O2(" + std::to_string(k) + ")");
}

std::vector<double> geometricTimes(double tmin, double tmax, int count) {
    if (!(tmin > 0.0) || !(tmax > tmin) || count < 2) throw std::invalid_argument("bad time grid");
    std::vector<double> t(count);
    const double r = std::log(tmax / tmin);
    for (int i = 0; i < count; ++i) t[i] = tmin * std::exp(r * i / (count - 1));
    t.back() = tmax;
    return t;
}

}  // namespace monoflow
