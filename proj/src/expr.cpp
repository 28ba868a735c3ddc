#include "monoflow/expr.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace monoflow {

Jet2 Jet2::zero(int n) {
    Jet2 j;
    j.grad = Vec::Zero(n);
    j.hess = Mat::Zero(n, n);
    return j;
}

void GaussianMixtureAtom::validate() const {
    if (terms.empty()) throw std::invalid_argument("heat atom needs at least one mixture term");
    for (const auto& term : terms) {
        if (!(term.weight > 0.0)) throw std::invalid_argument("heat atom weights must be positive");
        if (term.center.size() != A.dim()) throw DimensionError("heat atom center has wrong dimension");
        if (!(term.t0 >= 0.0)) throw std::invalid_argument("heat atom time offset must be >= 0");
    }
    if (!(A.minEigenvalue() > 0.0)) throw std::invalid_argument("heat atom matrix must be positive definite");
}

namespace {

double kernelPrefactor(const SymMatrix& A, double tau) {
    const int n = A.dim();
    return std::sqrt(A.det()) * std::pow(4.0 * std::numbers::pi * tau, -0.5 * n);
}

}  // namespace

Jet2 heatKernelJet(const SymMatrix& A, double t, const Vec& x, const Vec& center, double t0) {
    const double tau = t + t0;
    if (!(tau > 0.0)) throw EvalError("nonpositive effective time in heat kernel");
    if (x.size() != A.dim() || center.size() != A.dim()) throw DimensionError("heat kernel dimension mismatch");
    const int n = A.dim();
    const Vec y = x - center;
    const Vec ay = A.mat() * y;
    const double q = ay.dot(y);
    const double h = kernelPrefactor(A, tau) * std::exp(-q / (4.0 * tau));
    Jet2 j;
    j.value = h;
    j.dt = h * (-0.5 * n / tau + q / (4.0 * tau * tau));
    j.grad = -h / (2.0 * tau) * ay;
    j.hess = h * (ay * ay.transpose() / (4.0 * tau * tau) - A.mat() / (2.0 * tau));
    return j;
}

double heatKernelValue(const SymMatrix& A, double t, const Vec& x, const Vec& center, double t0) {
    const double tau = t + t0;
    if (!(tau > 0.0)) throw EvalError("nonpositive effective time in heat kernel");
    const Vec y = x - center;
    return kernelPrefactor(A, tau) * std::exp(-(A.mat() * y).dot(y) / (4.0 * tau));
}

GroupSampler::GroupSampler(std::vector<Mat> elements, std::vector<double> weights, std::string label)
    : elements_(std::move(elements)), weights_(std::move(weights)), label_(std::move(label)) {
    if (elements_.empty() || elements_.size() != weights_.size())
        throw std::invalid_argument("group sampler needs matching elements and weights");
}

GroupSampler GroupSampler::diagonalPairs4D(std::vector<Mat> planeMaps, std::vector<double> weights,
                                           std::string label) {
    std::vector<Mat> full;
    for (const Mat& r : planeMaps) {
        if (r.rows() != 2 || r.cols() != 2) throw DimensionError("plane map must be 2x2");
        Mat m(4, 4);
        m << 1 + r(0, 0), r(0, 1), 1 - r(0, 0), -r(0, 1),
             r(1, 0), 1 + r(1, 1), -r(1, 0), 1 - r(1, 1),
             1 - r(0, 0), -r(0, 1), 1 + r(0, 0), r(0, 1),
             -r(1, 0), 1 - r(1, 1), r(1, 0), 1 + r(1, 1);
        full.push_back(0.5 * m);
    }
    GroupSampler g(std::move(full), std::move(weights), std::move(label));
    g.kind_ = Kind::DiagonalPairs4D;
    g.planeMaps_ = std::move(planeMaps);
    return g;
}

Vec GroupSampler::apply(int k, const Vec& x) const {
    if (kind_ == Kind::DiagonalPairs4D) {
        const double a = 0.5 * (x(0) + x(2)), b = 0.5 * (x(1) + x(3));
        Vec d(2);
        d << 0.5 * (x(0) - x(2)), 0.5 * (x(1) - x(3));
        const Vec e = planeMaps_[k] * d;
        Vec out(4);
        out << a + e(0), b + e(1), a - e(0), b - e(1);
        return out;
    }
    return elements_[k] * x;
}

const char* nodeKindName(NodeKind k) {
    switch (k) {
    case NodeKind::Atom: return "heat";
    case NodeKind::Sum: return "sum";
    case NodeKind::Tensor: return "tensor";
    case NodeKind::Compose: return "compose";
    case NodeKind::Bellman: return "bellman";
    case NodeKind::GeomMean: return "gmean";
    case NodeKind::Convolution: return "conv";
    case NodeKind::GroupAverage: return "gavg";
    case NodeKind::TimePower: return "tpow";
    }
    return "?";
}

// ---------------------------------------------------------------- builders

NodePtr makeAtom(GaussianMixtureAtom atom) {
    atom.validate();
    auto node = std::shared_ptr<Node>(new Node());
    node->kind_ = NodeKind::Atom;
    node->dim_ = atom.dim();
    node->atom_ = std::move(atom);
    return node;
}

NodePtr makeKernel(const SymMatrix& A, const Vec& center, double t0, double weight) {
    GaussianMixtureAtom atom;
    atom.A = A;
    atom.terms.push_back({weight, center, t0});
    return makeAtom(std::move(atom));
}

NodePtr makeSum(std::vector<double> coeffs, std::vector<NodePtr> children) {
    if (children.empty() || coeffs.size() != children.size())
        throw std::invalid_argument("sum needs matching coefficients and children");
    for (double c : coeffs)
        if (!(c > 0.0)) throw std::invalid_argument("sum coefficients must be positive");
    for (const auto& c : children)
        if (c->dim() != children[0]->dim()) throw DimensionError("sum children have different dimensions");
    auto node = std::shared_ptr<Node>(new Node());
    node->kind_ = NodeKind::Sum;
    node->dim_ = children[0]->dim();
    node->coeffs_ = std::move(coeffs);
    node->children_ = std::move(children);
    return node;
}

NodePtr makeTensor(NodePtr left, NodePtr right) {
    if (left->dim() + right->dim() > kMaxDim) throw DimensionError("tensor exceeds supported dimension");
    auto node = std::shared_ptr<Node>(new Node());
    node->kind_ = NodeKind::Tensor;
    node->dim_ = left->dim() + right->dim();
    node->children_ = {std::move(left), std::move(right)};
    return node;
}

NodePtr makeCompose(LinearMap L, NodePtr child) {
    if (!L.isSquare()) throw DimensionError("compose needs a square (invertible) map");
    if (L.rows() != child->dim()) throw DimensionError("compose map does not match child dimension");
    L.inverse();  // throws SingularMatrix if not invertible
    auto node = std::shared_ptr<Node>(new Node());
    node->kind_ = NodeKind::Compose;
    node->dim_ = L.cols();
    node->maps_ = {std::move(L)};
    node->children_ = {std::move(child)};
    return node;
}

NodePtr makeBellman(BellmanSpec B, std::vector<NodePtr> children, std::vector<LinearMap> maps) {
    if (static_cast<int>(children.size()) != B.arity())
        throw std::invalid_argument("Bellman arity " + std::to_string(B.arity()) + " but " +
                                    std::to_string(children.size()) + " children");
    int n = children[0]->dim();
    if (!maps.empty()) {
        if (maps.size() != children.size()) throw std::invalid_argument("Bellman maps do not match children");
        n = maps[0].cols();
        for (std::size_t j = 0; j < maps.size(); ++j) {
            if (maps[j].cols() != n) throw DimensionError("Bellman maps have different source dimensions");
            if (maps[j].rows() != children[j]->dim()) throw DimensionError("Bellman map target dimension mismatch");
        }
    } else {
        for (const auto& c : children)
            if (c->dim() != n) throw DimensionError("Bellman children have different dimensions");
    }
    auto node = std::shared_ptr<Node>(new Node());
    node->kind_ = NodeKind::Bellman;
    node->dim_ = n;
    node->bellman_ = std::move(B);
    node->children_ = std::move(children);
    node->maps_ = std::move(maps);
    return node;
}

NodePtr makeGeomMean(std::vector<GeomMeanTerm> terms) {
    if (terms.empty()) throw std::invalid_argument("gmean needs at least one term");
    const int n = terms[0].L.cols();
    auto node = std::shared_ptr<Node>(new Node());
    node->kind_ = NodeKind::GeomMean;
    node->dim_ = n;
    for (auto& term : terms) {
        if (!(term.p >= 0.0)) throw std::invalid_argument("gmean exponents must be nonnegative");
        if (term.L.cols() != n) throw DimensionError("gmean maps have different source dimensions");
        if (term.L.rows() != term.child->dim()) throw DimensionError("gmean map target does not match child");
        if (term.A.dim() != term.L.rows()) throw DimensionError("gmean A_j does not match map target");
        node->coeffs_.push_back(term.p);
        node->maps_.push_back(term.L);
        node->mats_.push_back(term.A);
        node->children_.push_back(term.child);
    }
    return node;
}

NodePtr makeConvolution(double p, double p1, double p2, NodePtr left, NodePtr right, int quadCount) {
    if (!(p > 0.0 && p1 > 0.0 && p2 > 0.0)) throw std::invalid_argument("conv exponents must be positive");
    if (left->dim() != right->dim()) throw DimensionError("conv children have different dimensions");
    const int n = left->dim();
    if (quadCount <= 0) quadCount = n == 1 ? 201 : n == 2 ? 61 : n == 3 ? 25 : 15;
    if (quadCount < 3 || quadCount % 2 == 0) throw std::invalid_argument("conv quadrature count must be odd and >= 3");
    auto node = std::shared_ptr<Node>(new Node());
    node->kind_ = NodeKind::Convolution;
    node->dim_ = n;
    node->convP_ = p;
    node->convP1_ = p1;
    node->convP2_ = p2;
    node->quadCount_ = quadCount;
    node->children_ = {std::move(left), std::move(right)};
    return node;
}

NodePtr makeGroupAverage(std::shared_ptr<const GroupSampler> g, NodePtr child) {
    if (!g || g->size() == 0) throw std::invalid_argument("gavg needs a nonempty group sampler");
    if (g->dim() != child->dim()) throw DimensionError("group dimension does not match child");
    auto node = std::shared_ptr<Node>(new Node());
    node->kind_ = NodeKind::GroupAverage;
    node->dim_ = child->dim();
    node->group_ = std::move(g);
    node->children_ = {std::move(child)};
    return node;
}

NodePtr makeTimePower(double beta, NodePtr child) {
    if (!std::isfinite(beta)) throw std::invalid_argument("tpow exponent must be finite");
    auto node = std::shared_ptr<Node>(new Node());
    node->kind_ = NodeKind::TimePower;
    node->dim_ = child->dim();
    node->beta_ = beta;
    node->children_ = {std::move(child)};
    return node;
}

int nodeCount(const NodePtr& node) {
    int c = 1;
    for (const auto& ch : node->children()) c += nodeCount(ch);
    return c;
}

// ---------------------------------------------------------------- envelopes

namespace {

Envelope boxImage(const Envelope& e, const Mat& m) {
    // image of the box under x -> m x
    const Vec c = 0.5 * (e.lo + e.hi);
    const Vec h = 0.5 * (e.hi - e.lo);
    const Vec mc = m * c;
    const Vec mh = m.cwiseAbs() * h;
    return {mc - mh, mc + mh, e.width};
}

double opNorm(const Mat& m) {
    Eigen::JacobiSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

void unionInto(Envelope& acc, const Envelope& e) {
    acc.lo = acc.lo.cwiseMin(e.lo);
    acc.hi = acc.hi.cwiseMax(e.hi);
    acc.width = std::max(acc.width, e.width);
}

// Envelope of prod_j (u_j o L_j)^{p_j}, via the gaussian precision sum.
Envelope productEnvelope(int n, const std::vector<double>& p, const std::vector<Mat>& L,
                         const std::vector<Envelope>& ch) {
    Mat P = Mat::Zero(n, n);
    for (std::size_t j = 0; j < ch.size(); ++j)
        P += p[j] / (ch[j].width * ch[j].width) * L[j].transpose() * L[j];
    const SymMatrix Ps(P);
    const double lmin = Ps.minEigenvalue();
    if (!(lmin > 1e-14 * std::max(1.0, Ps.maxEigenvalue()))) {
        // not localized; fall back to a union of pseudo-inverse images
        Envelope acc;
        bool first = true;
        for (std::size_t j = 0; j < ch.size(); ++j) {
            const Mat pinv = L[j].completeOrthogonalDecomposition().pseudoInverse();
            Envelope e = boxImage(ch[j], pinv);
            e.width = ch[j].width * opNorm(pinv) / std::sqrt(std::max(p[j], 1e-3));
            if (first) acc = e, first = false;
            else unionInto(acc, e);
        }
        return acc;
    }
    const Mat Pinv = P.inverse();
    Vec c = Vec::Zero(n), h = Vec::Zero(n);
    for (std::size_t j = 0; j < ch.size(); ++j) {
        const Mat G = p[j] / (ch[j].width * ch[j].width) * Pinv * L[j].transpose();
        c += G * (0.5 * (ch[j].lo + ch[j].hi));
        h += G.cwiseAbs() * (0.5 * (ch[j].hi - ch[j].lo));
    }
    return {c - h, c + h, 1.0 / std::sqrt(lmin)};
}

}  // namespace

Envelope Node::envelope(double t) const {
    switch (kind_) {
    case NodeKind::Atom: {
        const double lam = atom_->A.inverse().maxEigenvalue();
        Envelope e{atom_->terms[0].center, atom_->terms[0].center, 0.0};
        for (const auto& term : atom_->terms) {
            e.lo = e.lo.cwiseMin(term.center);
            e.hi = e.hi.cwiseMax(term.center);
            e.width = std::max(e.width, std::sqrt(2.0 * std::max(t + term.t0, 1e-12) * lam));
        }
        return e;
    }
    case NodeKind::Sum: {
        Envelope acc = children_[0]->envelope(t);
        for (std::size_t i = 1; i < children_.size(); ++i) unionInto(acc, children_[i]->envelope(t));
        return acc;
    }
    case NodeKind::Tensor: {
        const Envelope a = children_[0]->envelope(t), b = children_[1]->envelope(t);
        Envelope e;
        e.lo = Vec(dim_);
        e.hi = Vec(dim_);
        e.lo << a.lo, b.lo;
        e.hi << a.hi, b.hi;
        e.width = std::max(a.width, b.width);
        return e;
    }
    case NodeKind::Compose: {
        const Mat inv = maps_[0].inverse().mat();
        Envelope e = boxImage(children_[0]->envelope(t), inv);
        e.width *= opNorm(inv);
        return e;
    }
    case NodeKind::Bellman: {
        std::vector<Envelope> ch;
        for (const auto& c : children_) ch.push_back(c->envelope(t));
        const auto fam = bellman_->family();
        const bool product = fam == BellmanSpec::Family::WeightedGeomMean || fam == BellmanSpec::Family::Power;
        if (product || !maps_.empty()) {
            std::vector<double> p;
            std::vector<Mat> L;
            for (std::size_t j = 0; j < ch.size(); ++j) {
                p.push_back(product ? std::max(bellman_->params()[fam == BellmanSpec::Family::Power ? 0 : j], 1e-3) : 1.0);
                L.push_back(maps_.empty() ? Mat(Mat::Identity(dim_, dim_)) : maps_[j].mat());
            }
            if (product && maps_.empty() && fam == BellmanSpec::Family::WeightedGeomMean) {
                // zero exponents would drop localization; treat as unit weight
                for (double& v : p) v = std::max(v, 1e-3);
            }
            return productEnvelope(dim_, p, L, ch);
        }
        Envelope acc = ch[0];
        for (std::size_t j = 1; j < ch.size(); ++j) unionInto(acc, ch[j]);
        if (fam == BellmanSpec::Family::LqNormP) acc.width /= std::sqrt(bellman_->params()[0]);
        return acc;
    }
    case NodeKind::GeomMean: {
        std::vector<Envelope> ch;
        std::vector<Mat> L;
        for (std::size_t j = 0; j < children_.size(); ++j) {
            ch.push_back(children_[j]->envelope(t));
            L.push_back(maps_[j].mat());
        }
        return productEnvelope(dim_, coeffs_, L, ch);
    }
    case NodeKind::Convolution: {
        const Envelope a = children_[0]->envelope(t), b = children_[1]->envelope(t);
        const double s1 = a.width * std::sqrt(convP1_), s2 = b.width * std::sqrt(convP2_);
        return {a.lo + b.lo, a.hi + b.hi, std::sqrt(s1 * s1 + s2 * s2) / std::sqrt(convP_)};
    }
    case NodeKind::GroupAverage: {
        const Envelope c = children_[0]->envelope(t);
        Envelope acc = boxImage(c, group_->element(0).transpose());
        for (int k = 1; k < group_->size(); ++k) unionInto(acc, boxImage(c, group_->element(k).transpose()));
        return acc;
    }
    case NodeKind::TimePower: return children_[0]->envelope(t);
    }
    return {};
}

// ---------------------------------------------------------------- evaluation

Jet2 pullback(const Jet2& j, const Mat& L) {
    Jet2 out;
    out.value = j.value;
    out.dt = j.dt;
    out.grad = L.transpose() * j.grad;
    out.hess = L.transpose() * j.hess * L;
    return out;
}

SymMatrix logHessian(const Jet2& j) {
    return SymMatrix(Mat(j.hess / j.value - j.grad * j.grad.transpose() / (j.value * j.value)));
}

Vec logGradient(const Jet2& j) { return j.grad / j.value; }

namespace {

constexpr double kConvReach = 10.0;

Jet2 jetRec(const Node& node, double t, const Vec& x);
double valRec(const Node& node, double t, const Vec& x);

template <class F>
auto withPath(const Node& node, int index, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const EvalError& e) {
        throw e.under(std::string(nodeKindName(node.kind())) + "[" + std::to_string(index) + "]");
    }
}

// Trapezoid grid for the convolution variable y, restricted to where both
// factors are non-negligible. Returns false if the region is empty.
bool convGrid(const Node& node, double t, const Vec& x, Vec& lo, Vec& step, int& count) {
    const Envelope a = node.children()[0]->envelope(t), b = node.children()[1]->envelope(t);
    const double s1 = kConvReach * a.width * std::sqrt(node.convP1());
    const double s2 = kConvReach * b.width * std::sqrt(node.convP2());
    const int n = node.dim();
    count = node.quadCount();
    lo = Vec(n);
    step = Vec(n);
    for (int d = 0; d < n; ++d) {
        const double l = std::max(x(d) - a.hi(d) - s1, b.lo(d) - s2);
        const double h = std::min(x(d) - a.lo(d) + s1, b.hi(d) + s2);
        if (!(h > l)) return false;
        lo(d) = l;
        step(d) = (h - l) / (count - 1);
    }
    return true;
}

template <class Body>
void forEachGridPoint(int n, int count, const Vec& lo, const Vec& step, Body&& body) {
    std::vector<int> idx(n, 0);
    Vec y(n);
    for (;;) {
        double w = 1.0;
        for (int d = 0; d < n; ++d) {
            y(d) = lo(d) + idx[d] * step(d);
            w *= step(d) * ((idx[d] == 0 || idx[d] == count - 1) ? 0.5 : 1.0);
        }
        body(y, w);
        int d = n - 1;
        while (d >= 0 && ++idx[d] == count) idx[d--] = 0;
        if (d < 0) break;
    }
}

Jet2 bellmanCombine(const BellmanSpec& B, const std::vector<Jet2>& js, int n) {
    const int m = static_cast<int>(js.size());
    Vec v(m);
    for (int j = 0; j < m; ++j) {
        if (!(js[j].value >= kValueFloor)) throw EvalError("Bellman argument below value floor");
        v(j) = js[j].value;
    }
    const Vec g = B.gradient(v);
    const Mat H = B.hessian(v);
    Jet2 out = Jet2::zero(n);
    out.value = B.value(v);
    for (int j = 0; j < m; ++j) {
        out.dt += g(j) * js[j].dt;
        out.grad += g(j) * js[j].grad;
        out.hess += g(j) * js[j].hess;
        for (int k = 0; k < m; ++k) out.hess += H(j, k) * js[j].grad * js[k].grad.transpose();
    }
    return out;
}

Jet2 jetRec(const Node& node, double t, const Vec& x) {
    const int n = node.dim();
    switch (node.kind()) {
    case NodeKind::Atom: {
        Jet2 out = Jet2::zero(n);
        for (const auto& term : node.atom().terms) {
            const Jet2 h = heatKernelJet(node.atom().A, t, x, term.center, term.t0);
            out.value += term.weight * h.value;
            out.dt += term.weight * h.dt;
            out.grad += term.weight * h.grad;
            out.hess += term.weight * h.hess;
        }
        return out;
    }
    case NodeKind::Sum: {
        Jet2 out = Jet2::zero(n);
        for (std::size_t i = 0; i < node.children().size(); ++i) {
            const Jet2 c = withPath(node, int(i), [&] { return jetRec(*node.children()[i], t, x); });
            const double k = node.coeffs()[i];
            out.value += k * c.value;
            out.dt += k * c.dt;
            out.grad += k * c.grad;
            out.hess += k * c.hess;
        }
        return out;
    }
    case NodeKind::Tensor: {
        const int n1 = node.children()[0]->dim(), n2 = n - n1;
        const Jet2 a = withPath(node, 0, [&] { return jetRec(*node.children()[0], t, x.head(n1)); });
        const Jet2 b = withPath(node, 1, [&] { return jetRec(*node.children()[1], t, x.tail(n2)); });
        Jet2 out = Jet2::zero(n);
        out.value = a.value * b.value;
        out.dt = a.dt * b.value + a.value * b.dt;
        out.grad << a.grad * b.value, a.value * b.grad;
        out.hess.topLeftCorner(n1, n1) = a.hess * b.value;
        out.hess.bottomRightCorner(n2, n2) = a.value * b.hess;
        out.hess.topRightCorner(n1, n2) = a.grad * b.grad.transpose();
        out.hess.bottomLeftCorner(n2, n1) = b.grad * a.grad.transpose();
        return out;
    }
    case NodeKind::Compose: {
        const Mat& L = node.maps()[0].mat();
        const Jet2 c = withPath(node, 0, [&] { return jetRec(*node.children()[0], t, Vec(L * x)); });
        return pullback(c, L);
    }
    case NodeKind::Bellman: {
        std::vector<Jet2> js;
        for (std::size_t j = 0; j < node.children().size(); ++j) {
            if (node.hasMaps()) {
                const Mat& L = node.maps()[j].mat();
                js.push_back(pullback(
                    withPath(node, int(j), [&] { return jetRec(*node.children()[j], t, Vec(L * x)); }), L));
            } else {
                js.push_back(withPath(node, int(j), [&] { return jetRec(*node.children()[j], t, x); }));
            }
        }
        return withPath(node, 0, [&] { return bellmanCombine(node.bellman(), js, n); });
    }
    case NodeKind::GeomMean: {
        double logv = 0.0, dtlog = 0.0;
        Vec glog = Vec::Zero(n);
        Mat hlog = Mat::Zero(n, n);
        for (std::size_t j = 0; j < node.children().size(); ++j) {
            const double p = node.coeffs()[j];
            if (p == 0.0) continue;
            const Mat& L = node.maps()[j].mat();
            const Jet2 c = withPath(node, int(j), [&] { return jetRec(*node.children()[j], t, Vec(L * x)); });
            if (!(c.value >= kValueFloor)) throw EvalError("gmean factor below value floor");
            logv += p * std::log(c.value);
            dtlog += p * c.dt / c.value;
            glog += p * L.transpose() * (c.grad / c.value);
            hlog += p * L.transpose() * logHessian(c).mat() * L;
        }
        Jet2 out;
        out.value = std::exp(logv);
        out.dt = out.value * dtlog;
        out.grad = out.value * glog;
        out.hess = out.value * (hlog + glog * glog.transpose());
        return out;
    }
    case NodeKind::Convolution: {
        const double p = node.convP(), p1 = node.convP1(), p2 = node.convP2();
        Vec lo, step;
        int count;
        Jet2 C = Jet2::zero(n);
        if (convGrid(node, t, x, lo, step, count)) {
            const Node& left = *node.children()[0];
            const Node& right = *node.children()[1];
            forEachGridPoint(n, count, lo, step, [&](const Vec& y, double w) {
                const Jet2 a = withPath(node, 0, [&] { return jetRec(left, t, Vec(x - y)); });
                const Jet2 b = withPath(node, 1, [&] { return jetRec(right, t, y); });
                if (!(a.value > 0.0) || !(b.value > 0.0)) return;
                const double f1 = std::pow(a.value, 1.0 / p1), f2 = std::pow(b.value, 1.0 / p2);
                const double wf = w * f1 * f2;
                if (wf == 0.0) return;
                const Vec da = a.grad / (p1 * a.value);
                C.value += wf;
                C.dt += wf * (a.dt / (p1 * a.value) + b.dt / (p2 * b.value));
                C.grad += wf * da;
                C.hess += wf * (logHessian(a).mat() / p1 + da * da.transpose());
            });
        }
        Jet2 out = Jet2::zero(n);
        if (!(C.value > 0.0)) return out;
        const double cp1 = std::pow(C.value, p - 1.0);
        out.value = cp1 * C.value;
        out.dt = p * cp1 * C.dt;
        out.grad = p * cp1 * C.grad;
        out.hess = p * cp1 * C.hess + p * (p - 1.0) * cp1 / C.value * C.grad * C.grad.transpose();
        return out;
    }
    case NodeKind::GroupAverage: {
        const GroupSampler& g = node.group();
        Jet2 out = Jet2::zero(n);
        for (int k = 0; k < g.size(); ++k) {
            const Jet2 c = pullback(withPath(node, 0, [&] { return jetRec(*node.children()[0], t, g.apply(k, x)); }),
                                    g.element(k));
            const double w = g.weight(k);
            out.value += w * c.value;
            out.dt += w * c.dt;
            out.grad += w * c.grad;
            out.hess += w * c.hess;
        }
        return out;
    }
    case NodeKind::TimePower: {
        const Jet2 c = withPath(node, 0, [&] { return jetRec(*node.children()[0], t, x); });
        const double beta = node.beta();
        const double f = std::pow(t, beta);
        Jet2 out;
        out.value = f * c.value;
        out.dt = f * (c.dt + beta / t * c.value);
        out.grad = f * c.grad;
        out.hess = f * c.hess;
        return out;
    }
    }
    return Jet2::zero(n);
}

double valRec(const Node& node, double t, const Vec& x) {
    const int n = node.dim();
    switch (node.kind()) {
    case NodeKind::Atom: {
        double v = 0.0;
        for (const auto& term : node.atom().terms)
            v += term.weight * heatKernelValue(node.atom().A, t, x, term.center, term.t0);
        return v;
    }
    case NodeKind::Sum: {
        double v = 0.0;
        for (std::size_t i = 0; i < node.children().size(); ++i)
            v += node.coeffs()[i] * valRec(*node.children()[i], t, x);
        return v;
    }
    case NodeKind::Tensor: {
        const int n1 = node.children()[0]->dim();
        return valRec(*node.children()[0], t, x.head(n1)) * valRec(*node.children()[1], t, x.tail(n - n1));
    }
    case NodeKind::Compose: return valRec(*node.children()[0], t, Vec(node.maps()[0].mat() * x));
    case NodeKind::Bellman: {
        const int m = static_cast<int>(node.children().size());
        Vec v(m);
        for (int j = 0; j < m; ++j)
            v(j) = node.hasMaps() ? valRec(*node.children()[j], t, Vec(node.maps()[j].mat() * x))
                                  : valRec(*node.children()[j], t, x);
        if (v.minCoeff() <= 0.0) {
            // tails: the built-ins extend continuously to the boundary
            const auto fam = node.bellman().family();
            if (fam == BellmanSpec::Family::HarmonicSum || fam == BellmanSpec::Family::WeightedGeomMean) {
                bool anyZeroWithWeight = false;
                for (int j = 0; j < m; ++j)
                    if (v(j) <= 0.0 && (fam == BellmanSpec::Family::HarmonicSum || node.bellman().params()[j] > 0.0))
                        anyZeroWithWeight = true;
                if (anyZeroWithWeight) return 0.0;
                for (int j = 0; j < m; ++j)
                    if (v(j) <= 0.0) v(j) = 1.0;  // zero exponent factor
            } else {
                for (int j = 0; j < m; ++j) v(j) = std::max(v(j), 0.0);
                if (v.maxCoeff() == 0.0) return 0.0;
                if (fam == BellmanSpec::Family::Linear) return node.bellman().value(v);
                if (fam == BellmanSpec::Family::LqNormP && node.bellman().params()[1] < 0.0) return 0.0;
            }
        }
        return node.bellman().value(v);
    }
    case NodeKind::GeomMean: {
        double logv = 0.0;
        for (std::size_t j = 0; j < node.children().size(); ++j) {
            const double p = node.coeffs()[j];
            if (p == 0.0) continue;
            const double c = valRec(*node.children()[j], t, Vec(node.maps()[j].mat() * x));
            if (!(c > 0.0)) return 0.0;
            logv += p * std::log(c);
        }
        return std::exp(logv);
    }
    case NodeKind::Convolution: {
        Vec lo, step;
        int count;
        if (!convGrid(node, t, x, lo, step, count)) return 0.0;
        double C = 0.0;
        const double p1 = node.convP1(), p2 = node.convP2();
        forEachGridPoint(n, count, lo, step, [&](const Vec& y, double w) {
            const double a = valRec(*node.children()[0], t, Vec(x - y));
            if (!(a > 0.0)) return;
            const double b = valRec(*node.children()[1], t, y);
            if (!(b > 0.0)) return;
            C += w * std::pow(a, 1.0 / p1) * std::pow(b, 1.0 / p2);
        });
        return C > 0.0 ? std::pow(C, node.convP()) : 0.0;
    }
    case NodeKind::GroupAverage: {
        const GroupSampler& g = node.group();
        double v = 0.0;
        for (int k = 0; k < g.size(); ++k) v += g.weight(k) * valRec(*node.children()[0], t, g.apply(k, x));
        return v;
    }
    case NodeKind::TimePower: return std::pow(t, node.beta()) * valRec(*node.children()[0], t, x);
    }
    return 0.0;
}

}  // namespace

Jet2 evalJet(const NodePtr& node, double t, const Vec& x) {
    if (!(t > 0.0)) throw EvalError("evaluation time must be positive");
    if (x.size() != node->dim()) throw DimensionError("evaluation point has wrong dimension");
    Jet2 j = jetRec(*node, t, x);
    if (!(j.value >= kValueFloor) || !std::isfinite(j.value))
        throw EvalError("value below floor 1e-300 (point outside effective support)");
    j.hess = (0.5 * (j.hess + j.hess.transpose())).eval();
    return j;
}

double evalValue(const NodePtr& node, double t, const Vec& x) {
    if (!(t > 0.0)) throw EvalError("evaluation time must be positive");
    if (x.size() != node->dim()) throw DimensionError("evaluation point has wrong dimension");
    return valRec(*node, t, x);
}

}  // namespace monoflow
