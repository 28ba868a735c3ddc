#include "monoflow/ou.hpp"

#include "monoflow/quad.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace monoflow {

OUField OUField::exponentials(double sigma, std::vector<ExpTerm> terms) {
    if (!(sigma > 0.0)) throw std::invalid_argument("OU sigma must be positive");
    if (terms.empty()) throw std::invalid_argument("OU field needs at least one term");
    OUField f;
    f.sigma_ = sigma;
    f.n_ = static_cast<int>(terms[0].b.size());
    for (const auto& t : terms) {
        if (!(t.c > 0.0)) throw std::invalid_argument("OU term weights must be positive");
        if (t.b.size() != f.n_) throw DimensionError("OU terms have different dimensions");
    }
    f.terms_ = std::move(terms);
    return f;
}

OUField OUField::generic(double sigma, int n, std::function<double(const Vec&)> fn, int ghNodes) {
    if (!(sigma > 0.0)) throw std::invalid_argument("OU sigma must be positive");
    if (n < 1 || n > kMaxDim) throw DimensionError("OU field dimension out of range");
    OUField f;
    f.sigma_ = sigma;
    f.n_ = n;
    f.f_ = std::move(fn);
    f.gh_ = ghNodes;
    return f;
}

double OUField::base(const Vec& x) const { return flow(0.0, x); }

double OUField::flow(double s, const Vec& x) const {
    if (s < 0.0) throw std::invalid_argument("OU flow time must be >= 0");
    if (f_) return s == 0.0 ? f_(x) : ouFlowMehler(f_, n_, sigma_, s, x, gh_);
    return jet(s, x).value;
}

Jet2 OUField::jet(double s, const Vec& x) const {
    if (f_) throw std::logic_error("jets are available for exponential OU fields only");
    if (x.size() != n_) throw DimensionError("OU point has wrong dimension");
    Jet2 j = Jet2::zero(n_);
    const double es = std::exp(-s), e2s = std::exp(-2.0 * s);
    for (const auto& t : terms_) {
        const double bx = t.b.dot(x), bb = t.b.squaredNorm();
        const double phi = es * bx + sigma_ * (1.0 - e2s) * bb / 2.0;
        const double v = t.c * std::exp(phi);
        j.value += v;
        j.dt += v * (-es * bx + sigma_ * e2s * bb);
        j.grad += v * es * t.b;
        j.hess += v * e2s * (t.b * t.b.transpose());
    }
    return j;
}

OUField OUField::advanced(double s) const {
    if (!f_) {
        std::vector<ExpTerm> ts;
        for (const auto& t : terms_) {
            ExpTerm e;
            e.b = std::exp(-s) * t.b;
            e.c = t.c * std::exp(sigma_ * (1.0 - std::exp(-2.0 * s)) * t.b.squaredNorm() / 2.0);
            ts.push_back(e);
        }
        return exponentials(sigma_, ts);
    }
    const OUField self = *this;
    return generic(
        sigma_, n_, [self, s](const Vec& x) { return self.flow(s, x); }, gh_);
}

double ouFlowMehler(const std::function<double(const Vec&)>& f, int n, double sigma, double s, const Vec& x,
                    int m) {
    if (s == 0.0) return f(x);
    const double a = std::exp(-s);
    const double spread = std::sqrt(sigma * (1.0 - std::exp(-2.0 * s)));
    return gaussianExpectation([&](const Vec& y) { return f(a * x + spread * y); }, n, 1.0, m);
}

double gaussianDensity(double sigma, const Vec& x) {
    const double n = static_cast<double>(x.size());
    return std::pow(2.0 * std::numbers::pi * sigma, -n / 2.0) * std::exp(-x.squaredNorm() / (2.0 * sigma));
}

double gaussianIntegral(const std::function<double(const Vec&)>& g, int n, double sigma, int m) {
    return gaussianExpectation(g, n, std::sqrt(sigma), m);
}

double heatValueFromOU(const std::function<double(double, const Vec&)>& U, int n, double sigma, double tau,
                       const Vec& y) {
    if (!(tau > 0.5)) throw std::invalid_argument("heat time must exceed 1/2 (OU time t > 0)");
    const double t = 0.5 * std::log(2.0 * tau);
    const Vec x = std::exp(-t) * y;
    return std::exp(-n * t) * std::exp(-x.squaredNorm() / (2.0 * sigma)) * U(t, x);
}

double ouValueFromHeat(const std::function<double(double, const Vec&)>& u, int n, double sigma, double t,
                       const Vec& x) {
    return std::exp(n * t) * std::exp(x.squaredNorm() / (2.0 * sigma)) * u(heatTimeOf(t), std::exp(t) * x);
}

Jet2 ouJetFromHeat(const Jet2& heat, double sigma, double t, const Vec& x) {
    const int n = static_cast<int>(x.size());
    const double et = std::exp(t), e2t = std::exp(2.0 * t);
    // w(t, x) = u(e^{2t}/2, e^t x)
    const double w = heat.value;
    const Vec gw = et * heat.grad;
    const double wt = e2t * heat.dt + x.dot(gw);
    const Mat hw = e2t * heat.hess;
    const double E = std::exp(n * t + x.squaredNorm() / (2.0 * sigma));
    const Vec xs = x / sigma;
    Jet2 j;
    j.value = E * w;
    j.dt = E * (n * w + wt);
    j.grad = E * (xs * w + gw);
    j.hess = E * ((Mat::Identity(n, n) / sigma + xs * xs.transpose()) * w + xs * gw.transpose() +
                  gw * xs.transpose() + hw);
    return j;
}

double ouResidual(const Jet2& j, double sigma, const Vec& x) {
    return j.dt - (sigma * j.hess.trace() - x.dot(j.grad));
}

NodePtr heatAtomOfOUField(const OUField& f) {
    if (!f.closedForm()) throw std::invalid_argument("only exponential OU fields have a heat atom");
    const double s = f.sigma();
    const int n = f.dim();
    GaussianMixtureAtom atom;
    atom.A = SymMatrix::scalar(n, 1.0 / s);
    for (const auto& t : f.terms()) {
        MixtureTerm m;
        m.weight = t.c * std::exp(s * t.b.squaredNorm() / 2.0) * std::pow(2.0 * std::numbers::pi * s, n / 2.0);
        m.center = s * t.b;
        m.t0 = 0.0;
        atom.terms.push_back(m);
    }
    return makeAtom(atom);
}

OUCertificate ouFieldCertificate(const OUField& f) {
    OUCertificate c;
    c.sigma = f.sigma();
    c.kind = CertKind::Exact;
    c.logConvex = f.closedForm();
    return c;
}

OUCertificate ouCertify(const std::vector<OUCertificate>& children, const BellmanSpec& B, double lambda) {
    const std::string rule = "OU-lambda-concavity";
    if (static_cast<int>(children.size()) != B.arity())
        throw RuleError(rule, "B arity does not match the number of inputs");
    if (!B.increasing()) throw RuleError(rule, "B must be increasing in each variable");
    const double sigma = children[0].sigma;
    for (std::size_t j = 0; j < children.size(); ++j) {
        if (children[j].kind == CertKind::Sub)
            throw RuleError(rule, "input " + std::to_string(j + 1) + " is a subsolution");
        if (std::abs(children[j].sigma - sigma) > 1e-12 * sigma)
            throw RuleError(rule, "inputs have different OU parameters");
        if (lambda > 0.0 && !children[j].logConvex)
            throw RuleError(rule, "input " + std::to_string(j + 1) + " is not known to be log-convex");
    }
    const LambdaCheck lc = checkLambdaConcavity(B, lambda, positiveSamples(B.arity(), 256, 0));
    if (!lc.ok)
        throw RuleError(rule,
                        "D^2B <= lambda diag(d_jB/x_j) fails for lambda = " + std::to_string(lambda) +
                            " (worst eigenvalue " + std::to_string(lc.worstEigenvalue) + ")",
                        "", -lc.worstEigenvalue);
    OUCertificate out;
    out.sigma = sigma / (1.0 + lambda);
    out.kind = CertKind::Super;
    bool allLogConvex = true;
    for (const auto& c : children) allLogConvex = allLogConvex && c.logConvex;
    out.logConvex = allLogConvex && B.thetaConvex();
    return out;
}

Jet2 bellmanJet(const BellmanSpec& B, const std::vector<Jet2>& cs) {
    const int m = static_cast<int>(cs.size());
    if (m != B.arity()) throw DimensionError("Bellman arity mismatch");
    const int n = cs[0].dim();
    Vec v(m);
    for (int j = 0; j < m; ++j) v(j) = cs[j].value;
    const Vec g = B.gradient(v);
    const Mat h = B.hessian(v);
    Jet2 out = Jet2::zero(n);
    out.value = B.value(v);
    for (int j = 0; j < m; ++j) {
        out.dt += g(j) * cs[j].dt;
        out.grad += g(j) * cs[j].grad;
        out.hess += g(j) * cs[j].hess;
        for (int k = 0; k < m; ++k) out.hess += h(j, k) * cs[j].grad * cs[k].grad.transpose();
    }
    return out;
}

}  // namespace monoflow
