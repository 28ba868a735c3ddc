#include "monoflow/certify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

namespace monoflow {

const char* certKindName(CertKind k) {
    switch (k) {
    case CertKind::Super: return "super";
    case CertKind::Sub: return "sub";
    case CertKind::Exact: return "exact";
    }
    return "?";
}

const char* blStatusName(BLDatumResult::Status s) {
    switch (s) {
    case BLDatumResult::Status::Equality: return "equality";
    case BLDatumResult::Status::Inequality: return "inequality";
    case BLDatumResult::Status::Fail: return "fail";
    }
    return "?";
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

double matScale(const SymMatrix& s) { return std::max(1.0, s.mat().cwiseAbs().maxCoeff()); }

bool sameMatrix(const SymMatrix& a, const SymMatrix& b, double rel = 1e-12) {
    return a.dim() == b.dim() && a.maxAbsDiff(b) <= rel * std::max(matScale(a), matScale(b));
}

// Among the candidates, the first one that dominates every K (PSD order).
std::optional<SymMatrix> commonUpperBound(const std::vector<SymMatrix>& ks, const std::vector<SymMatrix>& candidates) {
    for (const auto& c : candidates) {
        bool ok = true;
        for (const auto& k : ks)
            if (!psdLeq(k, c, kPsdTol)) {
                ok = false;
                break;
            }
        if (ok) return c;
    }
    return std::nullopt;
}

struct Pending {
    std::string rule;
    double requiredBeta = 0.0;
    std::function<Certificate(double beta, const std::string& path)> finalize;
};

struct Derived {
    Certificate cert;
    std::optional<Pending> pending;
};

std::string childPath(const std::string& path, const Node& node, std::size_t i) {
    const std::string seg = std::string(nodeKindName(node.kind())) + "[" + std::to_string(i) + "]";
    return path.empty() ? seg : path + "/" + seg;
}

Derived derive(const NodePtr& node, const std::string& path);

// Certificates of the children; pending obligations may only be discharged by tpow.
std::vector<Certificate> settledChildren(const Node& node, const std::string& path) {
    std::vector<Certificate> out;
    for (std::size_t i = 0; i < node.children().size(); ++i) {
        const std::string cp = childPath(path, node, i);
        Derived d = derive(node.children()[i], cp);
        if (d.pending)
            throw RuleError(d.pending->rule,
                            "needs tpow(beta) with beta >= " + fmt(d.pending->requiredBeta) + " directly above it",
                            cp);
        out.push_back(std::move(d.cert));
    }
    return out;
}

bool superLike(CertKind k) { return k == CertKind::Super || k == CertKind::Exact; }
bool subLike(CertKind k) { return k == CertKind::Sub || k == CertKind::Exact; }

CertKind combineKinds(const std::vector<Certificate>& cs, const std::string& rule, const std::string& path) {
    bool allExact = true, allSuper = true, allSub = true;
    for (const auto& c : cs) {
        allExact = allExact && c.kind == CertKind::Exact;
        allSuper = allSuper && superLike(c.kind);
        allSub = allSub && subLike(c.kind);
    }
    if (allExact) return CertKind::Exact;
    if (allSuper) return CertKind::Super;
    if (allSub) return CertKind::Sub;
    throw RuleError(rule, "mixed super and sub children", path);
}

void mergeMeta(Certificate& out, const std::vector<Certificate>& cs, const std::string& rule) {
    for (const auto& c : cs) {
        out.decouples = out.decouples && c.decouples;
        out.rules.insert(out.rules.end(), c.rules.begin(), c.rules.end());
    }
    out.rules.push_back(rule);
}

void requireSuperInputs(const std::vector<Certificate>& cs, const std::string& rule, const std::string& path) {
    for (std::size_t j = 0; j < cs.size(); ++j)
        if (!superLike(cs[j].kind))
            throw RuleError(rule, "Bellman and geometric-mean rules accept only super or exact inputs; child " +
                                      std::to_string(j + 1) + " is sub",
                            path);
}

Derived deriveAtom(const Node& node) {
    Certificate c;
    c.n = node.dim();
    c.diffusion = node.atom().A;
    c.kind = CertKind::Exact;
    c.liYau = node.atom().A;
    c.rules.push_back("atom");
    return {c, std::nullopt};
}

Derived deriveSum(const Node& node, const std::string& path) {
    const auto cs = settledChildren(node, path);
    const std::string rule = "R1-sum";
    for (std::size_t i = 1; i < cs.size(); ++i)
        if (!sameMatrix(cs[i].diffusion, cs[0].diffusion))
            throw RuleError(rule,
                            "diffusion matrices differ (max entry difference " +
                                fmt(cs[i].diffusion.maxAbsDiff(cs[0].diffusion)) + " between child 1 and child " +
                                std::to_string(i + 1) + ")",
                            path);
    Certificate out;
    out.n = node.dim();
    out.diffusion = cs[0].diffusion;
    out.kind = combineKinds(cs, rule, path);
    std::vector<SymMatrix> ks;
    bool all = true;
    for (const auto& c : cs) {
        if (!c.liYau) all = false;
        else ks.push_back(*c.liYau);
    }
    if (all) {
        std::vector<SymMatrix> cand = ks;
        cand.push_back(out.diffusion);
        out.liYau = commonUpperBound(ks, cand);
    }
    mergeMeta(out, cs, rule);
    return {out, std::nullopt};
}

Derived deriveTensor(const Node& node, const std::string& path) {
    const auto cs = settledChildren(node, path);
    const std::string rule = "R2-tensor";
    Certificate out;
    out.n = node.dim();
    out.diffusion = directSum(cs[0].diffusion, cs[1].diffusion);
    out.kind = combineKinds(cs, rule, path);
    if (cs[0].liYau && cs[1].liYau) out.liYau = directSum(*cs[0].liYau, *cs[1].liYau);
    mergeMeta(out, cs, rule);
    return {out, std::nullopt};
}

Derived deriveCompose(const Node& node, const std::string& path) {
    const auto cs = settledChildren(node, path);
    const LinearMap& L = node.maps()[0];
    Certificate out = cs[0];
    out.n = node.dim();
    out.diffusion = congruence(L, cs[0].diffusion);
    if (cs[0].liYau) out.liYau = congruence(L, *cs[0].liYau);
    out.rules.push_back("R3-compose");
    return {out, std::nullopt};
}

Derived deriveGroupAverage(const Node& node, const std::string& path) {
    const auto cs = settledChildren(node, path);
    const std::string rule = "GA-group-average";
    const GroupSampler& g = node.group();
    const SymMatrix& M = cs[0].diffusion;
    for (int k = 0; k < g.size(); ++k) {
        const SymMatrix img = congruence(LinearMap(g.element(k)), M);
        if (!sameMatrix(img, M, 1e-10))
            throw RuleError(rule,
                            "group element " + std::to_string(k + 1) + " does not preserve the diffusion matrix (defect " +
                                fmt(img.maxAbsDiff(M)) + ")",
                            path);
    }
    Certificate out = cs[0];
    out.liYau.reset();
    if (cs[0].liYau) {
        std::vector<SymMatrix> imgs;
        for (int k = 0; k < g.size(); ++k) imgs.push_back(congruence(LinearMap(g.element(k)), *cs[0].liYau));
        out.liYau = commonUpperBound(imgs, {*cs[0].liYau, M});
    }
    out.rules.push_back(rule);
    return {out, std::nullopt};
}

Derived deriveTimePower(const Node& node, const std::string& path) {
    const std::string rule = "TP-time-power";
    const std::string cp = childPath(path, node, 0);
    Derived d = derive(node.children()[0], cp);
    const double beta = node.beta();
    if (d.pending) {
        const double req = d.pending->requiredBeta;
        if (beta < req - 1e-12)
            throw RuleError(d.pending->rule,
                            "time power " + fmt(beta) + " is below the required " + fmt(req), path, beta - req);
        Certificate c = d.pending->finalize(beta, path);
        c.rules.push_back(rule);
        return {c, std::nullopt};
    }
    Certificate c = d.cert;
    if (beta > 0.0) {
        if (c.kind == CertKind::Sub)
            throw RuleError(rule, "positive time power cannot be applied to a subsolution", path, beta);
        c.kind = CertKind::Super;
    } else if (beta < 0.0) {
        if (c.kind == CertKind::Super)
            throw RuleError(rule, "negative time power cannot be applied to a supersolution", path, beta);
        c.kind = CertKind::Sub;
    }
    c.timePower += beta;
    c.rules.push_back(rule);
    return {c, std::nullopt};
}

Derived deriveBellman(const Node& node, const std::string& path);
Derived deriveGeomMean(const Node& node, const std::string& path);
Derived deriveConvolution(const Node& node, const std::string& path);

Derived derive(const NodePtr& np, const std::string& path) {
    const Node& node = *np;
    switch (node.kind()) {
    case NodeKind::Atom: return deriveAtom(node);
    case NodeKind::Sum: return deriveSum(node, path);
    case NodeKind::Tensor: return deriveTensor(node, path);
    case NodeKind::Compose: return deriveCompose(node, path);
    case NodeKind::Bellman: return deriveBellman(node, path);
    case NodeKind::GeomMean: return deriveGeomMean(node, path);
    case NodeKind::Convolution: return deriveConvolution(node, path);
    case NodeKind::GroupAverage: return deriveGroupAverage(node, path);
    case NodeKind::TimePower: return deriveTimePower(node, path);
    }
    throw RuleError("internal", "unknown node kind", path);
}

// ---------------------------------------------------------------- Bellman rules

Derived deriveGamma(const Node& node, const std::vector<Certificate>& cs, const std::string& path) {
    const std::string rule = "R8-gamma-concavity";
    const BellmanSpec& B = node.bellman();
    requireSuperInputs(cs, rule, path);
    for (std::size_t j = 0; j < node.maps().size(); ++j)
        if (!node.maps()[j].isIsometry(1e-12))
            throw RuleError(rule, "map " + std::to_string(j + 1) + " is not an isometry (L L^T != I)", path);
    double sigmaInv = 0.0;
    for (std::size_t j = 0; j < cs.size(); ++j) {
        double s;
        if (!cs[j].diffusion.isScalarMultipleOfIdentity(1e-12, &s))
            throw RuleError(rule, "child " + std::to_string(j + 1) + " is not an isotropic flow", path);
        if (j == 0) sigmaInv = s;
        else if (std::abs(s - sigmaInv) > 1e-12 * std::max(1.0, std::abs(s)))
            throw RuleError(rule, "children have different diffusion constants", path);
    }
    if (!B.increasing()) throw RuleError(rule, "B must be increasing", path);
    const GammaSpec g = GammaSpec::fromMaps(node.maps());
    const GammaCheck gc = checkGammaConcave(B, g, gammaSamples(g, 400, 0));
    if (gc.falsified)
        throw RuleError(rule, "B is not Gamma-concave (sampled form reaches " + fmt(gc.worstValue) + ")", path,
                        -gc.worstValue);
    if (!gc.certificateKnown)
        throw RuleError(rule, "Gamma-concavity of " + B.name() + " has no analytic certificate for these maps", path);
    Certificate out;
    out.n = node.dim();
    out.diffusion = SymMatrix::scalar(node.dim(), sigmaInv);
    out.kind = CertKind::Super;
    mergeMeta(out, cs, rule);
    return {out, std::nullopt};
}

Derived deriveBellman(const Node& node, const std::string& path) {
    const auto cs = settledChildren(node, path);
    if (node.hasMaps()) return deriveGamma(node, cs, path);
    const BellmanSpec& B = node.bellman();
    const SymMatrix A = cs[0].diffusion;
    const bool concave = B.concave();
    const std::string rule = concave ? "R4-concave-image" : "R5-lambda-concavity";
    if (!B.increasing()) throw RuleError(rule, "B must be increasing in each variable", path);
    requireSuperInputs(cs, rule, path);
    for (std::size_t j = 1; j < cs.size(); ++j)
        if (!sameMatrix(cs[j].diffusion, A))
            throw RuleError(rule, "children must share one diffusion matrix (child " + std::to_string(j + 1) + " differs)",
                            path);
    std::vector<SymMatrix> ks;
    bool liYauInputs = true;
    for (const auto& c : cs) {
        if (!c.liYau || !psdLeq(*c.liYau, A, kPsdTol)) liYauInputs = false;
        else ks.push_back(*c.liYau);
    }
    if (concave) {
        Certificate out;
        out.n = node.dim();
        out.diffusion = A;
        out.kind = CertKind::Super;
        if (B.thetaConvex() && liYauInputs) out.liYau = commonUpperBound(ks, {A});
        mergeMeta(out, cs, rule);
        return {out, std::nullopt};
    }
    // Non-concave B: relaxed concavity with a time-power prefactor.
    for (std::size_t j = 0; j < cs.size(); ++j)
        if (!cs[j].liYau || !psdLeq(*cs[j].liYau, A, kPsdTol))
            throw RuleError(rule,
                            "non-concave B needs a Li-Yau certificate K <= A on every input (child " +
                                std::to_string(j + 1) + " lacks one)",
                            path);
    const int n = node.dim();
    const double lamMin = B.lambdaMin();
    Pending pending;
    pending.rule = rule;
    pending.requiredBeta = lamMin * n / 2.0;
    const BellmanSpec Bc = B;
    const std::vector<Certificate> csc = cs;
    pending.finalize = [Bc, csc, A, n, rule](double beta, const std::string& at) {
        const double lambda = 2.0 * beta / n;
        const LambdaCheck lc = checkLambdaConcavity(Bc, lambda, positiveSamples(Bc.arity(), 256, 0));
        if (!lc.ok)
            throw RuleError(rule,
                            "D^2B <= lambda diag(d_jB/x_j) fails for lambda = " + fmt(lambda) +
                                " (worst eigenvalue " + fmt(lc.worstEigenvalue) + ")",
                            at, -lc.worstEigenvalue);
        Certificate out;
        out.n = n;
        out.diffusion = A * (1.0 + lambda);
        out.kind = CertKind::Super;
        if (Bc.thetaConvex()) out.liYau = A * (1.0 + lambda);
        out.timePower = beta;
        out.decouples = false;
        mergeMeta(out, csc, rule);
        return out;
    };
    Certificate placeholder;
    placeholder.n = n;
    placeholder.diffusion = A;
    return {placeholder, std::move(pending)};
}

// ---------------------------------------------------------------- R6

Derived deriveGeomMean(const Node& node, const std::string& path) {
    const std::string rule = "R6-brascamp-lieb";
    const auto cs = settledChildren(node, path);
    requireSuperInputs(cs, rule, path);
    for (std::size_t j = 0; j < cs.size(); ++j)
        if (!sameMatrix(cs[j].diffusion, node.mats()[j], 1e-10))
            throw RuleError(rule,
                            "child " + std::to_string(j + 1) + " diffusion differs from the declared A_" +
                                std::to_string(j + 1),
                            path);
    const BLDatumResult bl = checkBLDatum(node.coeffs(), node.maps(), node.mats());
    if (bl.status == BLDatumResult::Status::Fail)
        throw RuleError(rule, bl.failReason, path, bl.failIndex >= 0 ? bl.margins[bl.failIndex] : 0.0);
    bool liYauInputs = true;
    for (std::size_t j = 0; j < cs.size(); ++j)
        if (node.coeffs()[j] > 0.0 && (!cs[j].liYau || !psdLeq(*cs[j].liYau, node.mats()[j], kPsdTol)))
            liYauInputs = false;
    const int n = node.dim();
    if (bl.status == BLDatumResult::Status::Equality) {
        Certificate out;
        out.n = n;
        out.diffusion = bl.M;
        out.kind = CertKind::Super;
        if (liYauInputs) out.liYau = bl.M;
        mergeMeta(out, cs, rule);
        return {out, std::nullopt};
    }
    for (std::size_t j = 0; j < cs.size(); ++j)
        if (node.coeffs()[j] > 0.0 && (!cs[j].liYau || !psdLeq(*cs[j].liYau, node.mats()[j], kPsdTol)))
            throw RuleError(rule,
                            "inequality case needs a Li-Yau certificate K_j <= A_j on every input (child " +
                                std::to_string(j + 1) + ")",
                            path);
    Pending pending;
    pending.rule = rule;
    pending.requiredBeta = bl.scalingGap / 2.0;
    const SymMatrix M = bl.M;
    const std::vector<Certificate> csc = cs;
    pending.finalize = [M, csc, n, rule](double beta, const std::string&) {
        Certificate out;
        out.n = n;
        out.diffusion = M;
        out.kind = CertKind::Super;
        out.liYau = M;
        out.timePower = beta;
        out.decouples = false;
        mergeMeta(out, csc, rule);
        return out;
    };
    Certificate placeholder;
    placeholder.n = n;
    placeholder.diffusion = M;
    return {placeholder, std::move(pending)};
}

// ---------------------------------------------------------------- R7

Derived deriveConvolution(const Node& node, const std::string& path) {
    const std::string rule = "R7-convolution";
    const auto cs = settledChildren(node, path);
    double sigma[2];
    for (int j = 0; j < 2; ++j) {
        double s;
        if (!cs[j].diffusion.isScalarMultipleOfIdentity(1e-12, &s))
            throw RuleError(rule,
                            "convolution closure is restricted to isotropic flows (A = multiple of identity); child " +
                                std::to_string(j + 1) + " is anisotropic",
                            path);
        sigma[j] = 1.0 / s;
    }
    const double p = node.convP(), p1 = node.convP1(), p2 = node.convP2();
    const double gap = 1.0 / p1 + 1.0 / p2 - 1.0 - 1.0 / p;
    if (std::abs(gap) > 1e-12)
        throw RuleError(rule, "exponent mismatch: 1/p1 + 1/p2 - 1 - 1/p = " + fmt(gap), path, -std::abs(gap));
    const double q1 = (1.0 / p1) * (1.0 - 1.0 / p1), q2 = (1.0 / p2) * (1.0 - 1.0 / p2);
    const double rel = sigma[0] * q2 - sigma[1] * q1;
    if (std::abs(rel) > 1e-12 * std::max({1.0, std::abs(sigma[0] * q2), std::abs(sigma[1] * q1)}))
        throw RuleError(rule,
                        "diffusion constants violate sigma1 (1/p2)(1-1/p2) = sigma2 (1/p1)(1-1/p1) (defect " +
                            fmt(rel) + ")",
                        path, -std::abs(rel));
    const double sig = (sigma[0] * p1 + sigma[1] * p2) / p;
    Certificate out;
    out.n = node.dim();
    out.diffusion = SymMatrix::scalar(node.dim(), 1.0 / sig);
    if (p1 >= 1.0 && p2 >= 1.0 && superLike(cs[0].kind) && superLike(cs[1].kind)) {
        out.kind = CertKind::Super;
        bool li = true;
        for (int j = 0; j < 2; ++j)
            li = li && cs[j].liYau && psdLeq(*cs[j].liYau, cs[j].diffusion, kPsdTol);
        if (li) out.liYau = out.diffusion;
    } else if (p1 <= 1.0 && p2 <= 1.0 && subLike(cs[0].kind) && subLike(cs[1].kind)) {
        out.kind = CertKind::Sub;
    } else {
        throw RuleError(rule,
                        "needs p1, p2 >= 1 with super inputs or p1, p2 <= 1 with sub inputs (p1 = " + fmt(p1) +
                            ", p2 = " + fmt(p2) + ", kinds " + certKindName(cs[0].kind) + "/" +
                            certKindName(cs[1].kind) + ")",
                        path);
    }
    mergeMeta(out, cs, rule);
    return {out, std::nullopt};
}

}  // namespace

Certificate certify(const NodePtr& node) {
    Derived d = derive(node, "");
    if (d.pending)
        throw RuleError(d.pending->rule,
                        "needs tpow(beta) with beta >= " + fmt(d.pending->requiredBeta) + " at the root", "");
    return d.cert;
}

// ---------------------------------------------------------------- BL data

BLDatumResult checkBLDatum(const std::vector<double>& p, const std::vector<LinearMap>& L,
                           const std::vector<SymMatrix>& A) {
    if (p.size() != L.size() || p.size() != A.size() || p.empty())
        throw DimensionError("BL datum lists have different lengths");
    const int n = L[0].cols();
    BLDatumResult r;
    Mat M = Mat::Zero(n, n);
    double sumPn = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (L[j].cols() != n) throw DimensionError("BL maps have different source dimensions");
        if (L[j].rows() != A[j].dim()) throw DimensionError("BL map target does not match A_j");
        if (!(p[j] >= 0.0)) throw std::invalid_argument("BL exponents must be nonnegative");
        M += p[j] * L[j].mat().transpose() * A[j].mat() * L[j].mat();
        sumPn += p[j] * L[j].rows();
    }
    r.M = SymMatrix(M);
    r.detM = r.M.det();
    r.scalingGap = sumPn - n;
    for (std::size_t j = 0; j < L.size(); ++j)
        if (!L[j].hasFullRowRank()) {
            r.failIndex = static_cast<int>(j);
            r.failReason = "map L_" + std::to_string(j + 1) + " is not surjective";
            r.margins.assign(L.size(), 0.0);
            return r;
        }
    SymMatrix Minv;
    try {
        Minv = r.M.inverse();
    } catch (const SingularMatrix& e) {
        r.failReason = "M is not invertible (det = " + fmt(r.detM) + ", condition " + fmt(e.condition()) + ")";
        r.margins.assign(L.size(), 0.0);
        return r;
    }
    bool equality = true;
    for (std::size_t j = 0; j < L.size(); ++j) {
        const SymMatrix D = A[j].inverse() - pushForward(L[j], Minv);
        const auto ev = D.eigenvalues();
        r.margins.push_back(ev.front());
        if (std::abs(ev.front()) > kPsdTol || std::abs(ev.back()) > kPsdTol) equality = false;
        if (ev.front() < -kPsdTol && r.failIndex < 0) {
            r.failIndex = static_cast<int>(j);
            r.failReason = "BL condition: min eigenvalue of A_j^-1 - L_j M^-1 L_j^T = " + fmt(ev.front()) +
                           " at j=" + std::to_string(j + 1);
        }
    }
    if (r.failIndex >= 0) return r;
    r.status = equality ? BLDatumResult::Status::Equality : BLDatumResult::Status::Inequality;
    return r;
}

// ---------------------------------------------------------------- lambda concavity

std::vector<Vec> positiveSamples(int m, int count, unsigned long long seed) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x51ED27ULL);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::vector<Vec> out;
    for (int i = 0; i < count; ++i) {
        Vec x(m);
        for (int j = 0; j < m; ++j) x(j) = std::exp(u(rng));
        out.push_back(x);
    }
    // the diagonal and a few axis-skewed points
    out.push_back(Vec::Ones(m));
    return out;
}

LambdaCheck checkLambdaConcavity(const BellmanSpec& B, double lambda, const std::vector<Vec>& samples) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    LambdaCheck r;
    r.worstEigenvalue = -std::numeric_limits<double>::infinity();
    for (const Vec& x : samples) {
        const Vec g = B.gradient(x);
        Mat d = B.hessian(x);
        for (int j = 0; j < B.arity(); ++j) d(j, j) -= lambda * g(j) / x(j);
        const double top = SymMatrix(d).maxEigenvalue();
        // normalize by the size of the diagonal term so samples are comparable
        const double scale = std::max(1e-300, (g.array() / x.array()).abs().maxCoeff());
        r.worstEigenvalue = std::max(r.worstEigenvalue, top / scale);
    }
    const bool analytic = lambda >= B.lambdaMin() - 1e-12;
    r.ok = analytic && r.worstEigenvalue <= 1e-9;
    return r;
}

// ---------------------------------------------------------------- Gamma concavity

GammaSpec GammaSpec::classical(int m, int n) {
    GammaSpec g;
    g.dims.assign(m, n);
    g.blocks.assign(m, std::vector<Mat>(m, Mat::Identity(n, n)));
    return g;
}

GammaSpec GammaSpec::fromMaps(const std::vector<LinearMap>& maps) {
    GammaSpec g;
    for (const auto& L : maps) g.dims.push_back(L.rows());
    g.blocks.resize(maps.size());
    for (std::size_t j = 0; j < maps.size(); ++j)
        for (std::size_t k = 0; k < maps.size(); ++k) g.blocks[j].push_back(maps[j].mat() * maps[k].mat().transpose());
    return g;
}

GammaSpec GammaSpec::correlation(double rho) {
    GammaSpec g;
    g.dims = {1, 1};
    Mat one = Mat::Ones(1, 1), r = Mat::Constant(1, 1, rho);
    g.blocks = {{one, r}, {r, one}};
    return g;
}

void GammaSpec::validate() const {
    const std::size_t m = dims.size();
    if (blocks.size() != m) throw DimensionError("Gamma spec has wrong number of block rows");
    for (std::size_t j = 0; j < m; ++j) {
        if (blocks[j].size() != m) throw DimensionError("Gamma spec has wrong number of block columns");
        for (std::size_t k = 0; k < m; ++k) {
            if (blocks[j][k].rows() != dims[j] || blocks[j][k].cols() != dims[k])
                throw DimensionError("Gamma block has wrong shape");
            if ((blocks[j][k] - blocks[k][j].transpose()).cwiseAbs().maxCoeff() > 1e-12)
                throw std::invalid_argument("Gamma blocks must satisfy Gamma_jk = Gamma_kj^T");
        }
    }
}

std::vector<GammaSample> gammaSamples(const GammaSpec& g, int count, unsigned long long seed) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0xA5A5ULL);
    std::normal_distribution<double> nd(0.0, 1.0);
    const auto xs = positiveSamples(static_cast<int>(g.dims.size()), count, seed + 17);
    std::vector<GammaSample> out;
    for (const Vec& x : xs) {
        GammaSample s;
        s.x = x;
        for (int d : g.dims) {
            Vec v(d);
            for (int i = 0; i < d; ++i) v(i) = nd(rng) * x(s.v.size());
            s.v.push_back(v);
        }
        out.push_back(s);
    }
    return out;
}

namespace {

Mat blockGamma(const GammaSpec& g) {
    int total = 0;
    for (int d : g.dims) total += d;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(total, total);
    int r = 0;
    for (std::size_t j = 0; j < g.dims.size(); ++j) {
        int c = 0;
        for (std::size_t k = 0; k < g.dims.size(); ++k) {
            G.block(r, c, g.dims[j], g.dims[k]) = g.blocks[j][k];
            c += g.dims[k];
        }
        r += g.dims[j];
    }
    return G;
}

bool isGramOfIsometries(const GammaSpec& g) {
    // Gamma PSD with identity diagonal blocks is a Gram matrix of isometries.
    for (std::size_t j = 0; j < g.dims.size(); ++j)
        if ((g.blocks[j][j] - Mat::Identity(g.dims[j], g.dims[j])).cwiseAbs().maxCoeff() > 1e-12) return false;
    const Eigen::MatrixXd G = blockGamma(g);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0) >= -kPsdTol;
}

}  // namespace

GammaCheck checkGammaConcave(const BellmanSpec& B, const GammaSpec& g, const std::vector<GammaSample>& samples) {
    g.validate();
    if (static_cast<int>(g.dims.size()) != B.arity()) throw DimensionError("Gamma spec arity does not match B");
    GammaCheck r;
    r.worstValue = -std::numeric_limits<double>::infinity();
    const int m = B.arity();
    for (const auto& s : samples) {
        const Mat H = B.hessian(s.x);
        double q = 0.0, scale = 0.0;
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k) {
                const double term = H(j, k) * s.v[j].dot(g.blocks[j][k] * s.v[k]);
                q += term;
                scale += std::abs(term);
            }
        const double rel = scale > 0.0 ? q / scale : 0.0;
        r.worstValue = std::max(r.worstValue, rel);
        if (rel > 1e-10) r.falsified = true;
    }
    if (B.family() == BellmanSpec::Family::WeightedGeomMean) {
        // D^2B = B diag(1/x)(a a^T - diag a)diag(1/x): Gamma-concave iff the
        // block matrix [(a_j a_k - delta_jk a_j) Gamma_jk] is negative semidefinite.
        Eigen::MatrixXd Q = blockGamma(g);
        int r0 = 0;
        const auto& a = B.params();
        for (int j = 0; j < m; ++j) {
            int c0 = 0;
            for (int k = 0; k < m; ++k) {
                Q.block(r0, c0, g.dims[j], g.dims[k]) *= a[j] * a[k] - (j == k ? a[j] : 0.0);
                c0 += g.dims[k];
            }
            r0 += g.dims[j];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q, Eigen::EigenvaluesOnly);
        r.certificateKnown = es.eigenvalues()(es.eigenvalues().size() - 1) <= kPsdTol;
    } else {
        r.certificateKnown = B.concave() && isGramOfIsometries(g);
    }
    return r;
}

// ---------------------------------------------------------------- functionals

FunctionalSpec monotoneFunctional(const Certificate& cert, const std::optional<WeightSpec>& weight,
                                  const std::vector<Vec>& weightSamples) {
    FunctionalSpec spec;
    const bool trivialWeight = !weight || weight->name == "one";
    if (trivialWeight) {
        spec.direction = cert.kind == CertKind::Super   ? Direction::Nondecreasing
                         : cert.kind == CertKind::Sub ? Direction::Nonincreasing
                                                      : Direction::Constant;
        if (weight) spec.weight = weight;
        return spec;
    }
    if (cert.kind == CertKind::Sub)
        throw RuleError("weight-subharmonic", "a subsolution functional admits no nonconstant subharmonic weight");
    const Mat Minv = cert.diffusion.inverse().mat();
    double worst = std::numeric_limits<double>::infinity();
    Vec worstAt;
    for (const Vec& x : weightSamples) {
        if (x.size() != cert.n) throw DimensionError("weight sample has wrong dimension");
        const double v = (Minv * weight->hessian(x)).trace();
        if (v < worst) worst = v, worstAt = x;
    }
    if (worst < -1e-10) {
        std::ostringstream os;
        os << "weight '" << weight->name << "' fails div(M^-1 grad w) >= 0: value " << worst << " at x = ("
           << worstAt.transpose() << ")";
        throw RuleError("weight-subharmonic", os.str(), "", worst);
    }
    spec.direction = Direction::Nondecreasing;
    spec.weight = weight;
    return spec;
}

}  // namespace monoflow
