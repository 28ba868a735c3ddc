#pragma once

// Pointwise verifiers for certificates, proof-identity checks and the
// one-dimensional information-theoretic helpers.

#include "monoflow/certify.hpp"
#include "monoflow/quad.hpp"

#include <optional>
#include <vector>

namespace monoflow {

struct SamplePoint {
    double t;
    Vec x;
};

/// Halton point number `index` (1-based recommended) in [0, 1]^dim.
Vec haltonPoint(unsigned long long index, int dim);

/// spacePoints low-discrepancy points per time. Without a box each time uses
/// the node's envelope hull +- 2.5 widths; with clip the box is intersected
/// with that region (falling back to the region if the overlap is empty).
std::vector<SamplePoint> samplePoints(const NodePtr& node, const std::vector<double>& times, int spacePoints,
                                      unsigned long long seed, const Vec* lo = nullptr, const Vec* hi = nullptr,
                                      bool clip = false);

struct Residual {
    double value = 0.0;  // oriented: >= 0 when the certified inequality holds
    double scale = 1.0;  // max(|dt u|, |tr(M^{-1} D^2 u)|, u / t)
    double normalized() const { return value / scale; }
};

/// dt u - tr(M^{-1} D^2 u), sign flipped for sub certificates.
Residual supersolutionResidual(const NodePtr& node, const Certificate& cert, double t, const Vec& x);
/// min eigenvalue of D^2 log u + K / (2t).
double liYauGap(const NodePtr& node, const SymMatrix& K, double t, const Vec& x);
/// Delta log u + tr K / (2t).
double liYauTraceGap(const NodePtr& node, const SymMatrix& K, double t, const Vec& x);

struct PointReport {
    double t = 0.0;
    Vec x;
    double residual = 0.0;  // normalized
    double liYauGap = 0.0;
    bool residualPass = true;
    bool liYauPass = true;
};

struct PointCheckSummary {
    int count = 0;
    int skipped = 0;  // samples where evaluation left the representable range
    double worstResidual = 0.0;
    double worstLiYauGap = 0.0;
    bool liYauChecked = false;
    std::vector<PointReport> points;
    bool pass() const;
};

/// Checks residual >= -tol and (if a Li-Yau matrix is known, or given) gap >= -tol.
PointCheckSummary checkPoints(const NodePtr& node, const Certificate& cert, const std::vector<SamplePoint>& samples,
                              double tol = 1e-7, int threads = 1, bool keepPoints = false,
                              const SymMatrix* liYauOverride = nullptr);

/// Closed-form Delta log of the harmonic sum of two unit kernels (A = I) centered a1, a2.
double explicitCounterexampleLaplacian(double t, const Vec& x, const Vec& a1, const Vec& a2);

/// (int u1^{1/p} u2^{1/p})^2 - int u1^{2/p} int u2^{2/p}; expected nondecreasing.
FunctionalTrace qpTrace(const NodePtr& u1, const NodePtr& u2, double p, const std::vector<double>& times,
                        const BoxQuadrature& q, int threads = 1);

/// int |grad u|^2, expected nonincreasing on solutions.
FunctionalTrace dirichletEnergyTrace(const NodePtr& u, const std::vector<double>& times, const BoxQuadrature& q,
                                     int threads = 1);
/// -int u log u, expected nondecreasing on solutions.
FunctionalTrace entropyTrace(const NodePtr& u, const std::vector<double>& times, const BoxQuadrature& q,
                             int threads = 1);

// ---------------------------------------------------------------- densities on a line

struct Density1D {
    double lo = 0.0;
    double h = 1.0;
    std::vector<double> f;

    double x(std::size_t i) const { return lo + h * static_cast<double>(i); }
    double mass() const;
};

Density1D sampleDensity(const std::function<double(double)>& f, double lo, double hi, int count);
/// Density of the sum of independent variables; both grids must share h.
Density1D convolve(const Density1D& a, const Density1D& b);
/// int (f')^2 / f with fourth-order differences.
double fisherInfo(const Density1D& d);
/// -int f log f.
double entropy(const Density1D& d);

struct EPIResult {
    double lhs = 0.0;  // e^{2 H(f1 * f2)}
    double rhs = 0.0;  // e^{2 H(f1)} + e^{2 H(f2)}
    bool ok = false;
    double ratio() const { return lhs / rhs; }
};
EPIResult epiCheck(const Density1D& f1, const Density1D& f2, double relTol = 1e-9);

struct BlachmanResult {
    double lhs = 0.0;  // a1^2 I(f1) + a2^2 I(f2)
    double rhs = 0.0;  // (a1 + a2)^2 I(f1 * f2)
};
BlachmanResult blachmanCheck(const Density1D& f1, const Density1D& f2, double a1, double a2);

// ---------------------------------------------------------------- proof identities

struct ConvWitness {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double single = 0.0;                    // N from its single-integral definition
    std::optional<double> doubleIntegral;   // half the double-integral form
};

/// lambda_k = ((1/p_k') / (1/p_1' + 1/p_2'))^2.
std::pair<double, double> convLambdas(double p1, double p2);

/// The nonnegativity witness N(t, x; X) of the convolution closure.
ConvWitness convNonnegativityWitness(const NodePtr& u1, const NodePtr& u2, double p, double p1, double p2,
                                     const Vec& X, double t, const Vec& x, const BoxQuadrature& q,
                                     bool withDouble = false);

/// Terms of the residual decomposition of an anisotropic geometric mean,
/// each divided by the value of the mean:
/// first  = sum p_j (dt u_j - div(A_j^{-1} grad u_j)) / u_j
/// second = sum p_j <L_j^T A_j L_j (w_j - wbar), w_j - wbar>
/// third  = sum p_j <(A_j^{-1} - L_j M^{-1} L_j^T) A_j L_j w_j, A_j L_j w_j>
/// fourth = sum p_j tr((A_j^{-1} - L_j M^{-1} L_j^T)(D^2 log u_j + A_j / (2t)))
struct BLDecomposition {
    double lhs = 0.0;  // (dt u - div(M^{-1} grad u)) / u, time power included
    double first = 0.0;
    double second = 0.0;
    double third = 0.0;
    double fourth = 0.0;
    double beta = 0.0;
    /// Exact identity: lhs = first + second + fourth.
    double corrected() const { return first + second + fourth; }
    /// All four terms summed.
    double fourTerm() const { return first + second + third + fourth; }
};

/// node: gmean, or tpow over gmean.
BLDecomposition blResidualDecomposition(const NodePtr& node, double t, const Vec& x);

}  // namespace monoflow
