#pragma once

// Ornstein-Uhlenbeck flows for L_sigma = sigma Delta - <x, grad>, their
// invariant gaussian measures and the change of variables to heat flow.

#include "monoflow/certify.hpp"
#include "monoflow/expr.hpp"

#include <functional>
#include <vector>

namespace monoflow {

/// c exp(<b, x>); the OU flow of such a term stays in closed form.
struct ExpTerm {
    double c = 1.0;
    Vec b;
};

/// Base function F of an OU flow U(s) = e^{s L_sigma} F.
class OUField {
public:
    /// Positive sum of exponentials; flows and jets are exact.
    static OUField exponentials(double sigma, std::vector<ExpTerm> terms);
    /// Arbitrary positive F; flows by Mehler quadrature with ghNodes per dimension.
    static OUField generic(double sigma, int n, std::function<double(const Vec&)> f, int ghNodes = 40);

    int dim() const { return n_; }
    double sigma() const { return sigma_; }
    bool closedForm() const { return !f_; }
    const std::vector<ExpTerm>& terms() const { return terms_; }

    double base(const Vec& x) const;
    /// e^{s L_sigma} F (x); s = 0 returns F(x).
    double flow(double s, const Vec& x) const;
    /// Jet of (s, x) -> e^{s L_sigma} F (x); closed-form fields only.
    Jet2 jet(double s, const Vec& x) const;
    /// The same field re-based at time s (generic fields nest a Mehler rule).
    OUField advanced(double s) const;

private:
    int n_ = 1;
    double sigma_ = 1.0;
    std::vector<ExpTerm> terms_;
    std::function<double(const Vec&)> f_;
    int gh_ = 40;
};

/// Mehler formula: int F(e^{-s} x + sqrt(sigma (1 - e^{-2s})) y) d gamma(y), Gauss-Hermite with m nodes.
double ouFlowMehler(const std::function<double(const Vec&)>& f, int n, double sigma, double s, const Vec& x,
                    int m = 40);

/// Density of gamma_sigma = N(0, sigma I).
double gaussianDensity(double sigma, const Vec& x);
/// int g d gamma_sigma with m Gauss-Hermite nodes per dimension.
double gaussianIntegral(const std::function<double(const Vec&)>& g, int n, double sigma, int m = 40);

/// Heat time tau = e^{2t} / 2 for OU time t.
inline double heatTimeOf(double t) { return 0.5 * std::exp(2.0 * t); }

/// u(tau, y) from U through e^{-|x|^2/(2 sigma)} U(t, x) = e^{nt} u(e^{2t}/2, e^t x).
double heatValueFromOU(const std::function<double(double, const Vec&)>& U, int n, double sigma, double tau,
                       const Vec& y);
/// The inverse direction: U(t, x) from u.
double ouValueFromHeat(const std::function<double(double, const Vec&)>& u, int n, double sigma, double t,
                       const Vec& x);
/// Jet of U at (t, x) given the jet of u at (e^{2t}/2, e^t x).
Jet2 ouJetFromHeat(const Jet2& heat, double sigma, double t, const Vec& x);

/// dt U - (sigma tr D^2U - <x, grad U>).
double ouResidual(const Jet2& j, double sigma, const Vec& x);

/// Heat atom equal to the OU field's change of variables (sigma = 1, exponential terms).
NodePtr heatAtomOfOUField(const OUField& f);

/// Facts about an OU supersolution used as a Bellman input.
struct OUCertificate {
    double sigma = 1.0;
    CertKind kind = CertKind::Super;
    bool logConvex = false;
};

/// Certificate of an exponential-sum field: exact, log-convex.
OUCertificate ouFieldCertificate(const OUField& f);

/// B(U_1, ..., U_m) is an OU supersolution for L_{sigma/(1+lambda)}, log-convex
/// when B has convex Theta. Throws RuleError on a failed side condition.
OUCertificate ouCertify(const std::vector<OUCertificate>& children, const BellmanSpec& B, double lambda);

/// Jet of B(U_1, ..., U_m) from the children's jets.
Jet2 bellmanJet(const BellmanSpec& B, const std::vector<Jet2>& children);

}  // namespace monoflow
