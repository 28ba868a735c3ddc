#pragma once

// Built-in Bellman functions B : R_+^m -> R_+ with analytic derivatives,
// the log-exponential transform Theta(s) = log B(e^s), and the structural
// flags the certificate rules consult.

#include "monoflow/symmat.hpp"

#include <string>
#include <vector>

namespace monoflow {

class BellmanSpec {
public:
    enum class Family { Power, WeightedGeomMean, HarmonicSum, LqNormP, Linear };

    static BellmanSpec power(double p);
    static BellmanSpec weightedGeomMean(std::vector<double> exponents);
    static BellmanSpec harmonicSum(int m = 2);
    static BellmanSpec lqNorm(double p, double q);
    static BellmanSpec linear(std::vector<double> weights);

    Family family() const { return family_; }
    std::string name() const;
    int arity() const { return arity_; }
    const std::vector<double>& params() const { return params_; }

    double value(const Vec& x) const;
    Vec gradient(const Vec& x) const;
    Mat hessian(const Vec& x) const;

    double theta(const Vec& s) const;
    Vec thetaGradient(const Vec& s) const;
    Mat thetaHessian(const Vec& s) const;

    bool increasing() const;
    bool concave() const { return lambdaMin() == 0.0; }
    bool thetaConvex() const;
    /// Smallest lambda >= 0 with D^2B <= lambda diag(d_jB / x_j) on R_+^m.
    double lambdaMin() const;
    double homogeneityDegree() const;

private:
    BellmanSpec(Family f, int arity, std::vector<double> params)
        : family_(f), arity_(arity), params_(std::move(params)) {}

    Family family_;
    int arity_;
    std::vector<double> params_;
};

}  // namespace monoflow
