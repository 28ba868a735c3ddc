#pragma once

// Deterministic quadrature: tensor trapezoid boxes, Gauss-Hermite rules,
// the O(2) samplers and functional traces.

#include "monoflow/expr.hpp"
#include "monoflow/functional.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace monoflow {

struct Axis {
    double lo;
    double hi;
    int count;
};

class BoxQuadrature {
public:
    BoxQuadrature() = default;
    explicit BoxQuadrature(std::vector<Axis> axes);

    /// Box sized as hull +- 8 * envelope width at tmax (and tmin); count nodes per dim.
    static BoxQuadrature autoBox(const NodePtr& node, double tmin, double tmax, int count);
    static BoxQuadrature uniform(int n, double lo, double hi, int count);

    int dim() const { return static_cast<int>(axes_.size()); }
    const std::vector<Axis>& axes() const { return axes_; }
    long long size() const;
    double volume() const;
    std::vector<double> weights(int axis) const;

private:
    std::vector<Axis> axes_;
};

struct IntegralResult {
    double value = 0.0;
    double truncationEstimate = 0.0;
    bool tailWarning = false;
    double boundaryRatio = 0.0;  // max boundary |f| / peak |f|
};

/// Integrates an arbitrary function over the box; rows along axis 0 are
/// independent work items summed in fixed order.
IntegralResult integrateFunction(const std::function<double(const Vec&)>& f, const BoxQuadrature& q,
                                 int threads = 1);

IntegralResult integrate(const NodePtr& node, double t, const BoxQuadrature& q,
                         const WeightSpec* weight = nullptr, int threads = 1);

FunctionalTrace functionalTrace(const NodePtr& node, const FunctionalSpec& spec, const std::vector<double>& times,
                                const BoxQuadrature& q, int threads = 1);

/// Gauss-Hermite nodes and weights for int f(x) e^{-x^2} dx (Golub-Welsch).
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};
GaussRule gaussHermite(int m);

/// E f(Y), Y ~ N(mean, s^2 I) in n dims, tensor Gauss-Hermite with m nodes per dim.
double gaussianExpectation(const std::function<double(const Vec&)>& f, int n, double s, int m,
                           const Vec* mean = nullptr);

/// Orthogonal maps of R^4 fixing (1,0,1,0) and (0,1,0,1): rotations by 2 pi j / k
/// of the complementary plane, each with and without a reflection. Weights 1/(2k).
std::shared_ptr<const GroupSampler> groupO2Elements(int k);
/// The same 2k-element discretization of O(2) acting on R^2.
std::shared_ptr<const GroupSampler> o2Sample(int k);

/// Geometric grid of count times in [tmin, tmax].
std::vector<double> geometricTimes(double tmin, double tmax, int count);

}  // namespace monoflow
