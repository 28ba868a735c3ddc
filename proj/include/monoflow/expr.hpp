#pragma once

// Expression trees over heat-kernel atoms and pointwise second-order jets.

#include "monoflow/bellman.hpp"
#include "monoflow/symmat.hpp"

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace monoflow {

/// Value, time derivative, gradient and hessian of a field at (t, x).
struct Jet2 {
    double value = 0.0;
    double dt = 0.0;
    Vec grad;
    Mat hess;

    static Jet2 zero(int n);
    int dim() const { return static_cast<int>(grad.size()); }
};

/// Raised for out-of-range evaluations; carries the node path.
class EvalError : public std::range_error {
public:
    EvalError(const std::string& msg, std::string path = "")
        : std::range_error(path.empty() ? msg : msg + " at " + path), msg_(msg), path_(std::move(path)) {}
    const std::string& message() const { return msg_; }
    const std::string& path() const { return path_; }
    EvalError under(const std::string& segment) const {
        return EvalError(msg_, path_.empty() ? segment : segment + "/" + path_);
    }

private:
    std::string msg_;
    std::string path_;
};

inline constexpr double kValueFloor = 1e-300;

struct MixtureTerm {
    double weight = 1.0;
    Vec center;
    double t0 = 0.0;
};

/// Positive superposition of translated, delayed heat kernels for dt u = div(A^{-1} grad u).
struct GaussianMixtureAtom {
    SymMatrix A;
    std::vector<MixtureTerm> terms;

    int dim() const { return A.dim(); }
    void validate() const;
};

/// H(t, x) = det(A / (4 pi tau))^{1/2} exp(-<A y, y> / (4 tau)), tau = t + t0, y = x - center.
Jet2 heatKernelJet(const SymMatrix& A, double t, const Vec& x, const Vec& center, double t0 = 0.0);
double heatKernelValue(const SymMatrix& A, double t, const Vec& x, const Vec& center, double t0 = 0.0);

/// Finite set of orthogonal maps with weights (a discretized Haar average).
class GroupSampler {
public:
    enum class Kind { Generic, DiagonalPairs4D };

    GroupSampler() = default;
    GroupSampler(std::vector<Mat> elements, std::vector<double> weights, std::string label);
    /// Elements fixing (1,0,1,0) and (0,1,0,1) in R^4, parametrized by 2x2
    /// orthogonal maps acting on the difference coordinates.
    static GroupSampler diagonalPairs4D(std::vector<Mat> planeMaps, std::vector<double> weights,
                                        std::string label);

    int size() const { return static_cast<int>(elements_.size()); }
    int dim() const { return elements_.empty() ? 0 : static_cast<int>(elements_[0].rows()); }
    const Mat& element(int k) const { return elements_[k]; }
    double weight(int k) const { return weights_[k]; }
    const std::string& label() const { return label_; }
    Vec apply(int k, const Vec& x) const;

private:
    Kind kind_ = Kind::Generic;
    std::vector<Mat> elements_;
    std::vector<Mat> planeMaps_;
    std::vector<double> weights_;
    std::string label_;
};

class Node;
using NodePtr = std::shared_ptr<const Node>;

enum class NodeKind { Atom, Sum, Tensor, Compose, Bellman, GeomMean, Convolution, GroupAverage, TimePower };

const char* nodeKindName(NodeKind k);

/// Spatial localization estimate used for automatic quadrature boxes.
struct Envelope {
    Vec lo;
    Vec hi;
    double width = 1.0;  // gaussian standard-deviation scale
};

struct GeomMeanTerm {
    double p;
    LinearMap L;
    SymMatrix A;
    NodePtr child;
};

/// Immutable expression node. Build with the make* functions below.
class Node {
public:
    NodeKind kind() const { return kind_; }
    int dim() const { return dim_; }

    const GaussianMixtureAtom& atom() const { return *atom_; }
    const std::vector<NodePtr>& children() const { return children_; }
    const std::vector<double>& coeffs() const { return coeffs_; }
    const std::vector<LinearMap>& maps() const { return maps_; }
    const std::vector<SymMatrix>& mats() const { return mats_; }
    const BellmanSpec& bellman() const { return *bellman_; }
    const GroupSampler& group() const { return *group_; }
    std::shared_ptr<const GroupSampler> groupPtr() const { return group_; }
    double beta() const { return beta_; }
    double convP() const { return convP_; }
    double convP1() const { return convP1_; }
    double convP2() const { return convP2_; }
    int quadCount() const { return quadCount_; }
    bool hasMaps() const { return !maps_.empty(); }

    Envelope envelope(double t) const;

    friend NodePtr makeAtom(GaussianMixtureAtom atom);
    friend NodePtr makeSum(std::vector<double> coeffs, std::vector<NodePtr> children);
    friend NodePtr makeTensor(NodePtr left, NodePtr right);
    friend NodePtr makeCompose(LinearMap L, NodePtr child);
    friend NodePtr makeBellman(BellmanSpec B, std::vector<NodePtr> children, std::vector<LinearMap> maps);
    friend NodePtr makeGeomMean(std::vector<GeomMeanTerm> terms);
    friend NodePtr makeConvolution(double p, double p1, double p2, NodePtr left, NodePtr right,
                                   int quadCount);
    friend NodePtr makeGroupAverage(std::shared_ptr<const GroupSampler> g, NodePtr child);
    friend NodePtr makeTimePower(double beta, NodePtr child);

private:
    Node() = default;

    NodeKind kind_ = NodeKind::Atom;
    int dim_ = 0;
    std::optional<GaussianMixtureAtom> atom_;
    std::vector<NodePtr> children_;
    std::vector<double> coeffs_;
    std::vector<LinearMap> maps_;
    std::vector<SymMatrix> mats_;
    std::optional<BellmanSpec> bellman_;
    std::shared_ptr<const GroupSampler> group_;
    double beta_ = 0.0;
    double convP_ = 1.0, convP1_ = 1.0, convP2_ = 1.0;
    int quadCount_ = 0;
};

NodePtr makeAtom(GaussianMixtureAtom atom);
NodePtr makeKernel(const SymMatrix& A, const Vec& center, double t0 = 0.0, double weight = 1.0);
NodePtr makeSum(std::vector<double> coeffs, std::vector<NodePtr> children);
NodePtr makeTensor(NodePtr left, NodePtr right);
/// u o L for invertible L.
NodePtr makeCompose(LinearMap L, NodePtr child);
/// B(u_1 o L_1, ..., u_m o L_m); maps may be empty (all identity).
NodePtr makeBellman(BellmanSpec B, std::vector<NodePtr> children, std::vector<LinearMap> maps = {});
/// prod_j (u_j o L_j)^{p_j}; the A_j are carried as declared data.
NodePtr makeGeomMean(std::vector<GeomMeanTerm> terms);
/// (u_1^{1/p1} * u_2^{1/p2})^p. quadCount = nodes per dimension (0 = default).
NodePtr makeConvolution(double p, double p1, double p2, NodePtr left, NodePtr right, int quadCount = 0);
NodePtr makeGroupAverage(std::shared_ptr<const GroupSampler> g, NodePtr child);
NodePtr makeTimePower(double beta, NodePtr child);

/// Full jet. Throws EvalError if t <= 0 or the value falls below kValueFloor.
Jet2 evalJet(const NodePtr& node, double t, const Vec& x);
/// Value only; may return 0 in far tails (no floor check).
double evalValue(const NodePtr& node, double t, const Vec& x);

/// D^2 log u = (u D^2u - grad u grad u^T) / u^2.
SymMatrix logHessian(const Jet2& j);
Vec logGradient(const Jet2& j);

/// Theta hessian of a built-in Bellman function.
inline SymMatrix thetaHessian(const BellmanSpec& B, const Vec& s) { return SymMatrix(B.thetaHessian(s)); }

/// Jet of x -> u(L x) given the jet of u at L x.
Jet2 pullback(const Jet2& j, const Mat& L);

int nodeCount(const NodePtr& node);

}  // namespace monoflow
