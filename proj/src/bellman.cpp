#include "monoflow/bellman.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace monoflow {

namespace {

// softmax with the usual max shift
Vec softmax(const Vec& s) {
    const double mx = s.maxCoeff();
    Vec e = (s.array() - mx).exp().matrix();
    return e / e.sum();
}

double logSumExp(const Vec& s) {
    const double mx = s.maxCoeff();
    return mx + std::log((s.array() - mx).exp().sum());
}

Mat softmaxHessian(const Vec& pi) {
    Mat h = -pi * pi.transpose();
    h.diagonal() += pi;
    return h;
}

void requireArity(const Vec& x, int m) {
    if (x.size() != m) throw DimensionError("Bellman argument has wrong arity");
}

}  // namespace

BellmanSpec BellmanSpec::power(double p) {
    if (!(p > 0.0)) throw std::invalid_argument("pow exponent must be positive");
    return BellmanSpec(Family::Power, 1, {p});
}

BellmanSpec BellmanSpec::weightedGeomMean(std::vector<double> exponents) {
    if (exponents.empty() || int(exponents.size()) > kMaxDim)
        throw std::invalid_argument("wgm needs 1..8 exponents");
    for (double p : exponents)
        if (!(p >= 0.0)) throw std::invalid_argument("wgm exponents must be nonnegative");
    const int m = static_cast<int>(exponents.size());
    return BellmanSpec(Family::WeightedGeomMean, m, std::move(exponents));
}

BellmanSpec BellmanSpec::harmonicSum(int m) {
    if (m < 2 || m > kMaxDim) throw std::invalid_argument("hsum arity must be 2..8");
    return BellmanSpec(Family::HarmonicSum, m, {});
}

BellmanSpec BellmanSpec::lqNorm(double p, double q) {
    if (!(p > 0.0)) throw std::invalid_argument("lqnorm needs p > 0");
    if (q == 0.0 || !std::isfinite(q)) throw std::invalid_argument("lqnorm needs finite q != 0");
    return BellmanSpec(Family::LqNormP, 2, {p, q});
}

BellmanSpec BellmanSpec::linear(std::vector<double> weights) {
    if (weights.empty() || int(weights.size()) > kMaxDim)
        throw std::invalid_argument("linear needs 1..8 weights");
    for (double w : weights)
        if (!(w > 0.0)) throw std::invalid_argument("linear weights must be positive");
    const int m = static_cast<int>(weights.size());
    return BellmanSpec(Family::Linear, m, std::move(weights));
}

std::string BellmanSpec::name() const {
    std::ostringstream os;
    os.precision(17);
    switch (family_) {
    case Family::Power: os << "pow(" << params_[0] << ")"; break;
    case Family::WeightedGeomMean: {
        os << "wgm(";
        for (std::size_t i = 0; i < params_.size(); ++i) os << (i ? "," : "") << params_[i];
        os << ")";
        break;
    }
    case Family::HarmonicSum: os << "hsum"; break;
    case Family::LqNormP: os << "lqnorm(" << params_[0] << "," << params_[1] << ")"; break;
    case Family::Linear: {
        os << "linear(";
        for (std::size_t i = 0; i < params_.size(); ++i) os << (i ? "," : "") << params_[i];
        os << ")";
        break;
    }
    }
    return os.str();
}

double BellmanSpec::value(const Vec& x) const {
    requireArity(x, arity_);
    switch (family_) {
    case Family::Power: return std::pow(x(0), params_[0]);
    case Family::WeightedGeomMean: {
        double logv = 0.0;
        for (int j = 0; j < arity_; ++j) logv += params_[j] * std::log(x(j));
        return std::exp(logv);
    }
    case Family::HarmonicSum: return 1.0 / x.cwiseInverse().sum();
    case Family::LqNormP: {
        const double p = params_[0], q = params_[1];
        return std::pow(std::pow(x(0), q) + std::pow(x(1), q), p / q);
    }
    case Family::Linear: {
        double v = 0.0;
        for (int j = 0; j < arity_; ++j) v += params_[j] * x(j);
        return v;
    }
    }
    return 0.0;
}

Vec BellmanSpec::gradient(const Vec& x) const {
    requireArity(x, arity_);
    Vec g(arity_);
    switch (family_) {
    case Family::Power: g(0) = params_[0] * std::pow(x(0), params_[0] - 1.0); break;
    case Family::WeightedGeomMean: {
        const double b = value(x);
        for (int j = 0; j < arity_; ++j) g(j) = params_[j] * b / x(j);
        break;
    }
    case Family::HarmonicSum: {
        const double b = value(x);
        for (int j = 0; j < arity_; ++j) g(j) = b * b / (x(j) * x(j));
        break;
    }
    case Family::LqNormP: {
        const double p = params_[0], q = params_[1];
        const double s = std::pow(x(0), q) + std::pow(x(1), q);
        for (int j = 0; j < 2; ++j) g(j) = p * std::pow(s, p / q - 1.0) * std::pow(x(j), q - 1.0);
        break;
    }
    case Family::Linear:
        for (int j = 0; j < arity_; ++j) g(j) = params_[j];
        break;
    }
    return g;
}

Mat BellmanSpec::hessian(const Vec& x) const {
    requireArity(x, arity_);
    Mat h = Mat::Zero(arity_, arity_);
    switch (family_) {
    case Family::Power: {
        const double p = params_[0];
        h(0, 0) = p * (p - 1.0) * std::pow(x(0), p - 2.0);
        break;
    }
    case Family::WeightedGeomMean: {
        const double b = value(x);
        for (int j = 0; j < arity_; ++j)
            for (int k = 0; k < arity_; ++k)
                h(j, k) = b * (params_[j] * params_[k] - (j == k ? params_[j] : 0.0)) /
                          (x(j) * x(k));
        break;
    }
    case Family::HarmonicSum: {
        const double b = value(x);
        for (int j = 0; j < arity_; ++j)
            for (int k = 0; k < arity_; ++k) {
                h(j, k) = 2.0 * b * b * b / (x(j) * x(j) * x(k) * x(k));
                if (j == k) h(j, k) -= 2.0 * b * b / (x(j) * x(j) * x(j));
            }
        break;
    }
    case Family::LqNormP: {
        const double p = params_[0], q = params_[1];
        const double s = std::pow(x(0), q) + std::pow(x(1), q);
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) {
                h(j, k) = p * (p - q) * std::pow(s, p / q - 2.0) * std::pow(x(j), q - 1.0) *
                          std::pow(x(k), q - 1.0);
                if (j == k) h(j, k) += p * (q - 1.0) * std::pow(s, p / q - 1.0) * std::pow(x(j), q - 2.0);
            }
        break;
    }
    case Family::Linear: break;
    }
    return h;
}

double BellmanSpec::theta(const Vec& s) const {
    requireArity(s, arity_);
    switch (family_) {
    case Family::Power: return params_[0] * s(0);
    case Family::WeightedGeomMean: {
        double v = 0.0;
        for (int j = 0; j < arity_; ++j) v += params_[j] * s(j);
        return v;
    }
    case Family::HarmonicSum: return -logSumExp(-s);
    case Family::LqNormP: return params_[0] / params_[1] * logSumExp(params_[1] * s);
    case Family::Linear: {
        Vec t(arity_);
        for (int j = 0; j < arity_; ++j) t(j) = s(j) + std::log(params_[j]);
        return logSumExp(t);
    }
    }
    return 0.0;
}

Vec BellmanSpec::thetaGradient(const Vec& s) const {
    requireArity(s, arity_);
    switch (family_) {
    case Family::Power: return Vec::Constant(1, params_[0]);
    case Family::WeightedGeomMean: {
        Vec g(arity_);
        for (int j = 0; j < arity_; ++j) g(j) = params_[j];
        return g;
    }
    case Family::HarmonicSum: return softmax(-s);
    case Family::LqNormP: return params_[0] * softmax(params_[1] * s);
    case Family::Linear: {
        Vec t(arity_);
        for (int j = 0; j < arity_; ++j) t(j) = s(j) + std::log(params_[j]);
        return softmax(t);
    }
    }
    return Vec::Zero(arity_);
}

Mat BellmanSpec::thetaHessian(const Vec& s) const {
    requireArity(s, arity_);
    switch (family_) {
    case Family::Power:
    case Family::WeightedGeomMean: return Mat::Zero(arity_, arity_);
    case Family::HarmonicSum: return -softmaxHessian(softmax(-s));
    case Family::LqNormP: {
        const double p = params_[0], q = params_[1];
        return p * q * softmaxHessian(softmax(q * s));
    }
    case Family::Linear: {
        Vec t(arity_);
        for (int j = 0; j < arity_; ++j) t(j) = s(j) + std::log(params_[j]);
        return softmaxHessian(softmax(t));
    }
    }
    return Mat::Zero(arity_, arity_);
}

bool BellmanSpec::increasing() const {
    switch (family_) {
    case Family::WeightedGeomMean:
        return std::any_of(params_.begin(), params_.end(), [](double p) { return p > 0.0; });
    default: return true;  // positivity enforced at construction
    }
}

bool BellmanSpec::thetaConvex() const {
    switch (family_) {
    case Family::Power:
    case Family::WeightedGeomMean:
    case Family::Linear: return true;
    case Family::HarmonicSum: return false;
    case Family::LqNormP: return params_[0] * params_[1] > 0.0;
    }
    return false;
}

double BellmanSpec::lambdaMin() const {
    switch (family_) {
    case Family::Power: return std::max(0.0, params_[0] - 1.0);
    case Family::WeightedGeomMean: {
        const double total = std::accumulate(params_.begin(), params_.end(), 0.0);
        return std::max(0.0, total - 1.0);
    }
    case Family::HarmonicSum:
    case Family::Linear: return 0.0;
    case Family::LqNormP: return std::max(0.0, std::max(params_[0], params_[1]) - 1.0);
    }
    return 0.0;
}

double BellmanSpec::homogeneityDegree() const {
    switch (family_) {
    case Family::Power: return params_[0];
    case Family::WeightedGeomMean: return std::accumulate(params_.begin(), params_.end(), 0.0);
    case Family::HarmonicSum:
    case Family::Linear: return 1.0;
    case Family::LqNormP: return params_[0];
    }
    return 1.0;
}

}  // namespace monoflow
