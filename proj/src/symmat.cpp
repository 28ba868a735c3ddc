#include "monoflow/symmat.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace monoflow {

namespace {

Mat fromNested(std::initializer_list<std::initializer_list<double>> rows) {
    const int r = static_cast<int>(rows.size());
    if (r == 0) throw DimensionError("matrix literal has no rows");
    const int c = static_cast<int>(rows.begin()->size());
    if (r > kMaxDim || c > kMaxDim || c == 0)
        throw DimensionError("matrix literal outside supported size");
    Mat m(r, c);
    int i = 0;
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != c) throw DimensionError("ragged matrix literal");
        int j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Eigen::SelfAdjointEigenSolver<Mat> eigenOf(const Mat& m, bool vectors) {
    return Eigen::SelfAdjointEigenSolver<Mat>(
        m, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
}

}  // namespace

SymMatrix::SymMatrix(const Mat& m) {
    if (m.rows() != m.cols()) throw DimensionError("SymMatrix needs a square matrix");
    if (m.rows() < 1) throw DimensionError("SymMatrix needs dim >= 1");
    m_ = (m + m.transpose()) * 0.5;
}

SymMatrix::SymMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : SymMatrix(fromNested(rows)) {}

SymMatrix SymMatrix::identity(int n) { return SymMatrix(Mat::Identity(n, n)); }
SymMatrix SymMatrix::zero(int n) { return SymMatrix(Mat::Zero(n, n)); }

SymMatrix SymMatrix::diagonal(const std::vector<double>& d) {
    Mat m = Mat::Zero(static_cast<int>(d.size()), static_cast<int>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) m(int(i), int(i)) = d[i];
    return SymMatrix(m);
}

std::vector<double> SymMatrix::eigenvalues() const {
    auto es = eigenOf(m_, false);
    std::vector<double> out(es.eigenvalues().data(), es.eigenvalues().data() + dim());
    return out;
}

double SymMatrix::minEigenvalue() const { return eigenOf(m_, false).eigenvalues()(0); }
double SymMatrix::maxEigenvalue() const { return eigenOf(m_, false).eigenvalues()(dim() - 1); }

double SymMatrix::det() const { return m_.determinant(); }

double SymMatrix::condition() const {
    auto ev = eigenOf(m_, false).eigenvalues();
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int i = 0; i < ev.size(); ++i) {
        lo = std::min(lo, std::abs(ev(i)));
        hi = std::max(hi, std::abs(ev(i)));
    }
    if (lo == 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

SymMatrix SymMatrix::inverse() const {
    const double c = condition();
    if (!(c <= kConditionGuard))
        throw SingularMatrix("matrix is singular or ill-conditioned (condition " +
                                 std::to_string(c) + ")",
                             c);
    return SymMatrix(Mat(m_.inverse()));
}

SymMatrix SymMatrix::sqrt() const {
    auto es = eigenOf(m_, true);
    Vec d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return SymMatrix(Mat(es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose()));
}

SymMatrix SymMatrix::invSqrt() const {
    auto es = eigenOf(m_, true);
    if (es.eigenvalues()(0) <= 0.0) throw SingularMatrix("invSqrt of non-PD matrix", 0.0);
    Vec d = es.eigenvalues().cwiseSqrt().cwiseInverse();
    return SymMatrix(Mat(es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose()));
}

SymMatrix SymMatrix::operator+(const SymMatrix& o) const {
    if (o.dim() != dim()) throw DimensionError("SymMatrix + dimension mismatch");
    return SymMatrix(Mat(m_ + o.m_));
}

SymMatrix SymMatrix::operator-(const SymMatrix& o) const {
    if (o.dim() != dim()) throw DimensionError("SymMatrix - dimension mismatch");
    return SymMatrix(Mat(m_ - o.m_));
}

double SymMatrix::maxAbsDiff(const SymMatrix& o) const {
    if (o.dim() != dim()) return std::numeric_limits<double>::infinity();
    return (m_ - o.m_).cwiseAbs().maxCoeff();
}

bool SymMatrix::isScalarMultipleOfIdentity(double tol, double* scale) const {
    const double s = m_(0, 0);
    const double err = (m_ - Mat::Identity(dim(), dim()) * s).cwiseAbs().maxCoeff();
    if (scale) *scale = s;
    return err <= tol * std::max(1.0, std::abs(s));
}

std::vector<std::vector<double>> SymMatrix::rows() const {
    std::vector<std::vector<double>> out(dim(), std::vector<double>(dim()));
    for (int i = 0; i < dim(); ++i)
        for (int j = 0; j < dim(); ++j) out[i][j] = m_(i, j);
    return out;
}

LinearMap::LinearMap(std::initializer_list<std::initializer_list<double>> rows)
    : m_(fromNested(rows)) {}

LinearMap LinearMap::fromRows(const std::vector<std::vector<double>>& rows) {
    const int r = static_cast<int>(rows.size());
    if (r == 0 || rows[0].empty()) throw DimensionError("empty linear map");
    const int c = static_cast<int>(rows[0].size());
    if (r > kMaxDim || c > kMaxDim) throw DimensionError("linear map outside supported size");
    Mat m(r, c);
    for (int i = 0; i < r; ++i) {
        if (static_cast<int>(rows[i].size()) != c) throw DimensionError("ragged linear map");
        for (int j = 0; j < c; ++j) m(i, j) = rows[i][j];
    }
    return LinearMap(m);
}

bool LinearMap::hasFullRowRank(double tol) const {
    if (rows() > cols()) return false;
    Mat g = m_ * m_.transpose();
    auto ev = eigenOf(g, false).eigenvalues();
    return ev(0) > tol * std::max(1.0, ev(ev.size() - 1));
}

bool LinearMap::isIsometry(double tol) const {
    Mat g = m_ * m_.transpose();
    return (g - Mat::Identity(rows(), rows())).cwiseAbs().maxCoeff() <= tol;
}

double LinearMap::det() const {
    if (!isSquare()) throw DimensionError("det of non-square linear map");
    return m_.determinant();
}

LinearMap LinearMap::inverse() const {
    if (!isSquare()) throw DimensionError("inverse of non-square linear map");
    Eigen::JacobiSVD<Mat> svd(m_);
    const auto& s = svd.singularValues();
    const double cond = s(0) / s(s.size() - 1);
    if (!(cond <= kConditionGuard)) throw SingularMatrix("linear map is not invertible", cond);
    return LinearMap(Mat(m_.inverse()));
}

std::vector<std::vector<double>> LinearMap::toRows() const {
    std::vector<std::vector<double>> out(rows(), std::vector<double>(cols()));
    for (int i = 0; i < rows(); ++i)
        for (int j = 0; j < cols(); ++j) out[i][j] = m_(i, j);
    return out;
}

bool isPSD(const SymMatrix& s, double tol) { return s.minEigenvalue() >= -tol; }

bool psdLeq(const SymMatrix& s1, const SymMatrix& s2, double tol) {
    if (s1.dim() != s2.dim()) throw DimensionError("psdLeq dimension mismatch");
    return isPSD(s2 - s1, tol);
}

SymMatrix directSum(const SymMatrix& a, const SymMatrix& b) {
    const int n = a.dim() + b.dim();
    if (n > kMaxDim) throw DimensionError("direct sum exceeds supported dimension");
    Mat m = Mat::Zero(n, n);
    m.topLeftCorner(a.dim(), a.dim()) = a.mat();
    m.bottomRightCorner(b.dim(), b.dim()) = b.mat();
    return SymMatrix(m);
}

SymMatrix congruence(const LinearMap& l, const SymMatrix& s) {
    if (l.rows() != s.dim()) throw DimensionError("congruence: L.rows != S.dim");
    return SymMatrix(Mat(l.mat().transpose() * s.mat() * l.mat()));
}

SymMatrix pushForward(const LinearMap& l, const SymMatrix& s) {
    if (l.cols() != s.dim()) throw DimensionError("pushForward: L.cols != S.dim");
    return SymMatrix(Mat(l.mat() * s.mat() * l.mat().transpose()));
}

}  // namespace monoflow
