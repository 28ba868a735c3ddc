#pragma once

// Dense symmetric matrices and linear maps for diffusion data.
//
// Every matrix in this library is at most 8x8, so storage is Eigen's
// dynamic-size type with a fixed upper bound: no heap traffic on the
// jet hot path.

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace monoflow {

inline constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                          kMaxDim, kMaxDim>;

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class SingularMatrix : public std::runtime_error {
public:
    SingularMatrix(const std::string& what, double condition)
        : std::runtime_error(what), condition_(condition) {}
    double condition() const { return condition_; }

private:
    double condition_;
};

/// Inverse is refused beyond this condition number.
inline constexpr double kConditionGuard = 1e12;

class SymMatrix {
public:
    SymMatrix() : m_(Mat::Identity(1, 1)) {}
    /// Symmetrizes (S + S^T)/2 on construction.
    explicit SymMatrix(const Mat& m);
    SymMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static SymMatrix identity(int n);
    static SymMatrix zero(int n);
    static SymMatrix diagonal(const std::vector<double>& d);
    static SymMatrix scalar(int n, double s) { return SymMatrix(Mat::Identity(n, n) * s); }

    int dim() const { return static_cast<int>(m_.rows()); }
    double operator()(int i, int j) const { return m_(i, j); }
    const Mat& mat() const { return m_; }

    std::vector<double> eigenvalues() const;  // ascending
    double minEigenvalue() const;
    double maxEigenvalue() const;
    double det() const;
    double trace() const { return m_.trace(); }
    double condition() const;

    /// Throws SingularMatrix if the condition number exceeds kConditionGuard.
    SymMatrix inverse() const;
    /// Symmetric square root of a PSD matrix (negative eigenvalues clamped).
    SymMatrix sqrt() const;
    SymMatrix invSqrt() const;

    SymMatrix operator+(const SymMatrix& o) const;
    SymMatrix operator-(const SymMatrix& o) const;
    SymMatrix operator*(double s) const { return SymMatrix(m_ * s); }

    /// Max entrywise difference; infinity on dimension mismatch.
    double maxAbsDiff(const SymMatrix& o) const;
    bool isScalarMultipleOfIdentity(double tol, double* scale = nullptr) const;

    std::vector<std::vector<double>> rows() const;

private:
    Mat m_;
};

/// A linear map R^cols -> R^rows.
class LinearMap {
public:
    LinearMap() : m_(Mat::Identity(1, 1)) {}
    explicit LinearMap(const Mat& m) : m_(m) {}
    LinearMap(std::initializer_list<std::initializer_list<double>> rows);
    static LinearMap identity(int n) { return LinearMap(Mat::Identity(n, n)); }
    static LinearMap fromRows(const std::vector<std::vector<double>>& rows);

    int rows() const { return static_cast<int>(m_.rows()); }
    int cols() const { return static_cast<int>(m_.cols()); }
    const Mat& mat() const { return m_; }
    Vec apply(const Vec& x) const { return m_ * x; }
    Mat transposeMat() const { return m_.transpose(); }

    bool isSquare() const { return rows() == cols(); }
    bool hasFullRowRank(double tol = 1e-10) const;
    /// L L^T == I within tol.
    bool isIsometry(double tol = 1e-12) const;
    double det() const;
    LinearMap inverse() const;

    std::vector<std::vector<double>> toRows() const;

private:
    Mat m_;
};

bool isPSD(const SymMatrix& s, double tol);
/// S2 - S1 is PSD within tol.
bool psdLeq(const SymMatrix& s1, const SymMatrix& s2, double tol);
SymMatrix directSum(const SymMatrix& a, const SymMatrix& b);
/// L^T S L.
SymMatrix congruence(const LinearMap& l, const SymMatrix& s);
/// L S L^T.
SymMatrix pushForward(const LinearMap& l, const SymMatrix& s);

}  // namespace monoflow
