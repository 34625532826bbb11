#pragma once

// Canonical- and moment-form Gaussians and the small dense SPD algebra the
// message updates are built from. All inverses are Cholesky solves.

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "cgfb/errors.hpp"

namespace cgfb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace tolerance {
inline constexpr double symmetry = 1e-9;    // absolute, max-norm of X - X^T
inline constexpr double psd = 1e-10;        // eigenvalues in [-psd, 0) are clamped
inline constexpr double solve = 1e-8;       // relative residual of spd_solve
inline constexpr double round_trip = 1e-10; // relative, moment <-> canonical
} // namespace tolerance

/// N(mean, cov) with cov symmetric positive definite.
struct MomentGaussian {
    Vector mean;
    Matrix cov;

    [[nodiscard]] Eigen::Index dim() const { return mean.size(); }
};

/// exp(-1/2 x^T info_matrix x + x^T info_vector). The information matrix may
/// be singular (a flat message is all zeros) and, for messages of the
/// collective iteration, indefinite.
struct CanonicalGaussian {
    Matrix info_matrix;
    Vector info_vector;

    [[nodiscard]] Eigen::Index dim() const { return info_vector.size(); }

    [[nodiscard]] static CanonicalGaussian flat(Eigen::Index d) {
        return {Matrix::Zero(d, d), Vector::Zero(d)};
    }
};

using MarginalTrajectory = std::vector<MomentGaussian>;

[[nodiscard]] inline double asymmetry(const Matrix& m) {
    if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
    if (m.size() == 0) return 0.0;
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

[[nodiscard]] inline bool is_symmetric(const Matrix& m, double tol = tolerance::symmetry) {
    return asymmetry(m) <= tol;
}

[[nodiscard]] inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

[[nodiscard]] inline double min_eigenvalue(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Symmetrizes `m` and clamps eigenvalues in [-tolerance::psd, 0) to zero.
/// Anything more negative is real divergence and throws.
[[nodiscard]] inline Matrix repair_psd(const Matrix& m, const std::string& what = "matrix") {
    Matrix s = symmetrized(m);
    if (s.size() == 0) return s;
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    const Vector& ev = es.eigenvalues();
    const double lo = ev.minCoeff();
    if (lo >= 0.0) return s;
    if (lo < -tolerance::psd) throw NotPositiveSemidefinite(what + " is not positive semidefinite", lo);
    Vector clamped = ev.cwiseMax(0.0);
    return symmetrized(es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose());
}

namespace detail {

inline void require_square(const Matrix& m, const char* what) {
    if (m.rows() != m.cols())
        throw DimensionMismatch(std::string(what) + " must be square, got " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
}

inline Eigen::LLT<Matrix> cholesky(const Matrix& m, const char* what) {
    require_square(m, what);
    if (!is_symmetric(m)) throw NotSymmetric(std::string(what) + " is not symmetric");
    Eigen::LLT<Matrix> llt(symmetrized(m));
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite(std::string(what) + " is not positive definite");
    return llt;
}

} // namespace detail

/// Solves m x = rhs for symmetric positive definite m.
template <typename Rhs>
[[nodiscard]] Matrix spd_solve(const Matrix& m, const Eigen::MatrixBase<Rhs>& rhs) {
    if (rhs.rows() != m.rows()) throw DimensionMismatch("spd_solve: rhs rows do not match matrix");
    return detail::cholesky(m, "spd_solve matrix").solve(rhs.derived().eval());
}

[[nodiscard]] inline Matrix spd_inverse(const Matrix& m) {
    auto llt = detail::cholesky(m, "spd_inverse matrix");
    return symmetrized(llt.solve(Matrix::Identity(m.rows(), m.cols())));
}

[[nodiscard]] inline bool is_positive_definite(const Matrix& m) {
    if (m.rows() != m.cols() || !is_symmetric(m)) return false;
    return Eigen::LLT<Matrix>(symmetrized(m)).info() == Eigen::Success;
}

/// P = Lambda^-1, mu = Lambda^-1 eta. Throws NotPositiveDefinite for an
/// improper density.
[[nodiscard]] inline MomentGaussian to_moment(const CanonicalGaussian& g) {
    if (g.info_matrix.rows() != g.info_vector.size())
        throw DimensionMismatch("to_moment: info matrix and info vector disagree in dimension");
    auto llt = detail::cholesky(g.info_matrix, "information matrix");
    const auto d = g.dim();
    return {llt.solve(g.info_vector), symmetrized(llt.solve(Matrix::Identity(d, d)))};
}

[[nodiscard]] inline CanonicalGaussian to_canonical(const MomentGaussian& g) {
    if (g.cov.rows() != g.mean.size())
        throw DimensionMismatch("to_canonical: covariance and mean disagree in dimension");
    auto llt = detail::cholesky(g.cov, "covariance");
    const auto d = g.dim();
    return {symmetrized(llt.solve(Matrix::Identity(d, d))), llt.solve(g.mean)};
}

/// Unnormalized product: information matrices and vectors add.
[[nodiscard]] inline CanonicalGaussian canonical_product(std::span<const CanonicalGaussian> factors) {
    if (factors.empty()) throw DimensionMismatch("canonical_product of zero factors");
    const auto d = factors.front().dim();
    CanonicalGaussian out = CanonicalGaussian::flat(d);
    for (const auto& f : factors) {
        if (f.dim() != d || f.info_matrix.rows() != d || f.info_matrix.cols() != d)
            throw DimensionMismatch("canonical_product: operand dimensions differ");
        out.info_matrix += f.info_matrix;
        out.info_vector += f.info_vector;
    }
    out.info_matrix = symmetrized(out.info_matrix);
    return out;
}

[[nodiscard]] inline CanonicalGaussian canonical_product(std::initializer_list<CanonicalGaussian> factors) {
    return canonical_product(std::span<const CanonicalGaussian>(factors.begin(), factors.size()));
}

[[nodiscard]] inline CanonicalGaussian canonical_product(const CanonicalGaussian& a, const CanonicalGaussian& b) {
    return canonical_product({a, b});
}

} // namespace cgfb
