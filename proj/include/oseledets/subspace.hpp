#pragma once

// Grassmannian toolkit: orthonormal bases, projectors, the projector-norm
// distance, complements, intersections, direct sums, and the minimal-sum
// gap gamma. Subspaces are stored as orthonormal bases; projectors are
// derived on demand (repeated products degrade idempotence).

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "oseledets/errors.hpp"

namespace oseledets {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ProjectorMatrix = Eigen::MatrixXd;

struct Subspace {
    int ambient_dim = 0;
    Matrix basis;  // ambient_dim x m, orthonormal columns; m = 0 is the zero subspace

    int dim() const { return static_cast<int>(basis.cols()); }

    static Subspace zero(int d) {
        Subspace s;
        s.ambient_dim = d;
        s.basis = Matrix::Zero(d, 0);
        return s;
    }

    static Subspace full(int d) {
        Subspace s;
        s.ambient_dim = d;
        s.basis = Matrix::Identity(d, d);
        return s;
    }

    // Wraps a matrix already known to have orthonormal columns.
    static Subspace from_orthonormal(Matrix b) {
        Subspace s;
        s.ambient_dim = static_cast<int>(b.rows());
        s.basis = std::move(b);
        return s;
    }
};

inline double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

// Modified Gram-Schmidt with a second orthogonalization pass. Columns whose
// residual falls below tol relative to the largest input column norm are
// dropped, so rank decisions are scale free.
inline Subspace orthonormalize(const Matrix& vectors, double tol = 1e-10) {
    if (!vectors.allFinite())
        raise(ErrorCode::NonFiniteInput, "orthonormalize: non-finite entry in input");
    const int d = static_cast<int>(vectors.rows());
    const int k = static_cast<int>(vectors.cols());
    double scale = 0.0;
    for (int j = 0; j < k; ++j) scale = std::max(scale, vectors.col(j).norm());
    if (scale == 0.0) return Subspace::zero(d);

    Matrix q(d, std::min(d, k));
    int m = 0;
    for (int j = 0; j < k; ++j) {
        Vector v = vectors.col(j);
        for (int pass = 0; pass < 2; ++pass)
            for (int i = 0; i < m; ++i) v -= q.col(i).dot(v) * q.col(i);
        const double r = v.norm();
        if (r >= tol * scale) {
            q.col(m) = v / r;
            ++m;
        }
    }
    return Subspace::from_orthonormal(q.leftCols(m));
}

inline ProjectorMatrix projector(const Subspace& v) {
    if (v.dim() == 0) return Matrix::Zero(v.ambient_dim, v.ambient_dim);
    return v.basis * v.basis.transpose();
}

// Spectral norm of P_V - P_W. The difference is symmetric, so the norm is the
// largest absolute eigenvalue.
inline double subspace_distance(const Subspace& v, const Subspace& w) {
    if (v.ambient_dim != w.ambient_dim)
        raise(ErrorCode::DimensionMismatch, "subspace_distance: ambient dims " +
                std::to_string(v.ambient_dim) + " vs " + std::to_string(w.ambient_dim));
    const Matrix diff = projector(v) - projector(w);
    Eigen::SelfAdjointEigenSolver<Matrix> es(diff, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

// Trailing columns of the full Householder Q of the basis.
inline Subspace orthogonal_complement(const Subspace& v) {
    const int d = v.ambient_dim;
    const int m = v.dim();
    if (m == 0) return Subspace::full(d);
    if (m == d) return Subspace::zero(d);
    Eigen::HouseholderQR<Matrix> qr(v.basis);
    Matrix q = qr.householderQ();
    return Subspace::from_orthonormal(q.rightCols(d - m));
}

// Common directions detected via principal vectors whose principal-angle
// cosine exceeds 1 - tol. Returns the zero subspace when the intersection is
// trivial.
inline Subspace intersect(const Subspace& v, const Subspace& w, double tol = 1e-8) {
    if (v.ambient_dim != w.ambient_dim)
        raise(ErrorCode::DimensionMismatch, "intersect: ambient dims differ");
    if (v.dim() == 0 || w.dim() == 0) return Subspace::zero(v.ambient_dim);
    const Matrix c = v.basis.transpose() * w.basis;
    Eigen::JacobiSVD<Matrix> svd(c, Eigen::ComputeFullU);
    int count = 0;
    while (count < svd.singularValues().size() && svd.singularValues()(count) > 1.0 - tol)
        ++count;
    if (count == 0) return Subspace::zero(v.ambient_dim);
    // Principal vectors on the V side; orthonormal since U and basis are.
    return Subspace::from_orthonormal(v.basis * svd.matrixU().leftCols(count));
}

inline Subspace direct_sum(const Subspace& v, const Subspace& w, double tol = 1e-8) {
    if (v.ambient_dim != w.ambient_dim)
        raise(ErrorCode::DimensionMismatch, "direct_sum: ambient dims differ");
    if (v.dim() == 0) return w;
    if (w.dim() == 0) return v;
    if (intersect(v, w, tol).dim() > 0)
        raise(ErrorCode::NotTransverse, "direct_sum: subspaces share a direction");
    Matrix joint(v.ambient_dim, v.dim() + w.dim());
    joint << v.basis, w.basis;
    Subspace s = orthonormalize(joint);
    if (s.dim() != v.dim() + w.dim())
        raise(ErrorCode::NotTransverse, "direct_sum: union is rank deficient");
    return s;
}

// gamma = inf{ ||v1+v2|| : unit v1 in V, unit v2 in W }. Since ||v1+v2||^2 =
// 2 + 2<v1,v2> and the infimum of <v1,v2> over unit vectors is -sigma_max of
// the cross-Gram matrix, gamma = sqrt(2 - 2 sigma_max).
inline double min_sum_gap(const Subspace& v, const Subspace& w, double tol = 1e-8) {
    if (v.ambient_dim != w.ambient_dim)
        raise(ErrorCode::DimensionMismatch, "min_sum_gap: ambient dims differ");
    if (v.dim() == 0 || w.dim() == 0)
        raise(ErrorCode::DimensionMismatch, "min_sum_gap: requires nonzero subspaces");
    const double sigma = spectral_norm(v.basis.transpose() * w.basis);
    if (sigma >= 1.0 - tol)
        raise(ErrorCode::DegenerateIntersection,
              "min_sum_gap: subspaces share a direction (cos = " + std::to_string(sigma) + ")");
    return std::sqrt(std::max(0.0, 2.0 - 2.0 * sigma));
}

}  // namespace oseledets
