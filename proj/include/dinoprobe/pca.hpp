#pragma once

#include "dinoprobe/matrix.hpp"

#include <span>
#include <vector>

namespace dinoprobe {

/// Linear projection onto the leading principal axes.
struct PCAProjection {
    std::vector<double> mean;              ///< d
    MatrixD components;                    ///< k x d, orthonormal rows
    std::vector<double> explained_variance; ///< k, population variance, descending
    double total_variance = 0.0;           ///< sum over all d of the population variance

    std::size_t input_dim() const { return mean.size(); }
    std::size_t k() const { return components.rows(); }
    /// explained_variance[i] / total_variance
    std::vector<double> explained_ratio() const;
};

struct QrResult {
    MatrixD q; ///< rows x cols, orthonormal columns (filled only on request)
    MatrixD r; ///< cols x cols, upper triangular
};

/// Thin Householder QR of a tall matrix (rows >= cols).
QrResult householder_qr(MatrixD a, bool want_q);

struct SvdResult {
    std::vector<double> singular_values; ///< descending
    MatrixD v;                           ///< cols x cols, right singular vectors as columns
};

/// Right singular vectors and singular values by one-sided (Hestenes)
/// Jacobi rotations on the columns. Any shape; V is always orthonormal.
SvdResult jacobi_svd(MatrixD a);

/// SVD of the centred data X through a QR factorization: of X when n >= d,
/// of X^T otherwise (X = R^T Q^T, right singular vectors Q W). Each component's largest
/// magnitude entry is made positive (first one on ties). Throws ConfigError
/// when n < 2 or k > min(n - 1, d) or k == 0, NumericError for zero total
/// variance.
PCAProjection pca_fit(const MatrixF& x, std::size_t k);

/// (x - mean) * components^T. Throws ConfigError on a column mismatch.
MatrixD pca_transform(const PCAProjection& p, const MatrixF& x);
/// scores * components + mean.
MatrixD pca_reconstruct(const PCAProjection& p, const MatrixD& scores);

/// Mean score per class (rows with other labels ignored); classes x k.
MatrixD class_centroids(const MatrixD& scores, std::span<const int> labels, std::size_t classes);

} // namespace dinoprobe
