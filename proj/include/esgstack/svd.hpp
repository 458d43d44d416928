#pragma once

#include <cstddef>
#include <vector>

#include "esgstack/matrix.hpp"

namespace esgstack {

// Top-k singular triplets: u has orthonormal columns (n x k), sigma is sorted
// descending and non-negative, vt has orthonormal rows (k x d).
struct SvdResult {
    Matrix u;
    std::vector<double> sigma;
    Matrix vt;
};

struct JacobiOptions {
    // Convergence is measured on the Gram matrix scaled to unit Frobenius
    // norm: target drives extra cheap sweeps, accept is the hard bound.
    double off_norm_target = 1e-14;
    double off_norm_accept = 1e-12;
    std::size_t max_sweeps = 100;
};

// Eigendecomposition of a symmetric matrix by row-cyclic Jacobi rotations.
// Returns eigenvalues sorted descending; columns of `vectors` are the
// matching orthonormal eigenvectors.
struct EigenResult {
    std::vector<double> values;
    Matrix vectors;
};
EigenResult symmetric_eigen_jacobi(const Matrix& a, const JacobiOptions& opts = {});

// Truncated SVD via symmetric eigendecomposition of the smaller Gram matrix
// (x^T x or x x^T), recovering the other factor from it. The sign of each
// right-singular vector is fixed so its largest-magnitude component is
// positive. Throws on k out of range, non-finite input (including Gram
// overflow), or failure to converge.
SvdResult truncated_svd(const Matrix& x, std::size_t k, const JacobiOptions& opts = {});

} // namespace esgstack
