#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "d2st/matrix.hpp"

namespace d2st::linalg {

struct EigenDecomposition {
    std::vector<double> eigenvalues; // sorted descending
    Matrix eigenvectors;             // column k pairs with eigenvalues[k]
};

// Symmetric eigendecomposition by cyclic Jacobi sweeps.
// Requires A square and symmetric to 1e-10 relative tolerance.
// Guarantees ||V^T V - I||_max <= 1e-8 and ||V L V^T - A||_max <= 1e-8 (1 + ||A||_max).
EigenDecomposition sym_eigen(const Matrix& a);

// Solve A x = b for symmetric positive-definite A via Cholesky.
// Throws numeric_error when the factorization breaks down.
std::vector<double> solve_spd(const Matrix& a, std::span<const double> b);

struct PcaResult {
    Matrix projection;               // k x H, rows are principal directions
    std::vector<double> eigenvalues; // top-k covariance eigenvalues, descending
    bool degenerate = false;         // pooled covariance had no positive eigenvalue
};

// Fit PCA on the rows of z (covariance denominator n-1). Row signs are
// fixed so the first entry with |entry| > 1e-12 is positive. Tied
// eigenvalues are not an error; the returned projection is then one
// valid choice among the rotations of the tied subspace.
PcaResult pca_fit(const Matrix& z, std::size_t k);

// Apply a fitted projection to observations: z * P^T. Rows are not
// centered here; mean differences and covariances downstream are
// unchanged by centering.
Matrix pca_project(const Matrix& z, const Matrix& projection);

} // namespace d2st::linalg
