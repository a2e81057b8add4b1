#include "d2st/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace d2st::linalg {

namespace {

double off_diagonal_fro(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

void check_symmetric(const Matrix& a, const char* who) {
    if (a.rows() != a.cols())
        throw contract_error(std::string(who) + ": matrix is not square (" +
                             std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + ")");
    const double scale = std::max(a.max_abs(), 1.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > 1e-10 * scale)
                throw contract_error(std::string(who) + ": matrix is not symmetric at (" +
                                     std::to_string(i) + "," + std::to_string(j) + ")");
}

} // namespace

EigenDecomposition sym_eigen(const Matrix& input) {
    check_symmetric(input, "sym_eigen");
    if (!input.all_finite())
        throw contract_error("sym_eigen: matrix has non-finite entries");

    const std::size_t n = input.rows();
    Matrix a = input;
    Matrix v = Matrix::identity(n);

    // Cyclic sweeps; converged when the off-diagonal Frobenius norm drops
    // below 1e-12 relative to the matrix scale.
    const double tol = 1e-12 * std::max(input.frobenius_norm(), 1e-300);
    const int max_sweeps = 100;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        if (off_diagonal_fro(a) <= tol) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                // smaller-magnitude root for stability
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenDecomposition out{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        out.eigenvalues[k] = a(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i)
            out.eigenvectors(i, k) = v(i, order[k]);
    }
    return out;
}

std::vector<double> solve_spd(const Matrix& a, std::span<const double> b) {
    check_symmetric(a, "solve_spd");
    const std::size_t n = a.rows();
    if (b.size() != n)
        throw contract_error("solve_spd: right-hand side length " + std::to_string(b.size()) +
                             " does not match matrix order " + std::to_string(n));

    // lower-triangular Cholesky factor, in place on a copy
    Matrix l = a;
    for (std::size_t j = 0; j < n; ++j) {
        double d = l(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0) || !std::isfinite(d))
            throw numeric_error("solve_spd: matrix is not positive definite (pivot " +
                                std::to_string(j) + ")");
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = l(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }

    std::vector<double> x(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) { // L y = b
        for (std::size_t k = 0; k < i; ++k) x[i] -= l(i, k) * x[k];
        x[i] /= l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) { // L^T x = y
        for (std::size_t k = ii + 1; k < n; ++k) x[ii] -= l(k, ii) * x[k];
        x[ii] /= l(ii, ii);
    }
    return x;
}

PcaResult pca_fit(const Matrix& z, std::size_t k) {
    const std::size_t n = z.rows();
    const std::size_t h = z.cols();
    if (n < 2)
        throw contract_error("pca_fit: need at least 2 observations, got " + std::to_string(n));
    if (k < 1 || k > std::min(n, h))
        throw contract_error("pca_fit: k = " + std::to_string(k) + " out of range [1, " +
                             std::to_string(std::min(n, h)) + "]");

    const std::vector<double> mu = column_means(z);
    Matrix cov(h, h);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < h; ++i) {
            const double zi = z(r, i) - mu[i];
            for (std::size_t j = i; j < h; ++j)
                cov(i, j) += zi * (z(r, j) - mu[j]);
        }
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = i; j < h; ++j) {
            cov(i, j) /= static_cast<double>(n - 1);
            cov(j, i) = cov(i, j);
        }

    const EigenDecomposition eig = sym_eigen(cov);

    PcaResult out{Matrix(k, h), std::vector<double>(k), false};
    for (std::size_t r = 0; r < k; ++r) {
        out.eigenvalues[r] = eig.eigenvalues[r];
        for (std::size_t j = 0; j < h; ++j)
            out.projection(r, j) = eig.eigenvectors(j, r);
        // deterministic sign: first entry above 1e-12 in magnitude is positive
        for (std::size_t j = 0; j < h; ++j) {
            const double e = out.projection(r, j);
            if (std::abs(e) > 1e-12) {
                if (e < 0.0)
                    for (std::size_t jj = 0; jj < h; ++jj)
                        out.projection(r, jj) = -out.projection(r, jj);
                break;
            }
        }
    }
    out.degenerate = !(eig.eigenvalues[0] > 0.0);
    return out;
}

Matrix pca_project(const Matrix& z, const Matrix& projection) {
    if (z.cols() != projection.cols())
        throw contract_error("pca_project: feature dimension mismatch");
    Matrix out(z.rows(), projection.rows());
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t r = 0; r < projection.rows(); ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < z.cols(); ++j) s += z(i, j) * projection(r, j);
            out(i, r) = s;
        }
    return out;
}

} // namespace d2st::linalg
