#include "esgstack/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "esgstack/errors.hpp"

namespace esgstack {

namespace {

double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t p = 0; p + 1 < a.rows(); ++p) {
        for (std::size_t q = p + 1; q < a.cols(); ++q) {
            s += 2.0 * a.at(p, q) * a.at(p, q);
        }
    }
    return std::sqrt(s);
}

// One row-cyclic sweep of Jacobi rotations over the upper triangle.
void jacobi_sweep(Matrix& a, Matrix& v) {
    const std::size_t n = a.rows();
    for (std::size_t p = 0; p + 1 < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
            const double apq = a.at(p, q);
            if (apq == 0.0) continue;
            const double tau = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
            double t;
            if (tau >= 0.0) {
                t = 1.0 / (tau + std::sqrt(1.0 + tau * tau));
            } else {
                t = -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
            }
            const double c = 1.0 / std::sqrt(1.0 + t * t);
            const double s = t * c;

            for (std::size_t i = 0; i < n; ++i) {
                const double aip = a.at(i, p);
                const double aiq = a.at(i, q);
                a.at(i, p) = c * aip - s * aiq;
                a.at(i, q) = s * aip + c * aiq;
            }
            for (std::size_t j = 0; j < n; ++j) {
                const double apj = a.at(p, j);
                const double aqj = a.at(q, j);
                a.at(p, j) = c * apj - s * aqj;
                a.at(q, j) = s * apj + c * aqj;
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double vip = v.at(i, p);
                const double viq = v.at(i, q);
                v.at(i, p) = c * vip - s * viq;
                v.at(i, q) = s * vip + c * viq;
            }
        }
    }
}

// Flip the column sign so the largest-magnitude component (first occurrence)
// is positive. Returns true if flipped.
bool fix_column_sign(Matrix& m, std::size_t col) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double mag = std::abs(m.at(i, col));
        if (mag > best) {
            best = mag;
            arg = i;
        }
    }
    if (m.at(arg, col) < 0.0) {
        for (std::size_t i = 0; i < m.rows(); ++i) m.at(i, col) = -m.at(i, col);
        return true;
    }
    return false;
}

// Extend the first `have` orthonormal columns of m with a unit vector
// orthogonal to all of them, writing it into column `have`.
void orthonormal_completion(Matrix& m, std::size_t have) {
    const std::size_t n = m.rows();
    for (std::size_t basis = 0; basis < n; ++basis) {
        std::vector<double> cand(n, 0.0);
        cand[basis] = 1.0;
        for (std::size_t c = 0; c < have; ++c) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += cand[i] * m.at(i, c);
            for (std::size_t i = 0; i < n; ++i) cand[i] -= dot * m.at(i, c);
        }
        double norm = 0.0;
        for (double x : cand) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 1e-6) {
            for (std::size_t i = 0; i < n; ++i) m.at(i, have) = cand[i] / norm;
            return;
        }
    }
    throw numeric_error("truncated_svd: orthonormal completion failed");
}

} // namespace

EigenResult symmetric_eigen_jacobi(const Matrix& a, const JacobiOptions& opts) {
    if (a.rows() != a.cols()) {
        throw std::invalid_argument("symmetric_eigen_jacobi: matrix must be square, got " +
                                    shape_string(a));
    }
    if (!a.all_finite()) {
        throw numeric_error("symmetric_eigen_jacobi: non-finite input");
    }
    const std::size_t n = a.rows();
    const double scale = frobenius_norm(a);

    Matrix work = a;
    Matrix vectors(n, n);
    for (std::size_t i = 0; i < n; ++i) vectors.at(i, i) = 1.0;

    if (scale > 0.0) {
        for (double& x : work.data()) x /= scale;
        bool converged = off_diagonal_norm(work) <= opts.off_norm_target;
        for (std::size_t sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
            jacobi_sweep(work, vectors);
            converged = off_diagonal_norm(work) <= opts.off_norm_target;
        }
        if (!converged && off_diagonal_norm(work) > opts.off_norm_accept) {
            throw numeric_error("symmetric_eigen_jacobi: no convergence within " +
                                std::to_string(opts.max_sweeps) + " sweeps");
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = work.at(i, i) * scale;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return diag[i] > diag[j]; });

    EigenResult res;
    res.values.resize(n);
    res.vectors = Matrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        res.values[c] = diag[order[c]];
        for (std::size_t r = 0; r < n; ++r) {
            res.vectors.at(r, c) = vectors.at(r, order[c]);
        }
    }
    return res;
}

SvdResult truncated_svd(const Matrix& x, std::size_t k, const JacobiOptions& opts) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (n == 0 || d == 0) {
        throw std::invalid_argument("truncated_svd: empty matrix");
    }
    if (k < 1 || k > std::min(n, d)) {
        throw std::invalid_argument("truncated_svd: k=" + std::to_string(k) +
                                    " out of range for " + shape_string(x));
    }
    if (!x.all_finite()) {
        throw numeric_error("truncated_svd: non-finite input");
    }

    const bool gram_on_cols = d <= n;
    Matrix gram = gram_on_cols ? gram_at_a(x) : gram_a_at(x);
    if (!gram.all_finite()) {
        throw numeric_error("truncated_svd: Gram matrix overflow (input too large)");
    }

    EigenResult eig = symmetric_eigen_jacobi(gram, opts);

    std::vector<double> sigma(k);
    for (std::size_t i = 0; i < k; ++i) {
        sigma[i] = std::sqrt(std::max(eig.values[i], 0.0));
    }
    const double sigma_max = sigma.empty() ? 0.0 : sigma[0];
    // Below this, the recovered factor direction is numerically meaningless;
    // use an orthonormal completion instead.
    const double tiny = sigma_max * 1e-9;

    Matrix u(n, k);
    Matrix v(d, k); // columns are right-singular vectors; returned as vt

    if (gram_on_cols) {
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t r = 0; r < d; ++r) v.at(r, c) = eig.vectors.at(r, c);
            fix_column_sign(v, c);
            if (sigma[c] > tiny && sigma[c] > 0.0) {
                for (std::size_t i = 0; i < n; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < d; ++j) s += x.at(i, j) * v.at(j, c);
                    u.at(i, c) = s / sigma[c];
                }
            } else {
                orthonormal_completion(u, c);
            }
        }
    } else {
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t r = 0; r < n; ++r) u.at(r, c) = eig.vectors.at(r, c);
            if (sigma[c] > tiny && sigma[c] > 0.0) {
                for (std::size_t j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < n; ++i) s += x.at(i, j) * u.at(i, c);
                    v.at(j, c) = s / sigma[c];
                }
                if (fix_column_sign(v, c)) {
                    for (std::size_t i = 0; i < n; ++i) u.at(i, c) = -u.at(i, c);
                }
            } else {
                orthonormal_completion(v, c);
                fix_column_sign(v, c);
            }
        }
    }

    SvdResult res;
    res.u = std::move(u);
    res.sigma = std::move(sigma);
    res.vt = transpose(v);
    return res;
}

} // namespace esgstack
