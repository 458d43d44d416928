#include "esgstack/matrix.hpp"

#include <cmath>
#include <stdexcept>

#include "esgstack/errors.hpp"

namespace esgstack {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                    " does not match " + std::to_string(rows_) + "x" +
                                    std::to_string(cols_));
    }
    if (!all_finite()) {
        throw numeric_error("Matrix: non-finite element");
    }
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("multiply: inner dimensions " + shape_string(a) + " vs " +
                                    shape_string(b));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return out;
}

Matrix multiply_abt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("multiply_abt: inner dimensions " + shape_string(a) + " vs " +
                                    shape_string(b) + "^T");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(j, k);
            out.at(i, j) = acc;
        }
    }
    return out;
}

Matrix multiply_atb(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("multiply_atb: inner dimensions " + shape_string(a) +
                                    "^T vs " + shape_string(b));
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a.at(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out.at(i, j) += aki * b.at(k, j);
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out.at(j, i) = a.at(i, j);
        }
    }
    return out;
}

Matrix gram_at_a(const Matrix& a) {
    Matrix out(a.cols(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ari = a.at(r, i);
            if (ari == 0.0) continue;
            for (std::size_t j = i; j < a.cols(); ++j) {
                out.at(i, j) += ari * a.at(r, j);
            }
        }
    }
    for (std::size_t i = 0; i < a.cols(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            out.at(i, j) = out.at(j, i);
        }
    }
    return out;
}

Matrix gram_a_at(const Matrix& a) {
    Matrix out(a.rows(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = i; j < a.rows(); ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < a.cols(); ++c) {
                s += a.at(i, c) * a.at(j, c);
            }
            out.at(i, j) = s;
            out.at(j, i) = s;
        }
    }
    return out;
}

Matrix hcat(const std::vector<const Matrix*>& blocks) {
    if (blocks.empty()) {
        throw std::invalid_argument("hcat: no blocks");
    }
    const std::size_t rows = blocks.front()->rows();
    std::size_t cols = 0;
    for (const Matrix* b : blocks) {
        if (b->rows() != rows) {
            throw std::invalid_argument("hcat: row count mismatch (" + std::to_string(rows) +
                                        " vs " + std::to_string(b->rows()) + ")");
        }
        cols += b->cols();
    }
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        std::size_t off = 0;
        for (const Matrix* b : blocks) {
            for (std::size_t j = 0; j < b->cols(); ++j) {
                out.at(i, off + j) = b->at(i, j);
            }
            off += b->cols();
        }
    }
    return out;
}

Matrix hcat(const Matrix& a, const Matrix& b) { return hcat({&a, &b}); }

Matrix take_rows(const Matrix& a, const std::vector<std::size_t>& indices) {
    Matrix out(indices.size(), a.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= a.rows()) {
            throw std::out_of_range("take_rows: index " + std::to_string(indices[i]));
        }
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out.at(i, j) = a.at(indices[i], j);
        }
    }
    return out;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument("frobenius_distance: shape mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

std::string shape_string(const Matrix& a) {
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

} // namespace esgstack
