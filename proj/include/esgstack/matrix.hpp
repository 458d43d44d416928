#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace esgstack {

// Dense row-major matrix of doubles. The checked constructors reject
// non-finite elements; arithmetic helpers assume finite inputs and leave
// overflow detection to the routines that consume their results.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix multiply(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// a * b^T and a^T * b without materializing the transpose.
Matrix multiply_abt(const Matrix& a, const Matrix& b);
Matrix multiply_atb(const Matrix& a, const Matrix& b);

// a^T a (cols x cols) or a a^T (rows x rows); used to form the smaller Gram
// matrix for the SVD.
Matrix gram_at_a(const Matrix& a);
Matrix gram_a_at(const Matrix& a);

// Horizontal concatenation; all blocks must share the row count.
Matrix hcat(const std::vector<const Matrix*>& blocks);
Matrix hcat(const Matrix& a, const Matrix& b);

// New matrix holding the listed rows of a, in the given order.
Matrix take_rows(const Matrix& a, const std::vector<std::size_t>& indices);

double frobenius_norm(const Matrix& a);
double frobenius_distance(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& a);

std::string shape_string(const Matrix& a);

} // namespace esgstack
