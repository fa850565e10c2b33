#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedalign {

// ---------------------------------------------------------------------------
// Thrown whenever two operands have incompatible shapes.  Carries both shapes
// so callers (and test assertions) can inspect exactly what was passed.
// ---------------------------------------------------------------------------
struct ShapeError : std::runtime_error {
    std::size_t a_rows, a_cols, b_rows, b_cols;

    ShapeError(const std::string& op,
               std::size_t ar, std::size_t ac,
               std::size_t br, std::size_t bc)
        : std::runtime_error(op + ": incompatible shapes (" + std::to_string(ar) +
                             "x" + std::to_string(ac) + ") vs (" + std::to_string(br) +
                             "x" + std::to_string(bc) + ")"),
          a_rows(ar), a_cols(ac), b_rows(br), b_cols(bc) {}
};

// ---------------------------------------------------------------------------
// Dense row-major matrix of doubles.  The sole numeric container of the
// library: batches are stored with one sample per column.  Invariant: the
// backing vector always holds exactly rows()*cols() entries.
// ---------------------------------------------------------------------------
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Matrix& a, const Matrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// --- core operations -------------------------------------------------------
// All functions are pure: inputs are never modified, results are returned by
// value.  Shape mismatches throw ShapeError.

// (m x k) * (k x n) -> (m x n), naive triple loop.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Elementwise product; shapes must match exactly.
Matrix hadamard(const Matrix& a, const Matrix& b);

// alpha * x + y; shapes must match exactly.
Matrix axpy(double alpha, const Matrix& x, const Matrix& y);

double frobenius_norm(const Matrix& m);

// --- small helpers used across modules -------------------------------------

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(double alpha, const Matrix& m);

// Column vector (rows x 1) holding the sum of each row.
Matrix row_sums(const Matrix& m);

// Largest absolute entry (0 for an empty matrix).
double max_abs(const Matrix& m);

// True when no entry is NaN or infinite.
bool all_finite(const Matrix& m);

}  // namespace fedalign
