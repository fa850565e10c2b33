#include "fedalign/matrix.hpp"

#include <cmath>

namespace fedalign {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("from_rows", r, c, 1, row.size());
        }
        std::size_t j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul", a.rows(), a.cols(), b.rows(), b.cols());
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* out_row = out.data() + i * n;
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* b_row = b.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("hadamard", a.rows(), a.cols(), b.rows(), b.cols());
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values()[i] *= b.values()[i];
    }
    return out;
}

Matrix axpy(double alpha, const Matrix& x, const Matrix& y) {
    if (!x.same_shape(y)) {
        throw ShapeError("axpy", x.rows(), x.cols(), y.rows(), y.cols());
    }
    Matrix out = y;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values()[i] += alpha * x.values()[i];
    }
    return out;
}

double frobenius_norm(const Matrix& m) {
    double acc = 0.0;
    for (double v : m.values()) acc += v * v;
    return std::sqrt(acc);
}

Matrix add(const Matrix& a, const Matrix& b) { return axpy(1.0, a, b); }

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("sub", a.rows(), a.cols(), b.rows(), b.cols());
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values()[i] -= b.values()[i];
    }
    return out;
}

Matrix scale(double alpha, const Matrix& m) {
    Matrix out = m;
    for (double& v : out.values()) v *= alpha;
    return out;
}

Matrix row_sums(const Matrix& m) {
    Matrix out(m.rows(), 1);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) acc += m(i, j);
        out(i, 0) = acc;
    }
    return out;
}

double max_abs(const Matrix& m) {
    double best = 0.0;
    for (double v : m.values()) {
        const double a = std::fabs(v);
        if (a > best) best = a;
    }
    return best;
}

bool all_finite(const Matrix& m) {
    for (double v : m.values()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace fedalign
