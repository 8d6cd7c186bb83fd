#pragma once

#include <cstddef>
#include <vector>

namespace hiersfl {

/// Dense row-major matrix of doubles. Rows are samples, columns features.
struct Tensor2D {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    Tensor2D() = default;
    Tensor2D(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Tensor2D(size_t r, size_t c, std::vector<double> d);

    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }

    size_t size() const { return rows * cols; }
    bool same_shape(const Tensor2D& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
};

// out = a * b                 (a: n x k, b: k x m)
Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
// out = a^T * b               (a: k x n, b: k x m)
Tensor2D matmul_at_b(const Tensor2D& a, const Tensor2D& b);
// out = a * b^T               (a: n x k, b: m x k)
Tensor2D matmul_a_bt(const Tensor2D& a, const Tensor2D& b);

// Adds a length-cols row vector to every row of t.
void add_row_vector(Tensor2D& t, const double* row, size_t len);
// Column sums of t into out (length t.cols).
void column_sums(const Tensor2D& t, double* out);

}  // namespace hiersfl
