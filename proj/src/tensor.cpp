#include "hiersfl/tensor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "hiersfl/errors.hpp"

namespace hiersfl {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

Tensor2D::Tensor2D(size_t r, size_t c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols)
        throw ContractViolation("Tensor2D: data length does not match rows*cols");
}

bool Tensor2D::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
    if (a.cols != b.rows) throw ContractViolation("matmul: inner dimensions differ");
    Tensor2D out(a.rows, b.cols);
    RowMajorMap ma(a.data.data(), a.rows, a.cols);
    RowMajorMap mb(b.data.data(), b.rows, b.cols);
    RowMajorMutMap mo(out.data.data(), out.rows, out.cols);
    mo.noalias() = ma * mb;
    return out;
}

Tensor2D matmul_at_b(const Tensor2D& a, const Tensor2D& b) {
    if (a.rows != b.rows) throw ContractViolation("matmul_at_b: row counts differ");
    Tensor2D out(a.cols, b.cols);
    RowMajorMap ma(a.data.data(), a.rows, a.cols);
    RowMajorMap mb(b.data.data(), b.rows, b.cols);
    RowMajorMutMap mo(out.data.data(), out.rows, out.cols);
    mo.noalias() = ma.transpose() * mb;
    return out;
}

Tensor2D matmul_a_bt(const Tensor2D& a, const Tensor2D& b) {
    if (a.cols != b.cols) throw ContractViolation("matmul_a_bt: column counts differ");
    Tensor2D out(a.rows, b.rows);
    RowMajorMap ma(a.data.data(), a.rows, a.cols);
    RowMajorMap mb(b.data.data(), b.rows, b.cols);
    RowMajorMutMap mo(out.data.data(), out.rows, out.cols);
    mo.noalias() = ma * mb.transpose();
    return out;
}

void add_row_vector(Tensor2D& t, const double* row, size_t len) {
    if (len != t.cols) throw ContractViolation("add_row_vector: length does not match cols");
    for (size_t r = 0; r < t.rows; ++r) {
        double* p = t.data.data() + r * t.cols;
        for (size_t c = 0; c < t.cols; ++c) p[c] += row[c];
    }
}

void column_sums(const Tensor2D& t, double* out) {
    for (size_t c = 0; c < t.cols; ++c) out[c] = 0.0;
    for (size_t r = 0; r < t.rows; ++r) {
        const double* p = t.data.data() + r * t.cols;
        for (size_t c = 0; c < t.cols; ++c) out[c] += p[c];
    }
}

}  // namespace hiersfl
