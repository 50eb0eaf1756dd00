#ifndef NR4DER_TENSOR_HPP
#define NR4DER_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "nr4der/common.hpp"

namespace nr4der::tensorkit {

using Vector = std::vector<double>;

// Dense row-major matrix of 64-bit floats with a fixed shape.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 0.0); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    void fill(double v) { data_.assign(data_.size(), v); }

    Vector row(std::size_t i) const {
        return Vector(data_.begin() + static_cast<long>(i * cols_),
                      data_.begin() + static_cast<long>((i + 1) * cols_));
    }
    void set_row(std::size_t i, const Vector& v) {
        if (v.size() != cols_) throw ShapeError("set_row: length mismatch");
        for (std::size_t j = 0; j < cols_; ++j) data_[i * cols_ + j] = v[j];
    }

    Matrix& operator+=(const Matrix& o) {
        if (!same_shape(o)) throw ShapeError("Matrix +=: shape mismatch");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

// y = A x
Vector matvec(const Matrix& A, const Vector& x);
// y = A^T x
Vector matvec_t(const Matrix& A, const Vector& x);
// A += scale * u v^T
void add_outer(Matrix& A, const Vector& u, const Vector& v, double scale = 1.0);

// C = A B, C = A^T B, C = A B^T
Matrix matmul(const Matrix& A, const Matrix& B);
Matrix matmul_at(const Matrix& A, const Matrix& B);
Matrix matmul_bt(const Matrix& A, const Matrix& B);

double dot(const Vector& a, const Vector& b);
// y += s * x
void axpy(Vector& y, double s, const Vector& x);
Vector concat(const Vector& a, const Vector& b);
Vector concat(const Vector& a, const Vector& b, const Vector& c);

double squared_distance(const Vector& a, const Vector& b);

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}
inline double softplus(double x) {
    // log(1 + e^x), overflow-safe
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}
inline double log_sigmoid(double x) { return -softplus(-x); }

}  // namespace nr4der::tensorkit

#endif
