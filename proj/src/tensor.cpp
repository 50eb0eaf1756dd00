#include "nr4der/tensor.hpp"

namespace nr4der::tensorkit {

bool all_finite(const Vector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

bool all_finite(const Matrix& m) { return all_finite(m.raw()); }

Vector matvec(const Matrix& A, const Vector& x) {
    if (A.cols() != x.size()) throw ShapeError("matvec: dimension mismatch");
    Vector y(A.rows(), 0.0);
    const double* a = A.data();
    for (std::size_t i = 0; i < A.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < A.cols(); ++j) s += a[i * A.cols() + j] * x[j];
        y[i] = s;
    }
    return y;
}

Vector matvec_t(const Matrix& A, const Vector& x) {
    if (A.rows() != x.size()) throw ShapeError("matvec_t: dimension mismatch");
    Vector y(A.cols(), 0.0);
    const double* a = A.data();
    for (std::size_t i = 0; i < A.rows(); ++i) {
        const double xi = x[i];
        for (std::size_t j = 0; j < A.cols(); ++j) y[j] += a[i * A.cols() + j] * xi;
    }
    return y;
}

void add_outer(Matrix& A, const Vector& u, const Vector& v, double scale) {
    if (A.rows() != u.size() || A.cols() != v.size())
        throw ShapeError("add_outer: dimension mismatch");
    double* a = A.data();
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double su = scale * u[i];
        for (std::size_t j = 0; j < v.size(); ++j) a[i * v.size() + j] += su * v[j];
    }
}

Matrix matmul(const Matrix& A, const Matrix& B) {
    if (A.cols() != B.rows()) throw ShapeError("matmul: dimension mismatch");
    Matrix C(A.rows(), B.cols());
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t k = 0; k < A.cols(); ++k) {
            const double a = A(i, k);
            for (std::size_t j = 0; j < B.cols(); ++j) C(i, j) += a * B(k, j);
        }
    return C;
}

Matrix matmul_at(const Matrix& A, const Matrix& B) {
    if (A.rows() != B.rows()) throw ShapeError("matmul_at: dimension mismatch");
    Matrix C(A.cols(), B.cols());
    for (std::size_t k = 0; k < A.rows(); ++k)
        for (std::size_t i = 0; i < A.cols(); ++i) {
            const double a = A(k, i);
            for (std::size_t j = 0; j < B.cols(); ++j) C(i, j) += a * B(k, j);
        }
    return C;
}

Matrix matmul_bt(const Matrix& A, const Matrix& B) {
    if (A.cols() != B.cols()) throw ShapeError("matmul_bt: dimension mismatch");
    Matrix C(A.rows(), B.rows());
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < B.rows(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < A.cols(); ++k) s += A(i, k) * B(j, k);
            C(i, j) = s;
        }
    return C;
}

double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw ShapeError("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void axpy(Vector& y, double s, const Vector& x) {
    if (y.size() != x.size()) throw ShapeError("axpy: dimension mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

Vector concat(const Vector& a, const Vector& b) {
    Vector r;
    r.reserve(a.size() + b.size());
    r.insert(r.end(), a.begin(), a.end());
    r.insert(r.end(), b.begin(), b.end());
    return r;
}

Vector concat(const Vector& a, const Vector& b, const Vector& c) {
    Vector r;
    r.reserve(a.size() + b.size() + c.size());
    r.insert(r.end(), a.begin(), a.end());
    r.insert(r.end(), b.begin(), b.end());
    r.insert(r.end(), c.begin(), c.end());
    return r;
}

double squared_distance(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw ShapeError("squared_distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace nr4der::tensorkit
