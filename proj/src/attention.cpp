#include "nr4der/attention.hpp"

#include <cmath>

namespace nr4der::tensorkit {

SelfAttention::SelfAttention(std::string prefix, std::size_t dim, std::size_t heads)
    : prefix_(std::move(prefix)), dim_(dim), heads_(heads) {
    if (heads_ == 0) throw ConfigError("SelfAttention " + prefix_ + ": heads must be >= 1");
    if (dim_ % heads_ != 0)
        throw ConfigError("SelfAttention " + prefix_ + ": dim " + std::to_string(dim_) +
                          " not divisible by head count " + std::to_string(heads_));
    head_dim_ = dim_ / heads_;
}

void SelfAttention::init(ParameterSet& ps, std::mt19937_64& rng) const {
    for (const char* p : {"Pq", "Pk", "Pv", "Po"})
        ps.create_uniform(prefix_ + "." + p, dim_, dim_, dim_, rng);
}

namespace {

// Rows [0, m) x columns [h*dh, (h+1)*dh) of a projection output.
Matrix head_slice(const Matrix& M, std::size_t h, std::size_t dh) {
    Matrix out(M.rows(), dh);
    for (std::size_t i = 0; i < M.rows(); ++i)
        for (std::size_t j = 0; j < dh; ++j) out(i, j) = M(i, h * dh + j);
    return out;
}

void head_unslice(Matrix& M, const Matrix& part, std::size_t h, std::size_t dh) {
    for (std::size_t i = 0; i < part.rows(); ++i)
        for (std::size_t j = 0; j < dh; ++j) M(i, h * dh + j) += part(i, j);
}

}  // namespace

Matrix SelfAttention::forward(const ParameterSet& ps, const Matrix& input) const {
    Cache cache;
    return forward(ps, input, cache);
}

Matrix SelfAttention::forward(const ParameterSet& ps, const Matrix& input, Cache& cache) const {
    if (input.rows() == 0) throw ShapeError("SelfAttention " + prefix_ + ": empty input");
    if (input.cols() != dim_) throw ShapeError("SelfAttention " + prefix_ + ": width mismatch");
    const std::size_t m = input.rows();
    cache.input = input;
    cache.Q = matmul(input, ps.value(prefix_ + ".Pq"));
    cache.K = matmul(input, ps.value(prefix_ + ".Pk"));
    cache.V = matmul(input, ps.value(prefix_ + ".Pv"));
    cache.weights.clear();
    cache.heads_out = Matrix(m, dim_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));

    for (std::size_t h = 0; h < heads_; ++h) {
        Matrix Qh = head_slice(cache.Q, h, head_dim_);
        Matrix Kh = head_slice(cache.K, h, head_dim_);
        Matrix Vh = head_slice(cache.V, h, head_dim_);
        Matrix S = matmul_bt(Qh, Kh);
        for (std::size_t i = 0; i < m; ++i) {
            double mx = -1e300;
            for (std::size_t j = 0; j < m; ++j) {
                S(i, j) *= scale;
                mx = std::max(mx, S(i, j));
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                S(i, j) = std::exp(S(i, j) - mx);
                sum += S(i, j);
            }
            for (std::size_t j = 0; j < m; ++j) S(i, j) /= sum;
        }
        Matrix Oh = matmul(S, Vh);
        head_unslice(cache.heads_out, Oh, h, head_dim_);
        cache.weights.push_back(std::move(S));
    }
    return matmul(cache.heads_out, ps.value(prefix_ + ".Po"));
}

Matrix SelfAttention::backward(ParameterSet& ps, const Cache& cache, const Matrix& dout) const {
    const std::size_t m = cache.input.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim_));

    ps.grad(prefix_ + ".Po") += matmul_at(cache.heads_out, dout);
    Matrix dheads = matmul_bt(dout, ps.value(prefix_ + ".Po"));

    Matrix dQ(m, dim_), dK(m, dim_), dV(m, dim_);
    for (std::size_t h = 0; h < heads_; ++h) {
        Matrix dOh = head_slice(dheads, h, head_dim_);
        Matrix Qh = head_slice(cache.Q, h, head_dim_);
        Matrix Kh = head_slice(cache.K, h, head_dim_);
        Matrix Vh = head_slice(cache.V, h, head_dim_);
        const Matrix& S = cache.weights[h];

        Matrix dS = matmul_bt(dOh, Vh);
        Matrix dVh = matmul_at(S, dOh);
        // softmax backward per row
        Matrix dZ(m, m);
        for (std::size_t i = 0; i < m; ++i) {
            double rowdot = 0.0;
            for (std::size_t j = 0; j < m; ++j) rowdot += dS(i, j) * S(i, j);
            for (std::size_t j = 0; j < m; ++j) dZ(i, j) = S(i, j) * (dS(i, j) - rowdot);
        }
        Matrix dQh = matmul(dZ, Kh);
        dQh *= scale;
        Matrix dKh = matmul_at(dZ, Qh);
        dKh *= scale;
        head_unslice(dQ, dQh, h, head_dim_);
        head_unslice(dK, dKh, h, head_dim_);
        head_unslice(dV, dVh, h, head_dim_);
    }
    ps.grad(prefix_ + ".Pq") += matmul_at(cache.input, dQ);
    ps.grad(prefix_ + ".Pk") += matmul_at(cache.input, dK);
    ps.grad(prefix_ + ".Pv") += matmul_at(cache.input, dV);

    Matrix din = matmul_bt(dQ, ps.value(prefix_ + ".Pq"));
    din += matmul_bt(dK, ps.value(prefix_ + ".Pk"));
    din += matmul_bt(dV, ps.value(prefix_ + ".Pv"));
    return din;
}

}  // namespace nr4der::tensorkit
