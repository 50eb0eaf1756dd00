#include "nr4der/layers.hpp"

namespace nr4der::tensorkit {

void DenseLayer::init(ParameterSet& ps, std::mt19937_64& rng) const {
    ps.create_uniform(prefix_ + ".W", out_, in_, in_, rng);
    ps.create_uniform(prefix_ + ".b", out_, 1, in_, rng);
}

Vector DenseLayer::forward(const ParameterSet& ps, const Vector& x) const {
    if (x.size() != in_) throw ShapeError("DenseLayer " + prefix_ + ": input dim mismatch");
    Vector y = matvec(ps.value(prefix_ + ".W"), x);
    const Matrix& b = ps.value(prefix_ + ".b");
    for (std::size_t i = 0; i < out_; ++i) y[i] += b(i, 0);
    return y;
}

Vector DenseLayer::backward(ParameterSet& ps, const Vector& x, const Vector& dy) const {
    if (dy.size() != out_) throw ShapeError("DenseLayer " + prefix_ + ": grad dim mismatch");
    add_outer(ps.grad(prefix_ + ".W"), dy, x);
    Matrix& db = ps.grad(prefix_ + ".b");
    for (std::size_t i = 0; i < out_; ++i) db(i, 0) += dy[i];
    return matvec_t(ps.value(prefix_ + ".W"), dy);
}

Mlp::Mlp(std::string prefix, std::vector<std::size_t> dims, Activation out_act)
    : prefix_(std::move(prefix)), dims_(std::move(dims)), out_act_(out_act) {
    if (dims_.size() < 2) throw ConfigError("Mlp " + prefix_ + ": needs at least in/out dims");
}

std::string Mlp::layer_name(std::size_t l) const {
    return prefix_ + ".l" + std::to_string(l);
}

void Mlp::init(ParameterSet& ps, std::mt19937_64& rng) const {
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
        DenseLayer(layer_name(l), dims_[l], dims_[l + 1]).init(ps, rng);
    }
}

Vector Mlp::forward(const ParameterSet& ps, const Vector& x) const {
    Cache cache;
    return forward(ps, x, cache);
}

Vector Mlp::forward(const ParameterSet& ps, const Vector& x, Cache& cache) const {
    cache.input = x;
    cache.pre.clear();
    cache.post.clear();
    Vector h = x;
    const std::size_t layers = dims_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        DenseLayer dense(layer_name(l), dims_[l], dims_[l + 1]);
        Vector z = dense.forward(ps, h);
        cache.pre.push_back(z);
        if (l + 1 < layers) {
            for (double& v : z) v = v > 0.0 ? v : 0.0;  // ReLU
        } else {
            switch (out_act_) {
                case Activation::Identity: break;
                case Activation::Sigmoid:
                    for (double& v : z) v = sigmoid(v);
                    break;
                case Activation::Softplus:
                    for (double& v : z) v = softplus(v);
                    break;
            }
        }
        cache.post.push_back(z);
        h = std::move(z);
    }
    return h;
}

Vector Mlp::backward(ParameterSet& ps, const Cache& cache, const Vector& dy) const {
    const std::size_t layers = dims_.size() - 1;
    Vector d = dy;
    for (std::size_t l = layers; l-- > 0;) {
        const Vector& pre = cache.pre[l];
        if (l + 1 == layers) {
            switch (out_act_) {
                case Activation::Identity: break;
                case Activation::Sigmoid:
                    for (std::size_t i = 0; i < d.size(); ++i) {
                        const double s = sigmoid(pre[i]);
                        d[i] *= s * (1.0 - s);
                    }
                    break;
                case Activation::Softplus:
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= sigmoid(pre[i]);
                    break;
            }
        } else {
            for (std::size_t i = 0; i < d.size(); ++i)
                if (pre[i] <= 0.0) d[i] = 0.0;
        }
        const Vector& x = (l == 0) ? cache.input : cache.post[l - 1];
        DenseLayer dense(layer_name(l), dims_[l], dims_[l + 1]);
        d = dense.backward(ps, x, d);
    }
    return d;
}

}  // namespace nr4der::tensorkit
