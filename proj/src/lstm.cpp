#include "nr4der/lstm.hpp"

#include <algorithm>

namespace nr4der::tensorkit {

std::string Lstm::pname(const char* gate, const char* kind) const {
    return prefix_ + "." + kind + gate;
}

void Lstm::init(ParameterSet& ps, std::mt19937_64& rng) const {
    for (const char* gate : {"i", "f", "o", "g"}) {
        ps.create_uniform(pname(gate, "W"), hidden_, input_, input_, rng);
        ps.create_uniform(pname(gate, "U"), hidden_, hidden_, hidden_, rng);
        Matrix& b = ps.create_uniform(pname(gate, "b"), hidden_, 1, hidden_, rng);
        // unit forget bias: start remembering, learn to forget
        if (gate[0] == 'f')
            for (double& v : b.raw()) v += 1.0;
    }
}

Lstm::Cache Lstm::forward(const ParameterSet& ps, const std::vector<Vector>& seq) const {
    if (seq.empty()) throw ShapeError("Lstm " + prefix_ + ": empty input sequence");
    Cache cache;
    cache.steps = seq.size();
    Vector h(hidden_, 0.0), c(hidden_, 0.0);
    const Matrix& Wi = ps.value(pname("i", "W"));
    const Matrix& Wf = ps.value(pname("f", "W"));
    const Matrix& Wo = ps.value(pname("o", "W"));
    const Matrix& Wg = ps.value(pname("g", "W"));
    const Matrix& Ui = ps.value(pname("i", "U"));
    const Matrix& Uf = ps.value(pname("f", "U"));
    const Matrix& Uo = ps.value(pname("o", "U"));
    const Matrix& Ug = ps.value(pname("g", "U"));
    const Matrix& bi = ps.value(pname("i", "b"));
    const Matrix& bf = ps.value(pname("f", "b"));
    const Matrix& bo = ps.value(pname("o", "b"));
    const Matrix& bg = ps.value(pname("g", "b"));

    for (const Vector& x : seq) {
        if (x.size() != input_) throw ShapeError("Lstm " + prefix_ + ": input dim mismatch");
        Vector zi = matvec(Wi, x), zf = matvec(Wf, x), zo = matvec(Wo, x), zg = matvec(Wg, x);
        axpy(zi, 1.0, matvec(Ui, h));
        axpy(zf, 1.0, matvec(Uf, h));
        axpy(zo, 1.0, matvec(Uo, h));
        axpy(zg, 1.0, matvec(Ug, h));
        Vector gi(hidden_), gf(hidden_), go(hidden_), gg(hidden_);
        for (std::size_t k = 0; k < hidden_; ++k) {
            gi[k] = sigmoid(zi[k] + bi(k, 0));
            gf[k] = sigmoid(zf[k] + bf(k, 0));
            go[k] = sigmoid(zo[k] + bo(k, 0));
            gg[k] = std::tanh(zg[k] + bg(k, 0));
        }
        Vector cn(hidden_), tc(hidden_), hn(hidden_);
        for (std::size_t k = 0; k < hidden_; ++k) {
            cn[k] = gf[k] * c[k] + gi[k] * gg[k];
            tc[k] = std::tanh(cn[k]);
            hn[k] = go[k] * tc[k];
        }
        cache.x.push_back(x);
        cache.i.push_back(std::move(gi));
        cache.f.push_back(std::move(gf));
        cache.o.push_back(std::move(go));
        cache.g.push_back(std::move(gg));
        cache.c.push_back(cn);
        cache.tanh_c.push_back(std::move(tc));
        cache.h.push_back(hn);
        h = std::move(hn);
        c = std::move(cn);
    }
    return cache;
}

std::vector<Vector> Lstm::backward(ParameterSet& ps, const Cache& cache,
                                   const std::vector<Vector>& dh_ext) const {
    const std::size_t T = cache.steps;
    if (dh_ext.size() != T) throw ShapeError("Lstm " + prefix_ + ": dh length mismatch");
    std::vector<Vector> dx(T, Vector(input_, 0.0));
    Vector dh(hidden_, 0.0), dc(hidden_, 0.0);

    Matrix& dWi = ps.grad(pname("i", "W"));
    Matrix& dWf = ps.grad(pname("f", "W"));
    Matrix& dWo = ps.grad(pname("o", "W"));
    Matrix& dWg = ps.grad(pname("g", "W"));
    Matrix& dUi = ps.grad(pname("i", "U"));
    Matrix& dUf = ps.grad(pname("f", "U"));
    Matrix& dUo = ps.grad(pname("o", "U"));
    Matrix& dUg = ps.grad(pname("g", "U"));
    Matrix& dbi = ps.grad(pname("i", "b"));
    Matrix& dbf = ps.grad(pname("f", "b"));
    Matrix& dbo = ps.grad(pname("o", "b"));
    Matrix& dbg = ps.grad(pname("g", "b"));
    const Matrix& Wi = ps.value(pname("i", "W"));
    const Matrix& Wf = ps.value(pname("f", "W"));
    const Matrix& Wo = ps.value(pname("o", "W"));
    const Matrix& Wg = ps.value(pname("g", "W"));
    const Matrix& Ui = ps.value(pname("i", "U"));
    const Matrix& Uf = ps.value(pname("f", "U"));
    const Matrix& Uo = ps.value(pname("o", "U"));
    const Matrix& Ug = ps.value(pname("g", "U"));

    for (std::size_t t = T; t-- > 0;) {
        for (std::size_t k = 0; k < hidden_; ++k) dh[k] += dh_ext[t][k];
        const Vector& gi = cache.i[t];
        const Vector& gf = cache.f[t];
        const Vector& go = cache.o[t];
        const Vector& gg = cache.g[t];
        const Vector& tc = cache.tanh_c[t];
        const Vector cprev = (t == 0) ? Vector(hidden_, 0.0) : cache.c[t - 1];
        const Vector hprev = (t == 0) ? Vector(hidden_, 0.0) : cache.h[t - 1];

        Vector zi(hidden_), zf(hidden_), zo(hidden_), zg(hidden_);
        for (std::size_t k = 0; k < hidden_; ++k) {
            const double d_o = dh[k] * tc[k];
            dc[k] += dh[k] * go[k] * (1.0 - tc[k] * tc[k]);
            const double d_i = dc[k] * gg[k];
            const double d_g = dc[k] * gi[k];
            const double d_f = dc[k] * cprev[k];
            zi[k] = d_i * gi[k] * (1.0 - gi[k]);
            zf[k] = d_f * gf[k] * (1.0 - gf[k]);
            zo[k] = d_o * go[k] * (1.0 - go[k]);
            zg[k] = d_g * (1.0 - gg[k] * gg[k]);
            dc[k] *= gf[k];  // carries to step t-1
        }
        add_outer(dWi, zi, cache.x[t]);
        add_outer(dWf, zf, cache.x[t]);
        add_outer(dWo, zo, cache.x[t]);
        add_outer(dWg, zg, cache.x[t]);
        add_outer(dUi, zi, hprev);
        add_outer(dUf, zf, hprev);
        add_outer(dUo, zo, hprev);
        add_outer(dUg, zg, hprev);
        for (std::size_t k = 0; k < hidden_; ++k) {
            dbi(k, 0) += zi[k];
            dbf(k, 0) += zf[k];
            dbo(k, 0) += zo[k];
            dbg(k, 0) += zg[k];
        }
        Vector d_in = matvec_t(Wi, zi);
        axpy(d_in, 1.0, matvec_t(Wf, zf));
        axpy(d_in, 1.0, matvec_t(Wo, zo));
        axpy(d_in, 1.0, matvec_t(Wg, zg));
        dx[t] = std::move(d_in);

        Vector dh_prev = matvec_t(Ui, zi);
        axpy(dh_prev, 1.0, matvec_t(Uf, zf));
        axpy(dh_prev, 1.0, matvec_t(Uo, zo));
        axpy(dh_prev, 1.0, matvec_t(Ug, zg));
        dh = std::move(dh_prev);
    }
    return dx;
}

std::vector<LstmState> Lstm::states(const Cache& cache) const {
    std::vector<LstmState> out(cache.steps);
    for (std::size_t t = 0; t < cache.steps; ++t) out[t] = {cache.h[t], cache.c[t]};
    return out;
}

void BiLstm::init(ParameterSet& ps, std::mt19937_64& rng) const {
    cell_.init(ps, rng);
}

std::vector<Vector> BiLstm::forward(const ParameterSet& ps, const std::vector<Vector>& seq,
                                    Cache& cache) const {
    std::vector<Vector> rev(seq.rbegin(), seq.rend());
    cache.fwd = cell_.forward(ps, seq);
    cache.bwd = cell_.forward(ps, rev);
    const std::size_t T = seq.size();
    std::vector<Vector> out(T);
    for (std::size_t t = 0; t < T; ++t)
        out[t] = concat(cache.fwd.h[t], cache.bwd.h[T - 1 - t]);
    return out;
}

std::vector<Vector> BiLstm::backward(ParameterSet& ps, const Cache& cache,
                                     const std::vector<Vector>& dout) const {
    const std::size_t T = cache.fwd.steps;
    if (dout.size() != T) throw ShapeError("BiLstm: dout length mismatch");
    const std::size_t q = hidden_dim();
    std::vector<Vector> dh_f(T, Vector(q, 0.0)), dh_b(T, Vector(q, 0.0));
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < q; ++k) {
            dh_f[t][k] = dout[t][k];
            dh_b[T - 1 - t][k] = dout[t][q + k];
        }
    }
    std::vector<Vector> dx_f = cell_.backward(ps, cache.fwd, dh_f);
    std::vector<Vector> dx_b = cell_.backward(ps, cache.bwd, dh_b);
    // dx_b is in reverse order
    for (std::size_t t = 0; t < T; ++t) axpy(dx_f[t], 1.0, dx_b[T - 1 - t]);
    return dx_f;
}

}  // namespace nr4der::tensorkit
