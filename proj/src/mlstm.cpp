#include "nr4der/mlstm.hpp"

#include <algorithm>
#include <cmath>

namespace nr4der::tensorkit {

MlstmState mlstm_zero_state(std::size_t dim) {
    MlstmState s;
    s.C = Matrix(dim, dim);
    s.n = Vector(dim, 0.0);
    s.m = 0.0;
    return s;
}

MlstmStepCache mlstm_step(const MlstmState& state, const Vector& key, const Vector& value,
                          const Vector& query, double f_gate, double i_gate,
                          const Vector& o_gate) {
    const std::size_t d = state.n.size();
    if (key.size() != d || value.size() != d || query.size() != d || o_gate.size() != d ||
        state.C.rows() != d || state.C.cols() != d)
        throw ShapeError("mlstm_step: dimension mismatch");
    if (!std::isfinite(f_gate) || !std::isfinite(i_gate))
        throw NumericError("mlstm_step: non-finite gate value");

    MlstmStepCache c;
    c.key = key;
    c.value = value;
    c.query = query;
    c.o_gate = o_gate;
    c.f_gate = f_gate;
    c.i_gate = i_gate;
    c.C_prev = state.C;
    c.n_prev = state.n;

    c.state.C = state.C;
    c.state.C *= f_gate;
    add_outer(c.state.C, value, key, i_gate);
    c.state.n = state.n;
    for (std::size_t j = 0; j < d; ++j) c.state.n[j] = f_gate * state.n[j] + i_gate * key[j];
    c.state.m = state.m;

    c.Cq = matvec(c.state.C, query);
    c.s = dot(c.state.n, query);
    c.denom = std::max(std::fabs(c.s), 1.0);
    c.out = Vector(d);
    for (std::size_t j = 0; j < d; ++j) c.out[j] = o_gate[j] * (c.Cq[j] / c.denom);
    return c;
}

MlstmStepGrads mlstm_step_backward(const MlstmStepCache& c, const Vector& d_out,
                                   const Matrix& dC_next, const Vector& dn_next) {
    const std::size_t d = c.key.size();
    MlstmStepGrads g;
    g.d_key = Vector(d, 0.0);
    g.d_value = Vector(d, 0.0);
    g.d_query = Vector(d, 0.0);
    g.d_o_gate = Vector(d, 0.0);
    g.dC_prev = Matrix(d, d);
    g.dn_prev = Vector(d, 0.0);

    // out = o ⊙ u, u = Cq / D
    Vector du(d);
    for (std::size_t j = 0; j < d; ++j) {
        g.d_o_gate[j] = d_out[j] * (c.Cq[j] / c.denom);
        du[j] = d_out[j] * c.o_gate[j];
    }
    Matrix dC = dC_next;  // gradient reaching C_t
    Vector dn = dn_next;
    add_outer(dC, du, c.query, 1.0 / c.denom);
    Vector dq = matvec_t(c.state.C, du);
    for (double& x : dq) x /= c.denom;

    if (std::fabs(c.s) > 1.0) {
        // D = |s|; dD = -(du . Cq) / D^2
        const double dD = -dot(du, c.Cq) / (c.denom * c.denom);
        const double ds = dD * (c.s > 0.0 ? 1.0 : -1.0);
        axpy(dn, ds, c.query);
        axpy(dq, ds, c.state.n);
    }
    g.d_query = std::move(dq);

    // C_t = f C_prev + i v k^T
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t col = 0; col < d; ++col) {
            const double dCe = dC(r, col);
            g.dC_prev(r, col) = c.f_gate * dCe;
            g.d_f += dCe * c.C_prev(r, col);
            g.d_i += dCe * c.value[r] * c.key[col];
            g.d_value[r] += dCe * c.i_gate * c.key[col];
            g.d_key[col] += dCe * c.i_gate * c.value[r];
        }
    // n_t = f n_prev + i k
    for (std::size_t j = 0; j < d; ++j) {
        g.dn_prev[j] = c.f_gate * dn[j];
        g.d_f += dn[j] * c.n_prev[j];
        g.d_i += dn[j] * c.key[j];
        g.d_key[j] += dn[j] * c.i_gate;
    }
    return g;
}

void MlstmLayer::init(ParameterSet& ps, std::mt19937_64& rng) const {
    ps.create_uniform(prefix_ + ".Wq", dim_, input_, input_, rng);
    ps.create_uniform(prefix_ + ".bq", dim_, 1, input_, rng);
    ps.create_uniform(prefix_ + ".Wk", dim_, input_, input_, rng);
    // constant-dominated keys with zero value bias: the memory starts as a
    // normalized bag of input embeddings, readable through any fixed query
    Matrix& bk = ps.create(prefix_ + ".bk", dim_, 1);
    bk.fill(1.0);
    ps.create_uniform(prefix_ + ".Wv", dim_, input_, input_, rng);
    ps.create(prefix_ + ".bv", dim_, 1);
    ps.create_uniform(prefix_ + ".Wo", dim_, input_, input_, rng);
    ps.create_uniform(prefix_ + ".bo", dim_, 1, input_, rng);
    ps.create_uniform(prefix_ + ".wi", 1, input_, input_, rng);
    ps.create_uniform(prefix_ + ".bi", 1, 1, input_, rng);
    ps.create_uniform(prefix_ + ".wf", 1, input_, input_, rng);
    // high initial forget gate keeps the matrix memory alive over long
    // histories; sigma(4) sets a decay horizon of roughly 50 steps, so the retrieved
    // frequencies reflect recent outcomes (current mastery) over lifetime counts
    Matrix& bf = ps.create_uniform(prefix_ + ".bf", 1, 1, input_, rng);
    bf(0, 0) += 4.0;
}

MlstmLayer::Cache MlstmLayer::forward(const ParameterSet& ps,
                                      const std::vector<Vector>& seq) const {
    if (seq.empty()) throw ShapeError("MlstmLayer " + prefix_ + ": empty input sequence");
    Cache cache;
    cache.steps = seq.size();
    const Matrix& Wq = ps.value(prefix_ + ".Wq");
    const Matrix& bq = ps.value(prefix_ + ".bq");
    const Matrix& Wk = ps.value(prefix_ + ".Wk");
    const Matrix& bk = ps.value(prefix_ + ".bk");
    const Matrix& Wv = ps.value(prefix_ + ".Wv");
    const Matrix& bv = ps.value(prefix_ + ".bv");
    const Matrix& Wo = ps.value(prefix_ + ".Wo");
    const Matrix& bo = ps.value(prefix_ + ".bo");
    const Matrix& wi = ps.value(prefix_ + ".wi");
    const Matrix& bi = ps.value(prefix_ + ".bi");
    const Matrix& wf = ps.value(prefix_ + ".wf");
    const Matrix& bf = ps.value(prefix_ + ".bf");
    const double kscale = 1.0 / std::sqrt(static_cast<double>(dim_));

    MlstmState state = mlstm_zero_state(dim_);
    for (const Vector& x : seq) {
        if (x.size() != input_) throw ShapeError("MlstmLayer " + prefix_ + ": input dim mismatch");
        Vector q = matvec(Wq, x);
        Vector k = matvec(Wk, x);
        Vector v = matvec(Wv, x);
        for (std::size_t j = 0; j < dim_; ++j) {
            q[j] += bq(j, 0);
            k[j] = (k[j] + bk(j, 0)) * kscale;
            v[j] += bv(j, 0);
        }
        Vector ot = matvec(Wo, x);
        for (std::size_t j = 0; j < dim_; ++j) ot[j] += bo(j, 0);
        double itil = dot(wi.row(0), x) + bi(0, 0);
        double ftil = dot(wf.row(0), x) + bf(0, 0);
        const double logf = log_sigmoid(ftil);

        // stabilized exponential gating: one of the effective gates is exp(0)=1
        const double a = logf + state.m;
        const double m_new = std::max(a, itil);
        const double fprime = std::exp(a - m_new);
        const double iprime = std::exp(itil - m_new);

        Vector sig_o(dim_);
        for (std::size_t j = 0; j < dim_; ++j) sig_o[j] = sigmoid(ot[j]);

        MlstmStepCache step = mlstm_step(state, k, v, q, fprime, iprime, sig_o);
        step.state.m = m_new;
        state = step.state;

        cache.x.push_back(x);
        cache.otilde.push_back(std::move(ot));
        cache.itilde.push_back(itil);
        cache.ftilde.push_back(ftil);
        cache.logf.push_back(logf);
        cache.m.push_back(m_new);
        cache.fprime.push_back(fprime);
        cache.iprime.push_back(iprime);
        cache.h.push_back(step.out);
        cache.step.push_back(std::move(step));
    }
    return cache;
}

std::vector<Vector> MlstmLayer::backward(ParameterSet& ps, const Cache& cache,
                                         const std::vector<Vector>& dh) const {
    const std::size_t T = cache.steps;
    if (dh.size() != T) throw ShapeError("MlstmLayer " + prefix_ + ": dh length mismatch");
    std::vector<Vector> dx(T, Vector(input_, 0.0));

    Matrix& dWq = ps.grad(prefix_ + ".Wq");
    Matrix& dbq = ps.grad(prefix_ + ".bq");
    Matrix& dWk = ps.grad(prefix_ + ".Wk");
    Matrix& dbk = ps.grad(prefix_ + ".bk");
    Matrix& dWv = ps.grad(prefix_ + ".Wv");
    Matrix& dbv = ps.grad(prefix_ + ".bv");
    Matrix& dWo = ps.grad(prefix_ + ".Wo");
    Matrix& dbo = ps.grad(prefix_ + ".bo");
    Matrix& dwi = ps.grad(prefix_ + ".wi");
    Matrix& dbi = ps.grad(prefix_ + ".bi");
    Matrix& dwf = ps.grad(prefix_ + ".wf");
    Matrix& dbf = ps.grad(prefix_ + ".bf");
    const Matrix& Wq = ps.value(prefix_ + ".Wq");
    const Matrix& Wk = ps.value(prefix_ + ".Wk");
    const Matrix& Wv = ps.value(prefix_ + ".Wv");
    const Matrix& Wo = ps.value(prefix_ + ".Wo");
    const double kscale = 1.0 / std::sqrt(static_cast<double>(dim_));

    Matrix dC_next(dim_, dim_);
    Vector dn_next(dim_, 0.0);
    double dm_next = 0.0;

    for (std::size_t t = T; t-- > 0;) {
        const MlstmStepCache& step = cache.step[t];
        // output gate: h = sigmoid(otilde) ⊙ u
        Vector d_raw = dh[t];
        MlstmStepGrads g = mlstm_step_backward(step, d_raw, dC_next, dn_next);

        // g.d_o_gate is grad w.r.t. sigmoid(otilde)
        Vector d_ot(dim_);
        for (std::size_t j = 0; j < dim_; ++j) {
            const double s = step.o_gate[j];
            d_ot[j] = g.d_o_gate[j] * s * (1.0 - s);
        }

        // stabilized gates: fprime = exp(a - m), iprime = exp(itil - m),
        // a = logf + m_prev, m = max(a, itil)
        const double a = cache.logf[t] + (t == 0 ? 0.0 : cache.m[t - 1]);
        const bool a_branch = a >= cache.itilde[t];
        const double dm_total =
            -g.d_f * cache.fprime[t] - g.d_i * cache.iprime[t] + dm_next;
        double da = g.d_f * cache.fprime[t];
        double db = g.d_i * cache.iprime[t];
        if (a_branch)
            da += dm_total;
        else
            db += dm_total;
        // a = logsigmoid(ftil) + m_prev
        const double d_ftil = da * sigmoid(-cache.ftilde[t]);
        const double d_itil = db;
        dm_next = da;  // reaches m_{t-1}

        // projections
        const Vector& x = cache.x[t];
        Vector dk = g.d_key;
        for (double& e : dk) e *= kscale;
        add_outer(dWq, g.d_query, x);
        add_outer(dWk, dk, x);
        add_outer(dWv, g.d_value, x);
        add_outer(dWo, d_ot, x);
        for (std::size_t j = 0; j < dim_; ++j) {
            dbq(j, 0) += g.d_query[j];
            dbk(j, 0) += dk[j];
            dbv(j, 0) += g.d_value[j];
            dbo(j, 0) += d_ot[j];
        }
        for (std::size_t j = 0; j < input_; ++j) {
            dwi(0, j) += d_itil * x[j];
            dwf(0, j) += d_ftil * x[j];
        }
        dbi(0, 0) += d_itil;
        dbf(0, 0) += d_ftil;

        Vector dxt = matvec_t(Wq, g.d_query);
        axpy(dxt, 1.0, matvec_t(Wk, dk));
        axpy(dxt, 1.0, matvec_t(Wv, g.d_value));
        axpy(dxt, 1.0, matvec_t(Wo, d_ot));
        const Vector wi_row = ps.value(prefix_ + ".wi").row(0);
        const Vector wf_row = ps.value(prefix_ + ".wf").row(0);
        axpy(dxt, d_itil, wi_row);
        axpy(dxt, d_ftil, wf_row);
        dx[t] = std::move(dxt);

        dC_next = std::move(g.dC_prev);
        dn_next = std::move(g.dn_prev);
    }
    return dx;
}

}  // namespace nr4der::tensorkit
