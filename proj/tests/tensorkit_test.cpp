#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "nr4der/attention.hpp"
#include "nr4der/gradcheck.hpp"
#include "nr4der/layers.hpp"
#include "nr4der/lstm.hpp"
#include "nr4der/mlstm.hpp"

using namespace nr4der;
using namespace nr4der::tensorkit;

namespace {

Vector random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    Vector v(n);
    for (double& x : v) x = uniform(rng, lo, hi);
    return v;
}

void randomize(Matrix& m, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    for (double& x : m.raw()) x = uniform(rng, lo, hi);
}

bool bit_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

bool bit_equal(const Vector& a, const Vector& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("tensorkit") {

TEST_CASE("mlstm_step identity branch keeps cell and normalizer bit-identical") {
    std::mt19937_64 rng = make_rng(7, "mlstm-id");
    const std::size_t d = 4;
    MlstmState state = mlstm_zero_state(d);
    randomize(state.C, rng);
    state.n = random_vector(rng, d);

    auto step = mlstm_step(state, random_vector(rng, d), random_vector(rng, d),
                           random_vector(rng, d), 1.0, 0.0, Vector(d, 0.5));
    CHECK(bit_equal(step.state.C, state.C));
    CHECK(bit_equal(step.state.n, state.n));
}

TEST_CASE("mlstm_step from zero state stores a single outer product") {
    std::mt19937_64 rng = make_rng(8, "mlstm-outer");
    const std::size_t d = 4;
    MlstmState zero = mlstm_zero_state(d);
    Vector k = random_vector(rng, d), v = random_vector(rng, d);
    auto step = mlstm_step(zero, k, v, random_vector(rng, d), 0.37, 1.0, Vector(d, 1.0));

    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            CHECK(step.state.C(i, j) == doctest::Approx(v[i] * k[j]).epsilon(1e-15));
    // rank <= 1: every 2x2 minor vanishes
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t p = i + 1; p < d; ++p)
            for (std::size_t j = 0; j < d; ++j)
                for (std::size_t q = j + 1; q < d; ++q) {
                    const double minor = step.state.C(i, j) * step.state.C(p, q) -
                                         step.state.C(i, q) * step.state.C(p, j);
                    CHECK(std::fabs(minor) < 1e-14);
                }
}

TEST_CASE("mlstm_step dimension and gate validation") {
    MlstmState state = mlstm_zero_state(3);
    CHECK_THROWS_AS(mlstm_step(state, Vector(2, 0.0), Vector(3, 0.0), Vector(3, 0.0), 1.0, 1.0,
                               Vector(3, 1.0)),
                    ShapeError);
    CHECK_THROWS_AS(mlstm_step(state, Vector(3, 0.0), Vector(3, 0.0), Vector(3, 0.0),
                               std::nan(""), 1.0, Vector(3, 1.0)),
                    NumericError);
}

TEST_CASE("mlstm_step gradients match central differences over chained steps") {
    const std::size_t d = 4;
    for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u}) {
        std::mt19937_64 rng = make_rng(seed, "mlstm-grad");
        ParameterSet ps;
        for (const char* name : {"k1", "v1", "q1", "o1", "k2", "v2", "q2", "o2"}) {
            Matrix& m = ps.create(name, d, 1);
            randomize(m, rng);
        }
        Matrix& gates = ps.create("gates", 4, 1);  // f1, i1, f2, i2
        for (std::size_t i = 0; i < 4; ++i) gates(i, 0) = uniform(rng, 0.3, 0.9);
        const Vector c1 = random_vector(rng, d), c2 = random_vector(rng, d);

        auto col = [&](const char* n) { return ps.value(n).raw(); };
        auto run = [&](MlstmStepCache* s1out, MlstmStepCache* s2out) {
            MlstmState z = mlstm_zero_state(d);
            auto s1 = mlstm_step(z, col("k1"), col("v1"), col("q1"), ps.value("gates")(0, 0),
                                 ps.value("gates")(1, 0), col("o1"));
            auto s2 = mlstm_step(s1.state, col("k2"), col("v2"), col("q2"),
                                 ps.value("gates")(2, 0), ps.value("gates")(3, 0), col("o2"));
            if (s1out) *s1out = s1;
            if (s2out) *s2out = s2;
            return dot(c1, s1.out) + dot(c2, s2.out);
        };
        auto loss = [&]() { return run(nullptr, nullptr); };
        auto compute = [&]() {
            ps.zero_grads();
            MlstmStepCache s1, s2;
            run(&s1, &s2);
            Matrix zeroC(d, d);
            Vector zeroN(d, 0.0);
            auto g2 = mlstm_step_backward(s2, c2, zeroC, zeroN);
            auto g1 = mlstm_step_backward(s1, c1, g2.dC_prev, g2.dn_prev);
            ps.grad("k1").raw() = g1.d_key;
            ps.grad("v1").raw() = g1.d_value;
            ps.grad("q1").raw() = g1.d_query;
            ps.grad("o1").raw() = g1.d_o_gate;
            ps.grad("k2").raw() = g2.d_key;
            ps.grad("v2").raw() = g2.d_value;
            ps.grad("q2").raw() = g2.d_query;
            ps.grad("o2").raw() = g2.d_o_gate;
            ps.grad("gates")(0, 0) = g1.d_f;
            ps.grad("gates")(1, 0) = g1.d_i;
            ps.grad("gates")(2, 0) = g2.d_f;
            ps.grad("gates")(3, 0) = g2.d_i;
        };
        CHECK(grad_check_error(ps, loss, compute, 1e-6) <= 1e-4);
    }
}

TEST_CASE("lstm_forward basics") {
    std::mt19937_64 rng = make_rng(21, "lstm-basics");
    Lstm lstm("lstm", 3, 4);
    ParameterSet ps;
    lstm.init(ps, rng);

    SUBCASE("length-1 sequence yields exactly one state") {
        auto cache = lstm.forward(ps, {random_vector(rng, 3)});
        CHECK(cache.steps == 1);
        CHECK(lstm.states(cache).size() == 1);
    }
    SUBCASE("empty sequence is rejected") {
        CHECK_THROWS_AS(lstm.forward(ps, {}), ShapeError);
    }
    SUBCASE("zero parameters and zero inputs give zero hidden states") {
        ParameterSet zps;
        Lstm z("z", 3, 4);
        std::mt19937_64 r2 = make_rng(0, "unused");
        z.init(zps, r2);
        for (auto& [name, slot] : zps.slots()) slot.value.fill(0.0);
        auto cache = z.forward(zps, {Vector(3, 0.0), Vector(3, 0.0), Vector(3, 0.0)});
        for (const auto& h : cache.h)
            for (double x : h) CHECK(x == 0.0);
    }
    SUBCASE("hidden states are tanh-bounded") {
        auto cache = lstm.forward(ps, {random_vector(rng, 3, -5, 5), random_vector(rng, 3, -5, 5)});
        for (const auto& h : cache.h)
            for (double x : h) CHECK(std::fabs(x) <= 1.0);
    }
}

TEST_CASE("lstm gradients match central differences") {
    const std::size_t in = 2, hid = 3, T = 5;
    for (std::uint64_t seed : {31u, 32u, 33u}) {
        std::mt19937_64 rng = make_rng(seed, "lstm-grad");
        ParameterSet ps;
        Lstm lstm("lstm", in, hid);
        lstm.init(ps, rng);
        Matrix& X = ps.create("x", T, in);
        randomize(X, rng);
        std::vector<Vector> cs;
        for (std::size_t t = 0; t < T; ++t) cs.push_back(random_vector(rng, hid));

        auto seq = [&]() {
            std::vector<Vector> s;
            for (std::size_t t = 0; t < T; ++t) s.push_back(ps.value("x").row(t));
            return s;
        };
        auto loss = [&]() {
            auto cache = lstm.forward(ps, seq());
            double L = 0.0;
            for (std::size_t t = 0; t < T; ++t) L += dot(cs[t], cache.h[t]);
            return L;
        };
        auto compute = [&]() {
            ps.zero_grads();
            auto cache = lstm.forward(ps, seq());
            auto dx = lstm.backward(ps, cache, cs);
            for (std::size_t t = 0; t < T; ++t) ps.grad("x").set_row(t, dx[t]);
        };
        CHECK(grad_check_error(ps, loss, compute, 1e-6) <= 1e-4);
    }
}

TEST_CASE("bilstm output structure and reversal symmetry") {
    std::mt19937_64 rng = make_rng(41, "bilstm");
    const std::size_t in = 3, hid = 2;
    BiLstm bi("bi", in, hid);
    ParameterSet ps;
    bi.init(ps, rng);

    SUBCASE("length-1 output concatenates both directions over the same input") {
        Vector x = random_vector(rng, in);
        BiLstm::Cache cache;
        auto out = bi.forward(ps, {x}, cache);
        REQUIRE(out.size() == 1);
        REQUIRE(out[0].size() == 2 * hid);
        Lstm cell("bi.cell", in, hid);
        auto cf = cell.forward(ps, {x});
        for (std::size_t k = 0; k < hid; ++k) {
            CHECK(out[0][k] == cf.h[0][k]);
            CHECK(out[0][hid + k] == cf.h[0][k]);
        }
    }
    SUBCASE("reversing the input and swapping halves reverses the output exactly") {
        std::vector<Vector> seq;
        for (int t = 0; t < 4; ++t) seq.push_back(random_vector(rng, in));
        BiLstm::Cache c1, c2;
        auto out = bi.forward(ps, seq, c1);
        std::vector<Vector> rev(seq.rbegin(), seq.rend());
        auto out_rev = bi.forward(ps, rev, c2);
        for (std::size_t t = 0; t < seq.size(); ++t) {
            Vector swapped = concat(
                Vector(out_rev[t].begin() + hid, out_rev[t].end()),
                Vector(out_rev[t].begin(), out_rev[t].begin() + hid));
            CHECK(bit_equal(swapped, out[seq.size() - 1 - t]));
        }
    }
}

TEST_CASE("bilstm gradients match central differences") {
    const std::size_t in = 2, hid = 2, T = 4;
    std::mt19937_64 rng = make_rng(51, "bilstm-grad");
    ParameterSet ps;
    BiLstm bi("bi", in, hid);
    bi.init(ps, rng);
    Matrix& X = ps.create("x", T, in);
    randomize(X, rng);
    std::vector<Vector> cs;
    for (std::size_t t = 0; t < T; ++t) cs.push_back(random_vector(rng, 2 * hid));

    auto seq = [&]() {
        std::vector<Vector> s;
        for (std::size_t t = 0; t < T; ++t) s.push_back(ps.value("x").row(t));
        return s;
    };
    auto loss = [&]() {
        BiLstm::Cache cache;
        auto out = bi.forward(ps, seq(), cache);
        double L = 0.0;
        for (std::size_t t = 0; t < T; ++t) L += dot(cs[t], out[t]);
        return L;
    };
    auto compute = [&]() {
        ps.zero_grads();
        BiLstm::Cache cache;
        bi.forward(ps, seq(), cache);
        auto dx = bi.backward(ps, cache, cs);
        for (std::size_t t = 0; t < T; ++t) ps.grad("x").set_row(t, dx[t]);
    };
    CHECK(grad_check_error(ps, loss, compute, 1e-6) <= 1e-4);
}

TEST_CASE("self_attention structure") {
    std::mt19937_64 rng = make_rng(61, "attn");

    SUBCASE("single row gives attention weight [[1.0]]") {
        SelfAttention attn("a", 4, 2);
        ParameterSet ps;
        attn.init(ps, rng);
        Matrix W(1, 4);
        randomize(W, rng);
        SelfAttention::Cache cache;
        attn.forward(ps, W, cache);
        for (const Matrix& S : cache.weights) {
            REQUIRE(S.rows() == 1);
            CHECK(S(0, 0) == 1.0);
        }
    }
    SUBCASE("attention weight rows sum to one") {
        SelfAttention attn("a", 6, 3);
        ParameterSet ps;
        attn.init(ps, rng);
        Matrix W(5, 6);
        randomize(W, rng, -3, 3);
        SelfAttention::Cache cache;
        attn.forward(ps, W, cache);
        for (const Matrix& S : cache.weights)
            for (std::size_t i = 0; i < S.rows(); ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < S.cols(); ++j) sum += S(i, j);
                CHECK(std::fabs(sum - 1.0) <= 1e-12);
            }
    }
    SUBCASE("identical input rows produce identical output rows") {
        SelfAttention attn("a", 4, 1);
        ParameterSet ps;
        attn.init(ps, rng);
        Vector row = random_vector(rng, 4);
        Matrix W(3, 4);
        for (std::size_t i = 0; i < 3; ++i) W.set_row(i, row);
        Matrix out = attn.forward(ps, W);
        for (std::size_t i = 1; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                CHECK(out(i, j) == doctest::Approx(out(0, j)).epsilon(1e-12));
    }
    SUBCASE("empty input and bad head counts are rejected") {
        SelfAttention attn("a", 4, 2);
        ParameterSet ps;
        attn.init(ps, rng);
        CHECK_THROWS_AS(attn.forward(ps, Matrix(0, 4)), ShapeError);
        CHECK_THROWS_AS(SelfAttention("b", 5, 2), ConfigError);
    }
}

TEST_CASE("self_attention gradients match central differences") {
    for (std::size_t heads : {std::size_t(1), std::size_t(2)}) {
        std::mt19937_64 rng = make_rng(70 + heads, "attn-grad");
        SelfAttention attn("a", 4, heads);
        ParameterSet ps;
        attn.init(ps, rng);
        Matrix& X = ps.create("x", 3, 4);
        randomize(X, rng);
        Matrix C(3, 4);
        randomize(C, rng);

        auto loss = [&]() {
            Matrix out = attn.forward(ps, ps.value("x"));
            double L = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) L += C.raw()[i] * out.raw()[i];
            return L;
        };
        auto compute = [&]() {
            ps.zero_grads();
            SelfAttention::Cache cache;
            attn.forward(ps, ps.value("x"), cache);
            Matrix din = attn.backward(ps, cache, C);
            ps.grad("x") += din;
        };
        CHECK(grad_check_error(ps, loss, compute, 1e-6) <= 1e-4);
    }
}

TEST_CASE("mlp_forward behavior") {
    std::mt19937_64 rng = make_rng(81, "mlp");

    SUBCASE("zero weights with sigmoid output give 0.5 everywhere") {
        Mlp mlp("m", {3, 4, 2}, Activation::Sigmoid);
        ParameterSet ps;
        mlp.init(ps, rng);
        for (auto& [name, slot] : ps.slots()) slot.value.fill(0.0);
        Vector y = mlp.forward(ps, random_vector(rng, 3));
        for (double v : y) CHECK(v == 0.5);
    }
    SUBCASE("identity-configured single linear layer passes input through") {
        Mlp mlp("m", {3, 3}, Activation::Identity);
        ParameterSet ps;
        mlp.init(ps, rng);
        ps.value("m.l0.W").fill(0.0);
        for (std::size_t i = 0; i < 3; ++i) ps.value("m.l0.W")(i, i) = 1.0;
        ps.value("m.l0.b").fill(0.0);
        Vector x = random_vector(rng, 3);
        CHECK(bit_equal(mlp.forward(ps, x), x));
    }
    SUBCASE("dimension mismatch raises a shape error") {
        Mlp mlp("m", {3, 2}, Activation::Identity);
        ParameterSet ps;
        mlp.init(ps, rng);
        CHECK_THROWS_AS(mlp.forward(ps, Vector(4, 0.0)), ShapeError);
    }
    SUBCASE("softplus output is non-negative") {
        Mlp mlp("m", {3, 4, 1}, Activation::Softplus);
        ParameterSet ps;
        mlp.init(ps, rng);
        for (int i = 0; i < 10; ++i)
            CHECK(mlp.forward(ps, random_vector(rng, 3, -4, 4))[0] >= 0.0);
    }
}

TEST_CASE("mlp gradients match central differences for each output activation") {
    for (Activation act : {Activation::Identity, Activation::Sigmoid, Activation::Softplus}) {
        std::mt19937_64 rng = make_rng(90 + static_cast<int>(act), "mlp-grad");
        Mlp mlp("m", {3, 5, 2}, act);
        ParameterSet ps;
        mlp.init(ps, rng);
        Matrix& X = ps.create("x", 3, 1);
        randomize(X, rng);
        Vector c = random_vector(rng, 2);

        auto loss = [&]() { return dot(c, mlp.forward(ps, ps.value("x").raw())); };
        auto compute = [&]() {
            ps.zero_grads();
            Mlp::Cache cache;
            mlp.forward(ps, ps.value("x").raw(), cache);
            Vector dx = mlp.backward(ps, cache, c);
            ps.grad("x").raw() = dx;
        };
        CHECK(grad_check_error(ps, loss, compute, 1e-6) <= 1e-4);
    }
}

TEST_CASE("grad_check calibration") {
    std::mt19937_64 rng = make_rng(101, "gc");

    SUBCASE("exact gradient of a linear map scores below 1e-10") {
        ParameterSet ps;
        Matrix& x = ps.create("x", 4, 1);
        randomize(x, rng);
        Matrix A(4, 4);
        randomize(A, rng);
        Vector c = random_vector(rng, 4);
        auto loss = [&]() { return dot(c, matvec(A, ps.value("x").raw())); };
        auto compute = [&]() {
            ps.zero_grads();
            ps.grad("x").raw() = matvec_t(A, c);
        };
        CHECK(grad_check_error(ps, loss, compute, 1e-6) <= 1e-10);
    }
    SUBCASE("a corrupted gradient entry is detected") {
        ParameterSet ps;
        Matrix& x = ps.create("x", 4, 1);
        randomize(x, rng);
        Matrix A(4, 4);
        randomize(A, rng);
        Vector c = random_vector(rng, 4);
        auto loss = [&]() { return dot(c, matvec(A, ps.value("x").raw())); };
        auto compute = [&]() {
            ps.zero_grads();
            ps.grad("x").raw() = matvec_t(A, c);
            ps.grad("x")(2, 0) += 0.1;
        };
        CHECK(grad_check_error(ps, loss, compute, 1e-6) > 1e-2);
    }
    SUBCASE("non-finite forward values raise a numeric error") {
        ParameterSet ps;
        ps.create("x", 1, 1)(0, 0) = 1.0;
        auto loss = [&]() { return std::log(-1.0); };
        auto compute = [&]() { ps.zero_grads(); };
        CHECK_THROWS_AS(grad_check(ps, loss, compute, 1e-6), NumericError);
    }
}

TEST_CASE("forward passes stay finite on finite inputs") {
    std::mt19937_64 rng = make_rng(111, "finite");
    ParameterSet ps;
    Lstm lstm("l", 3, 4);
    lstm.init(ps, rng);
    MlstmLayer ml("m", 3, 4);
    ml.init(ps, rng);
    SelfAttention attn("a", 4, 2);
    attn.init(ps, rng);
    std::vector<Vector> seq;
    for (int t = 0; t < 6; ++t) seq.push_back(random_vector(rng, 3, -10, 10));

    auto lc = lstm.forward(ps, seq);
    for (const auto& h : lc.h) CHECK(all_finite(h));
    auto mc = ml.forward(ps, seq);
    for (const auto& h : mc.h) CHECK(all_finite(h));
    Matrix W(4, 4);
    randomize(W, rng, -10, 10);
    CHECK(all_finite(attn.forward(ps, W)));
}

TEST_CASE("mlstm layer gradients match central differences") {
    const std::size_t in = 3, d = 4, T = 4;
    for (std::uint64_t seed : {121u, 122u, 123u}) {
        std::mt19937_64 rng = make_rng(seed, "mlstm-layer-grad");
        ParameterSet ps;
        MlstmLayer layer("m", in, d);
        layer.init(ps, rng);
        Matrix& X = ps.create("x", T, in);
        randomize(X, rng);
        std::vector<Vector> cs;
        for (std::size_t t = 0; t < T; ++t) cs.push_back(random_vector(rng, d));

        auto seq = [&]() {
            std::vector<Vector> s;
            for (std::size_t t = 0; t < T; ++t) s.push_back(ps.value("x").row(t));
            return s;
        };
        auto loss = [&]() {
            auto cache = layer.forward(ps, seq());
            double L = 0.0;
            for (std::size_t t = 0; t < T; ++t) L += dot(cs[t], cache.h[t]);
            return L;
        };
        auto compute = [&]() {
            ps.zero_grads();
            auto cache = layer.forward(ps, seq());
            auto dx = layer.backward(ps, cache, cs);
            for (std::size_t t = 0; t < T; ++t) ps.grad("x").set_row(t, dx[t]);
        };
        CHECK(grad_check_error(ps, loss, compute, 1e-6) <= 1e-4);
    }
}

TEST_CASE("checkpoint save/load round-trips bit-exactly") {
    std::mt19937_64 rng = make_rng(131, "ckpt");
    ParameterSet ps;
    randomize(ps.create("enc.W", 5, 3), rng, -100, 100);
    randomize(ps.create("enc.b", 5, 1), rng, -1e-8, 1e-8);
    randomize(ps.create("head.W", 2, 5), rng);
    ps.value("head.W")(0, 0) = 0.1 + 0.2;  // not exactly representable
    ps.value("head.W")(0, 1) = 1e300;
    ps.value("head.W")(1, 0) = -4.9e-324;  // denormal

    const std::string path =
        (std::filesystem::temp_directory_path() / "nr4der_ckpt_test.txt").string();
    save_checkpoint(ps, path);
    ParameterSet loaded = load_checkpoint(path);
    REQUIRE(loaded.names() == ps.names());
    for (const auto& name : ps.names()) CHECK(bit_equal(loaded.value(name), ps.value(name)));
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/path/x.ckpt"), MissingArtifactError);
}

TEST_CASE("adam updates are deterministic and use zeroed gradients per step") {
    std::mt19937_64 rng = make_rng(141, "adam");
    auto run = [&](std::uint64_t seed) {
        std::mt19937_64 r = make_rng(seed, "adam-run");
        ParameterSet ps;
        randomize(ps.create("w", 3, 3), r);
        Adam opt(0.01);
        for (int it = 0; it < 400; ++it) {
            ps.zero_grads();
            // minimize 0.5*||w||^2
            for (std::size_t i = 0; i < 9; ++i) ps.grad("w").raw()[i] = ps.value("w").raw()[i];
            opt.step(ps);
        }
        return ps.value("w");
    };
    CHECK(bit_equal(run(5), run(5)));
    double norm = 0.0;
    Matrix w = run(5);
    for (double v : w.raw()) norm += v * v;
    CHECK(norm < 0.5);  // moved toward the minimum
}

}  // TEST_SUITE
