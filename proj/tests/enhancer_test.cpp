#include <doctest.h>

#include "nr4der/enhancer.hpp"
#include "nr4der/gradcheck.hpp"

using namespace nr4der;
using namespace nr4der::enhancer;
using nr4der::datamodel::Interaction;
using nr4der::datamodel::InteractionSequence;

namespace {

InteractionSequence make_seq(std::initializer_list<std::pair<int, int>> items) {
    InteractionSequence seq;
    seq.student_id = "s";
    int pos = 0;
    for (auto [e, a] : items) seq.items.push_back(Interaction{e, a, pos++});
    return seq;
}

}  // namespace

TEST_SUITE("enhancer") {

TEST_CASE("encode_sequence is deterministic and matches a single LSTM step on length-1") {
    std::mt19937_64 rng = make_rng(3, "enc");
    SequenceEncoder enc("enc", 5, 4, 3);
    ParameterSet ps;
    enc.init(ps, rng);

    InteractionSequence seq = make_seq({{1, 1}, {3, 0}, {2, 1}});
    CHECK(enc.encode(ps, seq) == enc.encode(ps, seq));

    InteractionSequence one = make_seq({{2, 1}});
    Vector r = enc.encode(ps, one);
    // same computation by hand: embedding row + correctness flag through the LSTM
    tensorkit::Lstm lstm("enc.lstm", 5, 3);
    Vector x(5);
    for (int j = 0; j < 4; ++j) x[j] = ps.value("enc.emb")(2, j);
    x[4] = 1.0;
    auto cache = lstm.forward(ps, {x});
    CHECK(r == cache.h[0]);

    CHECK_THROWS_AS(enc.encode(ps, InteractionSequence{}), ShapeError);
}

TEST_CASE("reconstruction loss gradients reach the encoder parameters") {
    std::mt19937_64 rng = make_rng(5, "enc-grad");
    SequenceEncoder enc("enc", 4, 3, 3);
    Generator gen("gen", 3);
    ParameterSet ps;
    enc.init(ps, rng);
    gen.init(ps, rng);
    InteractionSequence seq = make_seq({{0, 1}, {3, 0}, {1, 1}, {2, 0}});
    const Vector target = {0.3, -0.2, 0.7};
    const double w = 0.8;

    auto loss = [&]() {
        tensorkit::Mlp::Cache gc;
        Vector g = gen.forward(ps, enc.encode(ps, seq), gc);
        return enhancer_loss(target, g, w);
    };
    auto compute = [&]() {
        ps.zero_grads();
        SequenceEncoder::Cache ec;
        Vector r = enc.encode(ps, seq, ec);
        tensorkit::Mlp::Cache gc;
        Vector g = gen.forward(ps, r, gc);
        Vector dg = enhancer_loss_grad(target, g, w);
        Vector dr = gen.backward(ps, gc, dg);
        enc.backward(ps, ec, dr);
    };
    CHECK(tensorkit::grad_check_error(ps, loss, compute, 1e-6) <= 1e-4);
}

TEST_CASE("curriculum_weight endpoints and clamping") {
    CHECK(curriculum_weight(0, 10, 5, 5, 50) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(curriculum_weight(0, 10, 50, 5, 50) == doctest::Approx(1.0).epsilon(1e-12));
    // raw sine argument reaches pi; tiny negative values are clamped to 0
    CHECK(curriculum_weight(10, 10, 50, 5, 50) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(curriculum_weight(10, 10, 50, 5, 50) >= 0.0);

    SUBCASE("monotone in length at epoch 0 and in epoch at minimal length") {
        double prev = -1.0;
        for (int len = 5; len <= 50; len += 5) {
            double w = curriculum_weight(0, 10, len, 5, 50);
            CHECK(w >= prev);
            prev = w;
        }
        prev = -1.0;
        for (int epo = 0; epo <= 10; ++epo) {
            double w = curriculum_weight(epo, 10, 5, 5, 50);
            CHECK(w >= prev);
            prev = w;
        }
    }
    SUBCASE("degenerate length range: equal lengths define the length term as 0") {
        CHECK(curriculum_weight(0, 10, 7, 7, 7) == doctest::Approx(0.0));
        CHECK(curriculum_weight(10, 10, 7, 7, 7) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK_THROWS_AS(curriculum_weight(0, 10, 8, 7, 7), ConfigError);
    }
    SUBCASE("domain checks") {
        CHECK_THROWS_AS(curriculum_weight(-1, 10, 5, 5, 50), ConfigError);
        CHECK_THROWS_AS(curriculum_weight(11, 10, 5, 5, 50), ConfigError);
        CHECK_THROWS_AS(curriculum_weight(0, 10, 4, 5, 50), ConfigError);
    }
}

TEST_CASE("enhancer_loss values") {
    const Vector h = {1.0, 0.0};
    CHECK(enhancer_loss(h, h, 0.9) == 0.0);
    CHECK(enhancer_loss(h, {5.0, -3.0}, 0.0) == 0.0);
    CHECK(enhancer_loss(h, {0.0, 0.0}, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(enhancer_loss(h, Vector{1.0}, 1.0), ShapeError);

    SUBCASE("non-negative on random inputs") {
        std::mt19937_64 rng = make_rng(9, "loss");
        for (int i = 0; i < 100; ++i) {
            Vector a(3), b(3);
            for (auto* v : {&a, &b})
                for (double& x : *v) x = uniform(rng, -2, 2);
            CHECK(enhancer_loss(a, b, uniform(rng, 0, 2)) >= 0.0);
        }
    }
}

TEST_CASE("enhance_representation branches") {
    const Vector h = {1.0, 0.0};
    const Vector g = {0.2, 0.4};

    SUBCASE("active students pass through bit-identically") {
        Vector out = enhance_representation(h, g, /*active=*/true, 0.5);
        CHECK(out == h);
    }
    SUBCASE("beta 0 returns the generated vector alone") {
        CHECK(enhance_representation(h, g, false, 0.0) == g);
    }
    SUBCASE("inactive blend") {
        Vector out = enhance_representation(h, g, false, 0.5);
        CHECK(out[0] == doctest::Approx(0.7).epsilon(1e-12));
        CHECK(out[1] == doctest::Approx(0.4).epsilon(1e-12));
    }
}

}  // TEST_SUITE
