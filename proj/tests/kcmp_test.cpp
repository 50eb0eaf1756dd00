#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "nr4der/gradcheck.hpp"
#include "nr4der/kcmp.hpp"
#include "nr4der/synthetic.hpp"

using namespace nr4der;
using namespace nr4der::kcmp;
using nr4der::datamodel::Dataset;
using nr4der::datamodel::Exercise;
using nr4der::datamodel::Interaction;
using nr4der::datamodel::InteractionSequence;
using nr4der::datamodel::LongTailSplit;
using nr4der::datamodel::partition_students;

namespace {

// Two-concept catalog: e0 covers concept 0, e1 covers concept 1, e2 covers both.
Dataset micro_kt_dataset(const std::vector<std::vector<std::pair<int, int>>>& sequences) {
    std::vector<Exercise> catalog;
    catalog.push_back({"e0", {1, 0}, {0}});
    catalog.push_back({"e1", {0, 1}, {1}});
    catalog.push_back({"e2", {1, 1}, {0, 1}});
    std::vector<InteractionSequence> students;
    int sid = 0;
    for (const auto& seq : sequences) {
        InteractionSequence s;
        s.student_id = "s" + std::to_string(100 + sid++);
        int pos = 0;
        for (auto [e, a] : seq) s.items.push_back(Interaction{e, a, pos++});
        students.push_back(std::move(s));
    }
    return Dataset(std::move(catalog), std::move(students), 2);
}

bool params_bit_equal(const tensorkit::ParameterSet& a, const tensorkit::ParameterSet& b) {
    if (a.names() != b.names()) return false;
    for (const auto& name : a.names()) {
        const auto& ma = a.value(name);
        const auto& mb = b.value(name);
        if (ma.rows() != mb.rows() || ma.cols() != mb.cols()) return false;
        if (std::memcmp(ma.data(), mb.data(), ma.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

KcmpConfig tiny_config() {
    KcmpConfig cfg;
    cfg.dim = 6;
    cfg.emb_dim = 4;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.truncation = 3;
    return cfg;
}

}  // namespace

TEST_SUITE("kcmp") {

TEST_CASE("kcmp_loss closed-form values") {
    SUBCASE("probability one-half costs ln 2 per step") {
        std::vector<std::vector<Vector>> y = {{{0.5, 0.9}}};
        std::vector<std::vector<StepTarget>> t = {{{{0}, 1}}};
        CHECK(kcmp_loss(y, t) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        t[0][0].correct = 0;
        CHECK(kcmp_loss(y, t) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("perfect prediction costs at most 1e-11 per step") {
        std::vector<std::vector<Vector>> y = {{{1.0, 0.5}}};
        std::vector<std::vector<StepTarget>> t = {{{{0}, 1}}};
        CHECK(kcmp_loss(y, t) <= 1e-11);  // clamped at 1 - 1e-12
    }
    SUBCASE("normalization sums step counts across students") {
        // students with 2 and 3 steps -> denominator 5
        std::vector<std::vector<Vector>> y = {{{0.5}, {0.5}}, {{0.5}, {0.5}, {0.5}}};
        std::vector<std::vector<StepTarget>> t = {{{{0}, 1}, {{0}, 0}},
                                                  {{{0}, 1}, {{0}, 1}, {{0}, 0}}};
        // every step costs ln 2, so the mean must be exactly ln 2 == (5 ln2)/5
        CHECK(kcmp_loss(y, t) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        // scale one prediction so the sum is distinguishable: loss = (4 ln2 + bce(0.9,1))/5
        y[1][2][0] = 0.9;
        t[1][2].correct = 1;
        const double expected = (4.0 * std::log(2.0) - std::log(0.9)) / 5.0;
        CHECK(kcmp_loss(y, t) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("permutation invariance over students") {
        std::vector<std::vector<Vector>> y = {{{0.3}}, {{0.8}, {0.6}}};
        std::vector<std::vector<StepTarget>> t = {{{{0}, 0}}, {{{0}, 1}, {{0}, 0}}};
        const double a = kcmp_loss(y, t);
        std::swap(y[0], y[1]);
        std::swap(t[0], t[1]);
        CHECK(kcmp_loss(y, t) == doctest::Approx(a).epsilon(1e-15));
    }
    SUBCASE("multi-concept targets average over covered concepts") {
        std::vector<std::vector<Vector>> y = {{{0.9, 0.5}}};
        std::vector<std::vector<StepTarget>> t = {{{{0, 1}, 1}}};
        const double expected = 0.5 * (-std::log(0.9) + std::log(2.0));
        CHECK(kcmp_loss(y, t) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("total_loss arithmetic") {
    CHECK(total_loss(123.0, 0.7, 0.0) == 0.7);
    CHECK(total_loss(0.5, 0.7, 1.0) == doctest::Approx(1.2).epsilon(1e-15));
    // doubling lambda doubles the enhancer contribution
    const double lk = 0.9, ls = 0.31, lam = 0.4;
    CHECK(total_loss(ls, lk, 2 * lam) - lk ==
          doctest::Approx(2.0 * (total_loss(ls, lk, lam) - lk)).epsilon(1e-12));
    CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.1), ConfigError);
}

TEST_CASE("interaction_token splits concept share by correctness") {
    Exercise e{"e", {1, 0, 1}, {0, 2}};
    Vector u1 = interaction_token(e, 1, 3);
    CHECK(u1 == Vector{0.5, 0.0, 0.5, 0.0, 0.0, 0.0});
    Vector u0 = interaction_token(e, 0, 3);
    CHECK(u0 == Vector{0.0, 0.0, 0.0, 0.5, 0.0, 0.5});
}

TEST_CASE("predict_mastery output contract") {
    Dataset ds = micro_kt_dataset({{{0, 1}, {1, 0}, {2, 1}}, {{1, 1}, {0, 0}}});
    LongTailSplit split = partition_students(ds, 0.5);
    KcmpModel model(tiny_config(), ds.exercise_count(), ds.concept_count());

    const auto& seq = ds.student(0);
    Vector hplus = model.enhanced_representation(seq, split.active_student(0));
    MasteryVector m1 = model.predict_mastery(hplus, seq, ds);
    MasteryVector m2 = model.predict_mastery(hplus, seq, ds);
    REQUIRE(m1.size() == 2);
    CHECK(m1 == m2);
    for (double p : m1) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
    auto steps = model.per_step_predictions(hplus, seq, ds);
    CHECK(steps.size() == seq.size());

    KcmpModel untrained;
    CHECK_THROWS_AS(untrained.predict_mastery(hplus, seq, ds), StateError);
}

TEST_CASE("joint objective gradients pass the finite-difference check") {
    Dataset ds = micro_kt_dataset({{{0, 1}, {1, 0}, {2, 1}}, {{1, 1}, {0, 0}}});
    LongTailSplit split = partition_students(ds, 0.5);
    KcmpConfig cfg = tiny_config();
    cfg.dim = 4;
    cfg.emb_dim = 3;
    cfg.truncation = 2;
    cfg.lambda_s = 0.7;
    KcmpModel model(cfg, ds.exercise_count(), ds.concept_count());
    const std::vector<int> all = {0, 1};

    // The reconstruction target is detached during training, so the check
    // pins it: the objective then is an ordinary function of the parameters.
    std::vector<Vector> targets;
    for (int s : all) targets.push_back(model.enhanced_representation(ds.student(s), true));

    auto loss = [&]() { return model.joint_pass(ds, split, all, 1, 2, 3, false, nullptr, &targets); };
    auto compute = [&]() {
        model.params().zero_grads();
        model.joint_pass(ds, split, all, 1, 2, 3, true, nullptr, &targets);
    };
    CHECK(tensorkit::grad_check_error(model.params(), loss, compute, 1e-6) <= 1e-4);
}

TEST_CASE("training is deterministic and its loss trends down") {
    datamodel::SyntheticConfig scfg;
    scfg.students = 40;
    scfg.concepts = 6;
    scfg.exercises = 24;
    scfg.max_length = 60;
    scfg.min_length = 4;
    Dataset ds = datamodel::generate_synthetic(scfg).dataset;
    LongTailSplit split = partition_students(ds, 0.05);
    KcmpConfig cfg = tiny_config();
    cfg.epochs = 6;

    TrainOutput a = train_kcmp(ds, split, cfg);
    TrainOutput b = train_kcmp(ds, split, cfg);
    CHECK(params_bit_equal(a.model.params(), b.model.params()));
    REQUIRE(a.log.size() == 6);
    // smoothed decrease: late epochs beat the first
    const double early = a.log[0].loss_total;
    const double late = 0.5 * (a.log[4].loss_total + a.log[5].loss_total);
    CHECK(late <= early);
}

TEST_CASE("lambda grid from the experiment protocol runs clean") {
    datamodel::SyntheticConfig scfg;
    scfg.students = 12;
    scfg.concepts = 4;
    scfg.exercises = 8;
    scfg.max_length = 20;
    scfg.min_length = 3;
    Dataset ds = datamodel::generate_synthetic(scfg).dataset;
    LongTailSplit split = partition_students(ds, 0.1);
    for (double lambda : {0.1, 0.3, 0.5, 0.7, 1.0}) {
        KcmpConfig cfg = tiny_config();
        cfg.epochs = 2;
        cfg.lambda_s = lambda;
        TrainOutput out = train_kcmp(ds, split, cfg);
        CHECK(out.log.size() == 2);
        for (const auto& e : out.log) CHECK(std::isfinite(e.loss_total));
    }
}

TEST_CASE("lambda_s = 0 short-circuits the enhancer loss entirely") {
    datamodel::SyntheticConfig scfg;
    scfg.students = 16;
    scfg.concepts = 4;
    scfg.exercises = 8;
    scfg.max_length = 24;
    scfg.min_length = 3;
    Dataset ds = datamodel::generate_synthetic(scfg).dataset;
    LongTailSplit split = partition_students(ds, 0.1);

    KcmpConfig a = tiny_config();
    a.lambda_s = 0.0;
    a.truncation = 3;
    KcmpConfig b = a;
    b.truncation = 9;  // only consumed by the enhancer loss branch
    TrainOutput ra = train_kcmp(ds, split, a);
    TrainOutput rb = train_kcmp(ds, split, b);
    CHECK(params_bit_equal(ra.model.params(), rb.model.params()));
    for (std::size_t i = 0; i < ra.log.size(); ++i) {
        CHECK(ra.log[i].loss_total == rb.log[i].loss_total);
        CHECK(ra.log[i].loss_s == 0.0);
    }
}

TEST_CASE("disabling the enhancer yields a plain knowledge-tracing run") {
    datamodel::SyntheticConfig scfg;
    scfg.students = 16;
    scfg.concepts = 4;
    scfg.exercises = 8;
    scfg.max_length = 24;
    scfg.min_length = 3;
    Dataset ds = datamodel::generate_synthetic(scfg).dataset;
    LongTailSplit split = partition_students(ds, 0.1);

    // every enhancer hyperparameter must be inert when the module is off
    KcmpConfig a = tiny_config();
    a.enhancer_enabled = false;
    a.beta = 0.4;
    a.lambda_s = 0.1;
    a.truncation = 3;
    KcmpConfig b = tiny_config();
    b.enhancer_enabled = false;
    b.beta = 1.0;
    b.lambda_s = 1.0;
    b.truncation = 12;
    TrainOutput ra = train_kcmp(ds, split, a);
    TrainOutput rb = train_kcmp(ds, split, b);
    CHECK(params_bit_equal(ra.model.params(), rb.model.params()));
    for (std::size_t i = 0; i < ra.log.size(); ++i)
        CHECK(ra.log[i].loss_total == rb.log[i].loss_total);
    // and no generator parameters exist at all
    for (const auto& name : ra.model.params().names())
        CHECK(name.rfind("gen.", 0) != 0);
}

TEST_CASE("a student drilled on one concept outranks one who always failed it") {
    // Population with mixed strengths, queried in random order so the
    // predictor's per-concept outputs are supervised from every state.
    std::mt19937_64 rng = make_rng(17, "kt-order");
    std::vector<std::vector<std::pair<int, int>>> seqs;
    for (int i = 0; i < 8; ++i) {
        const bool strong0 = (i % 2 == 0);
        std::vector<int> concepts;
        for (int t = 0; t < 20; ++t) {
            concepts.push_back(0);
            concepts.push_back(1);
        }
        std::shuffle(concepts.begin(), concepts.end(), rng);
        std::vector<std::pair<int, int>> seq;
        for (int e : concepts) seq.push_back({e, (e == 0) == strong0 ? 1 : 0});
        seqs.push_back(std::move(seq));
    }
    Dataset ds = micro_kt_dataset(seqs);
    LongTailSplit split = partition_students(ds, 0.5);
    KcmpConfig cfg = tiny_config();
    cfg.epochs = 120;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.01;
    cfg.lambda_s = 0.0;
    TrainOutput out = train_kcmp(ds, split, cfg);

    const auto& strong0 = ds.student(0);  // aced concept 0, failed concept 1
    Vector hplus = out.model.enhanced_representation(strong0, split.active_student(0));
    MasteryVector m = out.model.predict_mastery(hplus, strong0, ds);
    CHECK(m[0] > m[1]);
}

TEST_CASE("batch mastery prediction: OpenMP kernel matches the serial reference") {
    datamodel::SyntheticConfig scfg;
    scfg.students = 30;
    scfg.concepts = 5;
    scfg.exercises = 15;
    scfg.max_length = 30;
    scfg.min_length = 3;
    Dataset ds = datamodel::generate_synthetic(scfg).dataset;
    LongTailSplit split = partition_students(ds, 0.1);
    KcmpConfig cfg = tiny_config();
    cfg.epochs = 2;
    TrainOutput out = train_kcmp(ds, split, cfg);

    auto serial = out.model.predict_all_serial(ds, split);
    auto parallel = out.model.predict_all(ds, split);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) CHECK(serial[i] == parallel[i]);
}

TEST_CASE("checkpoint round-trip preserves predictions bit-exactly") {
    Dataset ds = micro_kt_dataset({{{0, 1}, {1, 0}, {2, 1}}, {{1, 1}, {0, 0}}});
    LongTailSplit split = partition_students(ds, 0.5);
    KcmpConfig cfg = tiny_config();
    cfg.epochs = 2;
    TrainOutput out = train_kcmp(ds, split, cfg);

    const std::string path =
        (std::filesystem::temp_directory_path() / "nr4der_kcmp_test.ckpt").string();
    out.model.save(path);
    KcmpModel loaded = KcmpModel::load(path);
    CHECK(params_bit_equal(loaded.params(), out.model.params()));
    CHECK(loaded.config().enhancer_enabled == cfg.enhancer_enabled);

    const auto& seq = ds.student(0);
    Vector h1 = out.model.enhanced_representation(seq, false);
    Vector h2 = loaded.enhanced_representation(seq, false);
    CHECK(h1 == h2);
    CHECK(out.model.predict_mastery(h1, seq, ds) == loaded.predict_mastery(h2, seq, ds));
    std::filesystem::remove(path);
}

}  // TEST_SUITE
