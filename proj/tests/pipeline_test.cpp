#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nr4der/pipeline.hpp"

using namespace nr4der;
using namespace nr4der::config;
using namespace nr4der::pipeline;

namespace {

RunConfig tiny_run_config() {
    RunConfig cfg;
    cfg.seed = 5;
    cfg.synth.students = 40;
    cfg.synth.concepts = 6;
    cfg.synth.exercises = 24;
    cfg.synth.max_length = 50;
    cfg.synth.min_length = 5;
    cfg.kcmp.dim = 8;
    cfg.kcmp.emb_dim = 8;
    cfg.kcmp.epochs = 3;
    cfg.rerank.q_s = 6;
    cfg.rerank.q_e = 6;
    cfg.rerank.q_h = 6;
    cfg.rerank.heads = 2;
    cfg.rerank.epochs = 2;
    cfg.candidates = 10;
    cfg.finalize();
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("run config round-trips through its file form") {
    RunConfig cfg = tiny_run_config();
    cfg.mode = "det";
    cfg.eval_ks = {1, 5};
    cfg.kcmp.lambda_s = 0.3;
    cfg.delta = 0.65;
    const std::string text = serialize_config(cfg);
    RunConfig back = parse_config_text(text);
    CHECK(serialize_config(back) == text);
    CHECK(back.seed == cfg.seed);
    CHECK(back.mode == "det");
    CHECK(back.eval_ks == cfg.eval_ks);
    CHECK(back.kcmp.lambda_s == cfg.kcmp.lambda_s);
    CHECK(back.delta == cfg.delta);
    CHECK(back.rerank.context_dim == cfg.kcmp.dim);
}

TEST_CASE("config parser rejects unknown keys and bad values") {
    CHECK_THROWS_AS(parse_config_text("nonsense.key=1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("kcmp.epochs=abc\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("kcmp.epochs\n"), ParseError);
    CHECK_THROWS_AS(parse_config_text("rerank.mode=banana\n"), ConfigError);
    // comments and blank lines are fine
    RunConfig cfg = parse_config_text("# comment\n\nseed=9\n");
    CHECK(cfg.seed == 9);
}

TEST_CASE("split bundle: long-tail partition is computed on the training split") {
    RunConfig cfg = tiny_run_config();
    auto synth = datamodel::generate_synthetic(cfg.synth);
    SplitBundle splits = prepare_splits(synth.dataset, cfg);
    CHECK(splits.tt.train.student_count() == synth.dataset.student_count());
    CHECK(static_cast<int>(splits.lt.active.size() + splits.lt.inactive.size()) ==
          splits.tt.train.student_count());
}

TEST_CASE("training instances respect the held-back tail") {
    RunConfig cfg = tiny_run_config();
    auto synth = datamodel::generate_synthetic(cfg.synth);
    SplitBundle splits = prepare_splits(synth.dataset, cfg);
    auto kt = kcmp::train_kcmp(splits.tt.train, splits.lt, cfg.kcmp);
    auto instances = build_training_instances(splits.tt.train, splits.lt, kt.model, cfg);
    REQUIRE(!instances.empty());
    for (const auto& inst : instances) {
        const auto& full = splits.tt.train.student(inst.student);
        CHECK(inst.history.size() < full.size());  // a tail was held back
        CHECK(inst.labels.size() == inst.candidates.size());
        for (int y : inst.labels) CHECK((y == 0 || y == 1));
        // history is a prefix of the training sequence
        for (std::size_t i = 0; i < inst.history.size(); ++i)
            CHECK(inst.history.items[i].position == full.items[i].position);
    }
}

TEST_CASE("end-to-end pipeline commands are deterministic and complete") {
    RunConfig cfg = tiny_run_config();
    const std::string dir_a = "/tmp/nr4der_pipe_test_a";
    const std::string dir_b = "/tmp/nr4der_pipe_test_b";
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
    auto outputs_a = cmd_pipeline(cfg, dir_a);
    auto outputs_b = cmd_pipeline(cfg, dir_b);
    CHECK(outputs_a.size() == outputs_b.size());

    for (const char* rel :
         {"dataset/interactions.csv", "dataset/concepts.csv", "dataset/latent_mastery.csv",
          "models/kcmp.ckpt", "models/reranker.ckpt", "models/kcmp_train_log.csv",
          "recs/candidates.csv", "recs/rerank.csv", "eval/metrics.csv", "eval/divcurve.csv"}) {
        INFO(rel);
        CHECK(slurp(dir_a + "/" + rel) == slurp(dir_b + "/" + rel));
    }
    // sidecar has one row per student-concept pair plus a header
    const std::string sidecar = slurp(dir_a + "/dataset/latent_mastery.csv");
    const long rows = std::count(sidecar.begin(), sidecar.end(), '\n');
    CHECK(rows == 1 + cfg.synth.students * cfg.synth.concepts);

    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("no-enhancer training drops the generator and pins lambda to zero") {
    RunConfig cfg = tiny_run_config();
    const std::string data_dir = "/tmp/nr4der_pipe_noenh/data";
    const std::string models_dir = "/tmp/nr4der_pipe_noenh/models";
    std::filesystem::remove_all("/tmp/nr4der_pipe_noenh");
    cmd_synth(cfg, data_dir);
    cmd_train(cfg, data_dir, models_dir, /*no_enhancer=*/true, /*no_rerank=*/true);
    auto model = kcmp::KcmpModel::load(models_dir + "/kcmp.ckpt");
    CHECK(!model.config().enhancer_enabled);
    CHECK(model.config().lambda_s == 0.0);
    for (const auto& name : model.params().names()) CHECK(name.rfind("gen.", 0) != 0);
    // no reranker checkpoint was produced
    CHECK(!std::filesystem::exists(models_dir + "/reranker.ckpt"));
    std::filesystem::remove_all("/tmp/nr4der_pipe_noenh");
}

TEST_CASE("knowledge-tracing diagnostics are computable on a trained pipeline") {
    RunConfig cfg = tiny_run_config();
    cfg.kcmp.epochs = 5;
    auto synth = datamodel::generate_synthetic(cfg.synth);
    SplitBundle splits = prepare_splits(synth.dataset, cfg);
    auto kt = kcmp::train_kcmp(splits.tt.train, splits.lt, cfg.kcmp);
    const double auc = next_answer_auc(kt.model, splits.tt.train, splits.tt.test, splits.lt);
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);
    const double rho =
        mastery_spearman(kt.model, synth.dataset, splits.lt, synth.final_mastery);
    CHECK(rho >= -1.0);
    CHECK(rho <= 1.0);
}

}  // TEST_SUITE
