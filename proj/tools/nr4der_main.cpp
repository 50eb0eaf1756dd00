#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "nr4der/pipeline.hpp"

namespace {

using nr4der::config::RunConfig;

// exit codes: 0 ok, 2 input/config, 3 missing artifact, 4 inconsistency,
// 5 numeric failure
constexpr int kExitInput = 2;
constexpr int kExitMissing = 3;
constexpr int kExitInconsistency = 4;
constexpr int kExitNumeric = 5;

std::string default_out_root() {
    const char* env = std::getenv("NR4DER_OUT");
    return env ? std::string(env) : std::string("out");
}

struct GlobalArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
};

RunConfig resolve_config(const GlobalArgs& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg = nr4der::config::load_config(g.config_path);
    if (g.seed_set) cfg.seed = g.seed;
    cfg.finalize();
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nr4der: two-stage exercise recommendation (difficulty filter + neural "
                 "re-ranking)"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    GlobalArgs g;
    app.add_option("--config", g.config_path, "key=value configuration file");
    auto* seed_opt = app.add_option("--seed", g.seed, "random seed override");
    app.add_option("--out", g.out_dir, "output directory (default: $NR4DER_OUT or ./out)");

    std::string log_path, concepts_path, data_dir, models_dir, recs_path;
    bool no_enhancer = false, no_rerank = false;
    std::string mode_flag;
    int k_flag = 0;

    auto* ingest = app.add_subcommand("ingest", "validate a raw interaction log and "
                                                "write the canonical dataset");
    ingest->add_option("--log", log_path, "interaction log CSV")->required();
    ingest->add_option("--concepts", concepts_path, "exercise-to-concept map CSV")->required();

    auto* synth = app.add_subcommand("synth", "generate the seeded synthetic long-tailed "
                                              "dataset with its latent-mastery sidecar");

    auto* train = app.add_subcommand("train", "train the mastery predictor (with enhancer) "
                                              "and the neural re-ranker");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_flag("--no-enhancer", no_enhancer,
                    "ablation: drop the student representation enhancer");
    train->add_flag("--no-rerank", no_rerank, "ablation: skip re-ranker training");

    auto* recommend = app.add_subcommand("recommend", "produce candidate sets and top-k "
                                                      "recommendation lists");
    recommend->add_option("--data", data_dir, "dataset directory")->required();
    recommend->add_option("--models", models_dir, "directory with checkpoints")->required();
    recommend->add_option("--mode", mode_flag, "scoring head: det or prob");
    recommend->add_option("--k", k_flag, "list length");

    auto* evaluate = app.add_subcommand("evaluate", "score recommendations against the "
                                                    "held-out split with baselines");
    evaluate->add_option("--data", data_dir, "dataset directory")->required();
    evaluate->add_option("--models", models_dir, "directory with checkpoints")->required();
    evaluate->add_option("--recs", recs_path, "rerank.csv to cross-check");

    auto* pipeline_cmd = app.add_subcommand("pipeline", "synth + train + recommend + "
                                                        "evaluate in one reproducible run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitInput;
    }
    g.seed_set = seed_opt->count() > 0;

    try {
        RunConfig cfg = resolve_config(g);
        if (!mode_flag.empty()) cfg.mode = mode_flag;
        if (k_flag > 0) cfg.top_k = k_flag;
        cfg.validate();
        const std::string out = g.out_dir.empty() ? default_out_root() : g.out_dir;

        if (*ingest) {
            nr4der::pipeline::cmd_ingest(log_path, concepts_path, out);
        } else if (*synth) {
            nr4der::pipeline::cmd_synth(cfg, out);
        } else if (*train) {
            nr4der::pipeline::cmd_train(cfg, data_dir, out, no_enhancer, no_rerank);
        } else if (*recommend) {
            nr4der::pipeline::cmd_recommend(cfg, data_dir, models_dir, out);
        } else if (*evaluate) {
            nr4der::pipeline::cmd_evaluate(cfg, data_dir, models_dir, recs_path, out);
        } else if (*pipeline_cmd) {
            nr4der::pipeline::cmd_pipeline(cfg, out);
        }
        return 0;
    } catch (const nr4der::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const nr4der::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInput;
    } catch (const nr4der::MissingArtifactError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitMissing;
    } catch (const nr4der::InconsistencyError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitInconsistency;
    } catch (const nr4der::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const nr4der::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    }
}
