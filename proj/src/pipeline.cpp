#include "nr4der/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

namespace nr4der::pipeline {

namespace fs = std::filesystem;

SplitBundle prepare_splits(const Dataset& full, const RunConfig& cfg) {
    SplitBundle out;
    out.tt = datamodel::split_train_test(full, cfg.train_ratio);
    out.lt = datamodel::partition_students(out.tt.train, cfg.active_fraction);
    return out;
}

std::vector<reranker::ListInstance> build_training_instances(const Dataset& train,
                                                             const LongTailSplit& lt,
                                                             const kcmp::KcmpModel& model,
                                                             const RunConfig& cfg) {
    std::vector<reranker::ListInstance> out;
    for (int s = 0; s < train.student_count(); ++s) {
        const auto& seq = train.student(s);
        const std::size_t len = seq.size();
        std::size_t tail_len = 0;
        if (len >= 2) {
            tail_len = static_cast<std::size_t>(
                std::floor(static_cast<double>(len) * cfg.rerank.tail_fraction + 1e-9));
            if (tail_len == 0) tail_len = 1;
            if (tail_len >= len) tail_len = len - 1;
        }
        datamodel::InteractionSequence hist{
            seq.student_id, {seq.items.begin(), seq.items.end() - static_cast<long>(tail_len)}};
        if (hist.items.empty()) continue;

        const bool active = lt.active_student(s);
        tensorkit::Vector hplus = model.enhanced_representation(hist, active);
        kcmp::MasteryVector mastery = model.predict_mastery(hplus, hist, train);
        std::vector<std::uint8_t> mask;
        if (cfg.exclude_correct) mask = filter::solved_mask(hist, train.exercise_count());
        filter::CandidateSet cs =
            filter::build_candidate_set(s, mastery, train, cfg.delta, cfg.candidates,
                                        cfg.exclude_correct ? &mask : nullptr);
        if (cs.exercises.empty()) continue;

        // exercises the student went on to practice in the held-back tail
        std::set<int> tail_attempts;
        for (std::size_t t = len - tail_len; t < len; ++t)
            tail_attempts.insert(seq.items[t].exercise);

        reranker::ListInstance inst;
        inst.student = s;
        inst.hplus = std::move(hplus);
        inst.history = std::move(hist);
        for (const auto& we : cs.exercises) {
            inst.candidates.push_back(we.exercise);
            // Practicing an exercise in the held-back window is the evidence
            // of unmet need the re-ranker should surface; candidates the
            // student never touched stay negative.
            inst.labels.push_back(tail_attempts.count(we.exercise) ? 1 : 0);
        }
        out.push_back(std::move(inst));
    }
    return out;
}

std::vector<reranker::ListInstance> build_inference_instances(
    const Dataset& train, const LongTailSplit& lt, const kcmp::KcmpModel& model,
    const RunConfig& cfg, std::vector<filter::CandidateSet>* sets_out) {
    auto masteries = model.predict_all(train, lt);
    auto sets = filter::build_candidate_sets(train, masteries, cfg.delta, cfg.candidates,
                                             cfg.exclude_correct);
    std::vector<reranker::ListInstance> out(train.student_count());
    for (int s = 0; s < train.student_count(); ++s) {
        reranker::ListInstance& inst = out[s];
        inst.student = s;
        inst.history = train.student(s);
        inst.hplus = model.enhanced_representation(inst.history, lt.active_student(s));
        for (const auto& we : sets[s].exercises) inst.candidates.push_back(we.exercise);
    }
    if (sets_out) *sets_out = std::move(sets);
    return out;
}

TrainedPipeline train_pipeline(const Dataset& train, const LongTailSplit& lt,
                               const RunConfig& cfg, bool train_rerank) {
    TrainedPipeline out;
    kcmp::TrainOutput stage1 = kcmp::train_kcmp(train, lt, cfg.kcmp);
    out.mastery = std::move(stage1.model);
    out.mastery_log = std::move(stage1.log);
    if (train_rerank) {
        auto instances = build_training_instances(train, lt, out.mastery, cfg);
        if (instances.empty())
            throw ConfigError("train_pipeline: no usable re-ranker training instances");
        reranker::TrainOutput stage2 = reranker::train_reranker(instances, train, cfg.rerank);
        out.rerank = std::move(stage2.model);
        out.rerank_log = std::move(stage2.log);
        out.has_reranker = true;
    }
    return out;
}

std::map<std::string, std::vector<std::vector<int>>> build_rankings(
    const TrainedPipeline& models, const std::vector<reranker::ListInstance>& instances,
    const Dataset& train, const RunConfig& cfg) {
    const int n = train.student_count();
    const reranker::ScoreMode primary_mode = reranker::score_mode_from_string(cfg.mode);

    std::map<std::string, std::vector<std::vector<int>>> rankings;
    for (const char* name :
         {"rerank_det", "rerank_ucb", "rerank_nodiv", "filter_order", "greedy_coverage",
          "random"})
        rankings[name].assign(n, {});

    // candidate pools in filter order are implicit in the instances
    std::mt19937_64 random_rng = make_rng(cfg.seed, "eval.random");
    for (int s = 0; s < n; ++s) {
        const auto& inst = instances[s];
        if (inst.candidates.empty()) continue;
        rankings["filter_order"][s] = inst.candidates;
        filter::CandidateSet pseudo;
        pseudo.student = s;
        for (int e : inst.candidates) pseudo.exercises.push_back({e, 0.0, 0.0});
        rankings["greedy_coverage"][s] = evalkit::greedy_coverage_ranking(pseudo, train);
        rankings["random"][s] = evalkit::random_ranking(pseudo, random_rng);
    }
    if (models.has_reranker) {
        const int full = train.exercise_count();
        for (int s = 0; s < n; ++s) {
            const auto& inst = instances[s];
            if (inst.candidates.empty()) continue;
            auto det = models.rerank.rerank(inst, train, full, reranker::ScoreMode::Deterministic);
            auto ucb = models.rerank.rerank(inst, train, full, reranker::ScoreMode::Probabilistic);
            auto nodiv = models.rerank.rerank(inst, train, full, primary_mode, true);
            for (const auto& it : det.items) rankings["rerank_det"][s].push_back(it.exercise);
            for (const auto& it : ucb.items) rankings["rerank_ucb"][s].push_back(it.exercise);
            for (const auto& it : nodiv.items)
                rankings["rerank_nodiv"][s].push_back(it.exercise);
        }
    } else {
        rankings.erase("rerank_det");
        rankings.erase("rerank_ucb");
        rankings.erase("rerank_nodiv");
    }
    return rankings;
}

evalkit::MetricReport run_evaluation(const TrainedPipeline& models, const Dataset& train,
                                     const Dataset& test, const LongTailSplit& lt,
                                     const RunConfig& cfg) {
    auto instances = build_inference_instances(train, lt, models.mastery, cfg);
    auto rankings = build_rankings(models, instances, train, cfg);
    auto relevant = evalkit::relevance_from_test(train, test);
    return evalkit::evaluate(rankings, relevant, train, lt, cfg.eval_ks);
}

namespace {

// prediction for one interaction: mean predicted success over its concepts
double step_prediction(const tensorkit::Vector& y, const datamodel::Exercise& e) {
    double p = 0.0;
    for (int k : e.concepts) p += y[static_cast<std::size_t>(k)];
    return p / static_cast<double>(e.concepts.size());
}

}  // namespace

double next_answer_auc(const kcmp::KcmpModel& model, const Dataset& train, const Dataset& test,
                       const LongTailSplit& lt) {
    std::vector<std::pair<double, int>> scored;  // (prediction, label)
    for (int s = 0; s < train.student_count(); ++s) {
        const int t = test.student_index(train.student(s).student_id);
        if (t < 0) continue;
        datamodel::InteractionSequence full = train.student(s);
        const std::size_t train_len = full.items.size();
        for (const auto& it : test.student(t).items) full.items.push_back(it);
        tensorkit::Vector hplus =
            model.enhanced_representation(train.student(s), lt.active_student(s));
        auto preds = model.per_step_predictions(hplus, full, train);
        for (std::size_t i = train_len; i < full.items.size(); ++i)
            scored.push_back({step_prediction(preds[i], train.exercise(full.items[i].exercise)),
                              full.items[i].correct});
    }
    if (scored.empty()) throw ShapeError("next_answer_auc: no held-out interactions");
    // Mann-Whitney with average ranks for ties
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t pos = 0, neg = 0;
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t r = i; r < j; ++r) {
            if (scored[r].second) {
                ++pos;
                pos_rank_sum += avg_rank;
            } else {
                ++neg;
            }
        }
        i = j;
    }
    if (pos == 0 || neg == 0) throw NumericError("next_answer_auc: degenerate label set");
    const double u = pos_rank_sum - static_cast<double>(pos) * (pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t r = i; r < j; ++r) ranks[order[r]] = avg;
        i = j;
    }
    return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double num = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) throw NumericError("spearman: zero-variance input");
    return num / std::sqrt(va * vb);
}

}  // namespace

double mastery_spearman(const kcmp::KcmpModel& model, const Dataset& full,
                        const LongTailSplit& lt, const tensorkit::Matrix& latent) {
    if (latent.rows() != static_cast<std::size_t>(full.student_count()) ||
        latent.cols() != static_cast<std::size_t>(full.concept_count()))
        throw ShapeError("mastery_spearman: latent matrix shape mismatch");
    std::vector<double> predicted, truth;
    auto masteries = model.predict_all(full, lt);
    for (int s = 0; s < full.student_count(); ++s)
        for (int k = 0; k < full.concept_count(); ++k) {
            predicted.push_back(masteries[s][static_cast<std::size_t>(k)]);
            truth.push_back(latent(static_cast<std::size_t>(s), static_cast<std::size_t>(k)));
        }
    return pearson(average_ranks(predicted), average_ranks(truth));
}

// ---------------------------------------------------------------------------
// command bodies

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write " + path);
    out << text;
}

void write_kcmp_log(const std::vector<kcmp::EpochLog>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write " + path);
    out << "epoch,loss_total,loss_k,loss_s\n";
    char buf[128];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", e.epoch, e.loss_total, e.loss_k,
                      e.loss_s);
        out << buf;
    }
}

void write_rerank_log(const std::vector<reranker::EpochLog>& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write " + path);
    out << "epoch,loss_det,loss_prob\n";
    char buf[128];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", e.epoch, e.loss_det, e.loss_prob);
        out << buf;
    }
}

Dataset load_dataset_dir(const std::string& data_dir) {
    return datamodel::ingest_files(data_dir + "/interactions.csv", data_dir + "/concepts.csv");
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

void finish_manifest(const std::string& command, const RunConfig& cfg,
                     const std::vector<std::string>& outputs, const Timer& timer,
                     const std::string& out_dir) {
    config::Manifest m;
    m.command = command;
    m.config = cfg;
    m.outputs = outputs;
    m.wall_clock_seconds = timer.seconds();
    config::write_manifest(m, out_dir + "/manifest.json");
}

std::string table1_summary(const Dataset& ds) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-10s %8s %11s %14s\n%-10d %8d %11d %14zu\n", "Students",
                  "KCs", "Exercises", "Interactions", ds.student_count(), ds.concept_count(),
                  ds.exercise_count(), ds.interaction_count());
    return std::string(buf);
}

}  // namespace

std::vector<std::string> cmd_ingest(const std::string& log_path,
                                    const std::string& concepts_path,
                                    const std::string& out_dir) {
    Timer timer;
    Dataset ds = datamodel::ingest_files(log_path, concepts_path);
    fs::create_directories(out_dir);
    std::vector<std::string> outputs = {out_dir + "/interactions.csv",
                                        out_dir + "/concepts.csv"};
    datamodel::write_dataset(ds, outputs[0], outputs[1]);
    std::printf("%s", table1_summary(ds).c_str());
    RunConfig cfg;
    finish_manifest("ingest", cfg, outputs, timer, out_dir);
    return outputs;
}

std::vector<std::string> cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
    Timer timer;
    datamodel::SyntheticResult synth = datamodel::generate_synthetic(cfg.synth);
    fs::create_directories(out_dir);
    std::vector<std::string> outputs = {out_dir + "/interactions.csv",
                                        out_dir + "/concepts.csv",
                                        out_dir + "/latent_mastery.csv"};
    datamodel::write_dataset(synth.dataset, outputs[0], outputs[1]);
    {
        std::ofstream out(outputs[2]);
        if (!out) throw MissingArtifactError("cannot write " + outputs[2]);
        out << "student_id,concept,initial,final\n";
        char buf[128];
        for (int s = 0; s < synth.dataset.student_count(); ++s)
            for (int k = 0; k < synth.dataset.concept_count(); ++k) {
                std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,%.9g\n",
                              synth.dataset.student(s).student_id.c_str(), k,
                              synth.initial_mastery(s, k), synth.final_mastery(s, k));
                out << buf;
            }
    }
    std::printf("%s", table1_summary(synth.dataset).c_str());
    finish_manifest("synth", cfg, outputs, timer, out_dir);
    return outputs;
}

std::vector<std::string> cmd_train(const RunConfig& cfg, const std::string& data_dir,
                                   const std::string& out_dir, bool no_enhancer,
                                   bool no_rerank) {
    Timer timer;
    RunConfig run = cfg;
    if (no_enhancer) {
        run.kcmp.enhancer_enabled = false;
        run.kcmp.lambda_s = 0.0;
        run.kcmp.beta = 0.0;
    }
    Dataset full = load_dataset_dir(data_dir);
    SplitBundle splits = prepare_splits(full, run);
    TrainedPipeline models = train_pipeline(splits.tt.train, splits.lt, run, !no_rerank);

    fs::create_directories(out_dir);
    std::vector<std::string> outputs;
    outputs.push_back(out_dir + "/kcmp.ckpt");
    models.mastery.save(outputs.back());
    outputs.push_back(out_dir + "/kcmp_train_log.csv");
    write_kcmp_log(models.mastery_log, outputs.back());
    if (models.has_reranker) {
        outputs.push_back(out_dir + "/reranker.ckpt");
        models.rerank.save(outputs.back());
        outputs.push_back(out_dir + "/rerank_train_log.csv");
        write_rerank_log(models.rerank_log, outputs.back());
    }
    outputs.push_back(out_dir + "/config.txt");
    config::save_config(run, outputs.back());
    if (!splits.tt.skipped_students.empty()) {
        outputs.push_back(out_dir + "/split_skips.txt");
        std::string text;
        for (const auto& id : splits.tt.skipped_students) text += id + "\n";
        write_text(outputs.back(), text);
    }
    finish_manifest("train", run, outputs, timer, out_dir);
    return outputs;
}

std::vector<std::string> cmd_recommend(const RunConfig& cfg, const std::string& data_dir,
                                       const std::string& models_dir,
                                       const std::string& out_dir) {
    Timer timer;
    Dataset full = load_dataset_dir(data_dir);
    SplitBundle splits = prepare_splits(full, cfg);
    const std::string kcmp_path = models_dir + "/kcmp.ckpt";
    const std::string rr_path = models_dir + "/reranker.ckpt";
    if (!fs::exists(kcmp_path)) throw MissingArtifactError("checkpoint not found: " + kcmp_path);
    if (!fs::exists(rr_path)) throw MissingArtifactError("checkpoint not found: " + rr_path);
    TrainedPipeline models;
    models.mastery = kcmp::KcmpModel::load(kcmp_path);
    models.rerank = reranker::RerankModel::load(rr_path);
    models.has_reranker = true;

    std::vector<filter::CandidateSet> sets;
    auto instances =
        build_inference_instances(splits.tt.train, splits.lt, models.mastery, cfg, &sets);
    const reranker::ScoreMode mode = reranker::score_mode_from_string(cfg.mode);
    std::vector<reranker::RerankOutput> outputs_list;
    for (const auto& inst : instances) {
        if (inst.candidates.empty()) continue;
        outputs_list.push_back(models.rerank.rerank(inst, splits.tt.train, cfg.top_k, mode));
    }

    fs::create_directories(out_dir);
    std::vector<std::string> outputs = {out_dir + "/candidates.csv", out_dir + "/rerank.csv"};
    filter::write_candidates_csv(sets, splits.tt.train, outputs[0]);
    reranker::write_rerank_csv(outputs_list, splits.tt.train, outputs[1]);
    finish_manifest("recommend", cfg, outputs, timer, out_dir);
    return outputs;
}

std::vector<std::string> cmd_evaluate(const RunConfig& cfg, const std::string& data_dir,
                                      const std::string& models_dir,
                                      const std::string& recs_path,
                                      const std::string& out_dir) {
    Timer timer;
    Dataset full = load_dataset_dir(data_dir);
    SplitBundle splits = prepare_splits(full, cfg);
    const std::string kcmp_path = models_dir + "/kcmp.ckpt";
    const std::string rr_path = models_dir + "/reranker.ckpt";
    if (!fs::exists(kcmp_path)) throw MissingArtifactError("checkpoint not found: " + kcmp_path);
    TrainedPipeline models;
    models.mastery = kcmp::KcmpModel::load(kcmp_path);
    if (fs::exists(rr_path)) {
        models.rerank = reranker::RerankModel::load(rr_path);
        models.has_reranker = true;
    }

    // recommendation files must agree with this dataset
    if (!recs_path.empty()) {
        std::ifstream in(recs_path);
        if (!in) throw MissingArtifactError("recommendations not found: " + recs_path);
        std::string line;
        std::getline(in, line);
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto c1 = line.find(',');
            const auto c2 = line.find(',', c1 + 1);
            const auto c3 = line.find(',', c2 + 1);
            if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos)
                throw InconsistencyError(recs_path + " line " + std::to_string(line_no) +
                                         ": malformed recommendation row");
            const std::string sid = line.substr(0, c1);
            const std::string eid = line.substr(c2 + 1, c3 - c2 - 1);
            if (splits.tt.train.student_index(sid) < 0 ||
                splits.tt.train.exercise_index(eid) < 0)
                throw InconsistencyError(recs_path + " line " + std::to_string(line_no) +
                                         ": id '" + sid + "'/'" + eid +
                                         "' not in this dataset (version mismatch?)");
        }
    }

    evalkit::MetricReport report =
        run_evaluation(models, splits.tt.train, splits.tt.test, splits.lt, cfg);
    fs::create_directories(out_dir);
    std::vector<std::string> outputs = {out_dir + "/metrics.csv", out_dir + "/metrics.txt",
                                        out_dir + "/divcurve.csv"};
    report.write_csv(outputs[0]);
    write_text(outputs[1], report.to_text());
    report.write_div_curve_csv(outputs[2]);
    std::printf("%s", report.to_text().c_str());
    finish_manifest("evaluate", cfg, outputs, timer, out_dir);
    return outputs;
}

std::vector<std::string> cmd_pipeline(const RunConfig& cfg, const std::string& out_dir) {
    Timer timer;
    std::vector<std::string> outputs;
    const std::string data_dir = out_dir + "/dataset";
    const std::string models_dir = out_dir + "/models";
    const std::string recs_dir = out_dir + "/recs";
    const std::string eval_dir = out_dir + "/eval";
    auto o1 = cmd_synth(cfg, data_dir);
    auto o2 = cmd_train(cfg, data_dir, models_dir, false, false);
    auto o3 = cmd_recommend(cfg, data_dir, models_dir, recs_dir);
    auto o4 = cmd_evaluate(cfg, data_dir, models_dir, recs_dir + "/rerank.csv", eval_dir);
    for (auto* v : {&o1, &o2, &o3, &o4})
        outputs.insert(outputs.end(), v->begin(), v->end());
    finish_manifest("pipeline", cfg, outputs, timer, out_dir);
    return outputs;
}

}  // namespace nr4der::pipeline
