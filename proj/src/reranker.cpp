#include "nr4der/reranker.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace nr4der::reranker {

namespace {
constexpr double kClampLo = 1e-12;
constexpr double kClampHi = 1.0 - 1e-12;
}

std::string to_string(ScoreMode mode) {
    return mode == ScoreMode::Deterministic ? "det" : "prob";
}

ScoreMode score_mode_from_string(const std::string& s) {
    if (s == "det") return ScoreMode::Deterministic;
    if (s == "prob") return ScoreMode::Probabilistic;
    throw ConfigError("unknown score mode '" + s + "' (expected det or prob)");
}

std::vector<InteractionSequence> split_by_concept(const InteractionSequence& seq,
                                                  const Dataset& ds) {
    std::vector<InteractionSequence> out(ds.concept_count());
    for (int k = 0; k < ds.concept_count(); ++k) out[k].student_id = seq.student_id;
    for (const auto& it : seq.items)
        for (int k : ds.exercise(it.exercise).concepts) out[k].items.push_back(it);
    return out;
}

Vector coverage(const std::vector<int>& exercises, const Dataset& ds) {
    Vector b(ds.concept_count(), 0.0);
    for (int k = 0; k < ds.concept_count(); ++k) {
        double miss = 1.0;
        for (int e : exercises)
            miss *= 1.0 - static_cast<double>(ds.exercise(e).coverage[k]);
        b[k] = 1.0 - miss;
    }
    return b;
}

Vector coverage_general(const std::vector<Vector>& tau_rows, int concept_count) {
    Vector b(concept_count, 0.0);
    for (int k = 0; k < concept_count; ++k) {
        double miss = 1.0;
        for (const Vector& tau : tau_rows) {
            if (static_cast<int>(tau.size()) != concept_count)
                throw ShapeError("coverage_general: tau row length mismatch");
            miss *= 1.0 - tau[k];
        }
        b[k] = 1.0 - miss;
    }
    return b;
}

Vector marginal_diversity(const std::vector<int>& exercises, std::size_t index,
                          const Dataset& ds) {
    if (index >= exercises.size()) throw ShapeError("marginal_diversity: index out of range");
    Vector with = coverage(exercises, ds);
    std::vector<int> without = exercises;
    without.erase(without.begin() + static_cast<long>(index));
    Vector base = coverage(without, ds);
    for (std::size_t k = 0; k < with.size(); ++k) with[k] -= base[k];
    return with;
}

Matrix marginal_diversity_all_serial(const std::vector<int>& exercises, const Dataset& ds) {
    Matrix d(exercises.size(), ds.concept_count());
    for (std::size_t l = 0; l < exercises.size(); ++l)
        d.set_row(l, marginal_diversity(exercises, l, ds));
    return d;
}

Matrix marginal_diversity_all(const std::vector<int>& exercises, const Dataset& ds) {
    Matrix d(exercises.size(), ds.concept_count());
    const long L = static_cast<long>(exercises.size());
#pragma omp parallel for schedule(static)
    for (long l = 0; l < L; ++l)
        d.set_row(static_cast<std::size_t>(l), marginal_diversity(exercises, l, ds));
    return d;
}

Vector diversity_gain(const Vector& omega, const Vector& marginal) {
    if (omega.size() != marginal.size()) throw ShapeError("diversity_gain: length mismatch");
    Vector out(omega.size());
    for (std::size_t k = 0; k < omega.size(); ++k) out[k] = omega[k] * marginal[k];
    return out;
}

double rerank_loss(const Vector& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("rerank_loss: length mismatch");
    double loss = 0.0;
    for (std::size_t l = 0; l < scores.size(); ++l) {
        const double p = std::clamp(scores[l], kClampLo, kClampHi);
        loss += labels[l] ? -std::log(p) : -std::log(1.0 - p);
    }
    return loss;
}

Vector rerank_loss_grad(const Vector& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ShapeError("rerank_loss_grad: length mismatch");
    Vector g(scores.size(), 0.0);
    for (std::size_t l = 0; l < scores.size(); ++l) {
        if (scores[l] <= kClampLo || scores[l] >= kClampHi) continue;  // clamped flat
        const double p = scores[l];
        g[l] = (p - static_cast<double>(labels[l])) / (p * (1.0 - p));
    }
    return g;
}

std::vector<std::size_t> rank_descending(const Vector& scores,
                                         const std::vector<int>& exercises) {
    if (scores.size() != exercises.size()) throw ShapeError("rank_descending: length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return exercises[a] < exercises[b];
    });
    return order;
}

void RerankConfig::validate() const {
    if (q_s < 1 || q_e < 1 || q_h < 1 || context_dim < 1)
        throw ConfigError("reranker: feature widths must be >= 1");
    if (heads < 1 || q_h % heads != 0)
        throw ConfigError("reranker: hidden width must be divisible by the head count");
    if (epochs < 1 || batch_size < 1) throw ConfigError("reranker: epochs/batch must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("reranker: learning rate must be > 0");
    if (tail_fraction < 0.0 || tail_fraction >= 1.0)
        throw ConfigError("reranker: tail fraction must be in [0,1)");
}

RerankModel::RerankModel(const RerankConfig& cfg, int exercise_count, int concept_count,
                         bool init_params)
    : cfg_(cfg), exercises_(exercise_count), concepts_(concept_count) {
    cfg_.validate();
    if (exercise_count < 1 || concept_count < 1)
        throw ConfigError("reranker: need at least one exercise and one concept");
    build_layers();
    if (init_params) {
        std::mt19937_64 rng = make_rng(cfg_.seed, "rr.emb");
        params_.create_uniform("emb", exercises_, cfg_.q_e, cfg_.q_e, rng);
        params_.create_uniform("pace.null", 1, cfg_.q_h, cfg_.q_h, rng);
        std::mt19937_64 xs_rng = make_rng(cfg_.seed, "rr.xs");
        student_proj_->init(params_, xs_rng);
        std::mt19937_64 rel_rng = make_rng(cfg_.seed, "rr.rel");
        relevance_->init(params_, rel_rng);
        std::mt19937_64 pace_rng = make_rng(cfg_.seed, "rr.pace");
        pace_lstm_->init(params_, pace_rng);
        pace_attn_->init(params_, pace_rng);
        pace_mlp_->init(params_, pace_rng);
        std::mt19937_64 head_rng = make_rng(cfg_.seed, "rr.heads");
        det_head_->init(params_, head_rng);
        mu_head_->init(params_, head_rng);
        sigma_head_->init(params_, head_rng);
    }
}

void RerankModel::build_layers() {
    const std::size_t in_width = cfg_.q_s + cfg_.q_e + static_cast<std::size_t>(concepts_);
    const std::size_t v_width = 2 * cfg_.q_h + static_cast<std::size_t>(concepts_);
    student_proj_.emplace("xs", cfg_.context_dim, cfg_.q_s);
    relevance_.emplace("rel", in_width, cfg_.q_h);
    pace_lstm_.emplace("pace.lstm", cfg_.q_e + 1, cfg_.q_h);
    pace_attn_.emplace("pace.attn", cfg_.q_h, cfg_.heads);
    pace_mlp_.emplace("pace.mlp", std::vector<std::size_t>{cfg_.q_h, cfg_.q_h, 1},
                      tensorkit::Activation::Sigmoid);
    det_head_.emplace("det", std::vector<std::size_t>{v_width, cfg_.q_h, 1},
                      tensorkit::Activation::Sigmoid);
    mu_head_.emplace("mu", std::vector<std::size_t>{v_width, cfg_.q_h, 1},
                     tensorkit::Activation::Sigmoid);
    sigma_head_.emplace("sigma", std::vector<std::size_t>{v_width, cfg_.q_h, 1},
                        tensorkit::Activation::Softplus);
}

void RerankModel::save(const std::string& path) const {
    if (!ready()) throw StateError("reranker: saving an untrained model");
    ParameterSet copy = params_;
    Matrix& meta = copy.create("zz.meta", 1, 12);
    meta(0, 0) = 1;
    meta(0, 1) = static_cast<double>(cfg_.q_s);
    meta(0, 2) = static_cast<double>(cfg_.q_e);
    meta(0, 3) = static_cast<double>(cfg_.q_h);
    meta(0, 4) = static_cast<double>(cfg_.heads);
    meta(0, 5) = static_cast<double>(cfg_.context_dim);
    meta(0, 6) = static_cast<double>(exercises_);
    meta(0, 7) = static_cast<double>(concepts_);
    meta(0, 8) = static_cast<double>(cfg_.epochs);
    meta(0, 9) = static_cast<double>(cfg_.batch_size);
    meta(0, 10) = cfg_.learning_rate;
    meta(0, 11) = cfg_.tail_fraction;
    tensorkit::save_checkpoint(copy, path);
}

RerankModel RerankModel::load(const std::string& path) {
    ParameterSet ps = tensorkit::load_checkpoint(path);
    if (!ps.has("zz.meta")) throw ParseError("reranker checkpoint missing metadata: " + path);
    const Matrix& meta = ps.value("zz.meta");
    if (meta.cols() != 12 || meta(0, 0) != 1.0)
        throw ParseError("reranker checkpoint has unsupported metadata: " + path);
    RerankConfig cfg;
    cfg.q_s = static_cast<std::size_t>(meta(0, 1));
    cfg.q_e = static_cast<std::size_t>(meta(0, 2));
    cfg.q_h = static_cast<std::size_t>(meta(0, 3));
    cfg.heads = static_cast<std::size_t>(meta(0, 4));
    cfg.context_dim = static_cast<std::size_t>(meta(0, 5));
    const int exercises = static_cast<int>(meta(0, 6));
    const int concepts = static_cast<int>(meta(0, 7));
    cfg.epochs = static_cast<int>(meta(0, 8));
    cfg.batch_size = static_cast<int>(meta(0, 9));
    cfg.learning_rate = meta(0, 10);
    cfg.tail_fraction = meta(0, 11);
    ps.remove("zz.meta");
    RerankModel model(cfg, exercises, concepts, /*init_params=*/false);
    model.params_ = std::move(ps);
    return model;
}

ScoreBundle RerankModel::score(const ListInstance& inst, const Dataset& ds, const Vector* xi,
                               bool zero_diversity) const {
    Forward cache;
    return score_impl(inst, ds, xi, zero_diversity, &cache);
}

ScoreBundle RerankModel::score_impl(const ListInstance& inst, const Dataset& ds,
                                    const Vector* xi, bool zero_diversity,
                                    Forward* fwd) const {
    if (!ready()) throw StateError("reranker: model has no parameters");
    if (inst.candidates.empty()) throw ShapeError("reranker: empty candidate list");
    if (inst.hplus.size() != cfg_.context_dim)
        throw ShapeError("reranker: student representation width mismatch");
    if (xi && xi->size() != inst.candidates.size())
        throw ShapeError("reranker: noise length mismatch");
    const std::size_t L = inst.candidates.size();
    const std::size_t M = static_cast<std::size_t>(concepts_);
    const Matrix& emb = params_.value("emb");

    fwd->candidates = inst.candidates;
    fwd->hplus = inst.hplus;
    fwd->zero_diversity = zero_diversity;
    fwd->xi = xi ? *xi : Vector(L, 0.0);

    // listwise relevance context over candidates in filter-weight order
    fwd->xs = student_proj_->forward(params_, inst.hplus);
    fwd->e_rows.clear();
    fwd->e_rows.reserve(L);
    for (int e : inst.candidates) {
        Vector row = fwd->xs;
        row.reserve(cfg_.q_s + cfg_.q_e + M);
        for (std::size_t j = 0; j < cfg_.q_e; ++j)
            row.push_back(emb(static_cast<std::size_t>(e), j));
        for (std::size_t k = 0; k < M; ++k)
            row.push_back(static_cast<double>(ds.exercise(e).coverage[k]));
        fwd->e_rows.push_back(std::move(row));
    }
    fwd->H = relevance_->forward(params_, fwd->e_rows, fwd->relevance);

    // learning-pace distribution from concept-split histories
    fwd->concept_seqs = split_by_concept(inst.history, ds);
    fwd->pace_caches.assign(M, std::nullopt);
    fwd->pace_rows = Matrix(M, cfg_.q_h);
    const Matrix& null_row = params_.value("pace.null");
    for (std::size_t k = 0; k < M; ++k) {
        const auto& sub = fwd->concept_seqs[k];
        if (sub.items.empty()) {
            for (std::size_t j = 0; j < cfg_.q_h; ++j) fwd->pace_rows(k, j) = null_row(0, j);
            continue;
        }
        std::vector<Vector> inputs;
        inputs.reserve(sub.items.size());
        for (const auto& it : sub.items) {
            Vector x(cfg_.q_e + 1);
            for (std::size_t j = 0; j < cfg_.q_e; ++j)
                x[j] = emb(static_cast<std::size_t>(it.exercise), j);
            x[cfg_.q_e] = static_cast<double>(it.correct);
            inputs.push_back(std::move(x));
        }
        fwd->pace_caches[k] = pace_lstm_->forward(params_, inputs);
        const Vector& h = fwd->pace_caches[k]->h.back();
        for (std::size_t j = 0; j < cfg_.q_h; ++j) fwd->pace_rows(k, j) = h[j];
    }
    fwd->attn_out = pace_attn_->forward(params_, fwd->pace_rows, fwd->attn);
    fwd->omega = Vector(M);
    fwd->pace_mlp.assign(M, {});
    for (std::size_t k = 0; k < M; ++k)
        fwd->omega[k] = pace_mlp_->forward(params_, fwd->attn_out.row(k), fwd->pace_mlp[k])[0];

    // pace-weighted marginal diversity, fused with the relevance rows
    fwd->diversity = marginal_diversity_all_serial(inst.candidates, ds);
    fwd->v_rows.clear();
    fwd->v_rows.reserve(L);
    for (std::size_t l = 0; l < L; ++l) {
        Vector v = fwd->H[l];
        v.reserve(2 * cfg_.q_h + M);
        for (std::size_t k = 0; k < M; ++k)
            v.push_back(zero_diversity ? 0.0 : fwd->omega[k] * fwd->diversity(l, k));
        fwd->v_rows.push_back(std::move(v));
    }

    ScoreBundle out;
    out.omega = fwd->omega;
    out.diversity = fwd->diversity;
    out.deterministic = Vector(L);
    out.mu = Vector(L);
    out.sigma = Vector(L);
    fwd->det_caches.assign(L, {});
    fwd->mu_caches.assign(L, {});
    fwd->sigma_caches.assign(L, {});
    for (std::size_t l = 0; l < L; ++l) {
        out.deterministic[l] = det_head_->forward(params_, fwd->v_rows[l], fwd->det_caches[l])[0];
        out.mu[l] = mu_head_->forward(params_, fwd->v_rows[l], fwd->mu_caches[l])[0];
        out.sigma[l] = sigma_head_->forward(params_, fwd->v_rows[l], fwd->sigma_caches[l])[0];
    }
    fwd->scores = out;
    return out;
}

void RerankModel::backward(const Forward& fwd, const Dataset& ds, const Vector& d_det,
                           const Vector& d_prob) {
    const std::size_t L = fwd.candidates.size();
    const std::size_t M = static_cast<std::size_t>(concepts_);
    const std::size_t rel_w = relevance_width();

    std::vector<Vector> dH(L, Vector(rel_w, 0.0));
    Vector domega(M, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
        Vector dv = det_head_->backward(params_, fwd.det_caches[l], {d_det[l]});
        Vector dv_mu = mu_head_->backward(params_, fwd.mu_caches[l], {d_prob[l]});
        Vector dv_sigma =
            sigma_head_->backward(params_, fwd.sigma_caches[l], {d_prob[l] * fwd.xi[l]});
        tensorkit::axpy(dv, 1.0, dv_mu);
        tensorkit::axpy(dv, 1.0, dv_sigma);
        for (std::size_t j = 0; j < rel_w; ++j) dH[l][j] = dv[j];
        if (!fwd.zero_diversity)
            for (std::size_t k = 0; k < M; ++k)
                domega[k] += dv[rel_w + k] * fwd.diversity(l, k);
    }

    // pace branch
    Matrix dattn_out(M, cfg_.q_h);
    for (std::size_t k = 0; k < M; ++k) {
        Vector drow = pace_mlp_->backward(params_, fwd.pace_mlp[k], {domega[k]});
        for (std::size_t j = 0; j < cfg_.q_h; ++j) dattn_out(k, j) = drow[j];
    }
    Matrix dpace_rows = pace_attn_->backward(params_, fwd.attn, dattn_out);
    Matrix& demb = params_.grad("emb");
    Matrix& dnull = params_.grad("pace.null");
    for (std::size_t k = 0; k < M; ++k) {
        if (!fwd.pace_caches[k].has_value()) {
            for (std::size_t j = 0; j < cfg_.q_h; ++j) dnull(0, j) += dpace_rows(k, j);
            continue;
        }
        const auto& cache = *fwd.pace_caches[k];
        std::vector<Vector> dh(cache.steps, Vector(cfg_.q_h, 0.0));
        dh[cache.steps - 1] = dpace_rows.row(k);
        std::vector<Vector> dx = pace_lstm_->backward(params_, cache, dh);
        const auto& sub = fwd.concept_seqs[k];
        for (std::size_t t = 0; t < cache.steps; ++t) {
            const int e = sub.items[t].exercise;
            for (std::size_t j = 0; j < cfg_.q_e; ++j)
                demb(static_cast<std::size_t>(e), j) += dx[t][j];
        }
    }

    // relevance branch
    std::vector<Vector> de_rows = relevance_->backward(params_, fwd.relevance, dH);
    Vector dxs(cfg_.q_s, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t j = 0; j < cfg_.q_s; ++j) dxs[j] += de_rows[l][j];
        const int e = fwd.candidates[l];
        for (std::size_t j = 0; j < cfg_.q_e; ++j)
            demb(static_cast<std::size_t>(e), j) += de_rows[l][cfg_.q_s + j];
        // coverage bits are constants
    }
    student_proj_->backward(params_, fwd.hplus, dxs);  // upstream is frozen
    (void)ds;
}

RerankOutput RerankModel::rerank(const ListInstance& inst, const Dataset& ds, int k,
                                 ScoreMode mode, bool zero_diversity) const {
    if (k < 1) throw ConfigError("rerank: k must be >= 1");
    ScoreBundle bundle = score(inst, ds, nullptr, zero_diversity);
    Vector scores;
    if (mode == ScoreMode::Deterministic) {
        scores = bundle.deterministic;
    } else {
        scores = bundle.mu;
        tensorkit::axpy(scores, 1.0, bundle.sigma);  // U = mu + sigma
    }
    std::vector<std::size_t> order = rank_descending(scores, inst.candidates);
    RerankOutput out;
    out.student = inst.student;
    out.mode = mode;
    out.k = k;
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    out.items.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        out.items.push_back({inst.candidates[order[i]], scores[order[i]]});
    return out;
}

double RerankModel::training_pass(const std::vector<ListInstance>& instances, const Dataset& ds,
                                  const std::vector<Vector>& xi_rows, bool with_grads,
                                  double grad_scale, double* loss_det_out,
                                  double* loss_prob_out, bool zero_diversity) {
    if (instances.size() != xi_rows.size())
        throw ShapeError("training_pass: one noise row per instance required");
    double sum_det = 0.0, sum_prob = 0.0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const ListInstance& inst = instances[i];
        if (inst.labels.size() != inst.candidates.size())
            throw ShapeError("training_pass: labels not aligned with candidates");
        Forward fwd;
        ScoreBundle bundle = score_impl(inst, ds, &xi_rows[i], zero_diversity, &fwd);
        Vector phi_prob = bundle.mu;
        for (std::size_t l = 0; l < phi_prob.size(); ++l)
            phi_prob[l] += xi_rows[i][l] * bundle.sigma[l];
        sum_det += rerank_loss(bundle.deterministic, inst.labels);
        sum_prob += rerank_loss(phi_prob, inst.labels);
        if (with_grads) {
            Vector d_det = rerank_loss_grad(bundle.deterministic, inst.labels);
            Vector d_prob = rerank_loss_grad(phi_prob, inst.labels);
            for (double& v : d_det) v *= grad_scale;
            for (double& v : d_prob) v *= grad_scale;
            backward(fwd, ds, d_det, d_prob);
        }
    }
    if (loss_det_out) *loss_det_out = sum_det;
    if (loss_prob_out) *loss_prob_out = sum_prob;
    return sum_det + sum_prob;
}

TrainOutput train_reranker(const std::vector<ListInstance>& instances, const Dataset& ds,
                           const RerankConfig& cfg) {
    cfg.validate();
    if (instances.empty()) throw ConfigError("train_reranker: no training instances");
    RerankModel model(cfg, ds.exercise_count(), ds.concept_count());

    tensorkit::Adam adam(cfg.learning_rate);
    std::mt19937_64 shuffle_rng = make_rng(cfg.seed, "rr.shuffle");
    std::mt19937_64 noise_rng = make_rng(cfg.seed, "rr.noise");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochLog> log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_det = 0.0, epoch_prob = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<ListInstance> batch;
            std::vector<Vector> xi_rows;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(instances[order[i]]);
                Vector xi(batch.back().candidates.size());
                for (double& v : xi) v = normal(noise_rng);
                xi_rows.push_back(std::move(xi));
            }
            model.params().zero_grads();
            double ld = 0.0, lp = 0.0;
            const double total = model.training_pass(batch, ds, xi_rows, true,
                                                     1.0 / static_cast<double>(batch.size()),
                                                     &ld, &lp);
            if (!std::isfinite(total))
                throw NumericError("reranker training diverged (non-finite loss) at epoch " +
                                   std::to_string(epoch));
            adam.step(model.params());
            epoch_det += ld;
            epoch_prob += lp;
        }
        EpochLog entry;
        entry.epoch = epoch;
        entry.loss_det = epoch_det / static_cast<double>(instances.size());
        entry.loss_prob = epoch_prob / static_cast<double>(instances.size());
        log.push_back(entry);
    }

    TrainOutput out;
    out.model = std::move(model);
    out.log = std::move(log);
    return out;
}

void write_rerank_csv(const std::vector<RerankOutput>& outputs, const Dataset& ds,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write rerank output: " + path);
    out << "student_id,rank,exercise_id,score,mode\n";
    char buf[64];
    for (const RerankOutput& ro : outputs) {
        for (std::size_t r = 0; r < ro.items.size(); ++r) {
            std::snprintf(buf, sizeof(buf), "%.9g", ro.items[r].score);
            out << ds.student(ro.student).student_id << "," << (r + 1) << ","
                << ds.exercise(ro.items[r].exercise).id << "," << buf << ","
                << to_string(ro.mode) << "\n";
        }
    }
}

}  // namespace nr4der::reranker
