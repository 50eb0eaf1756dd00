#include "nr4der/kcmp.hpp"

#include <algorithm>
#include <cmath>

namespace nr4der::kcmp {

namespace {
constexpr double kClampLo = 1e-12;
constexpr double kClampHi = 1.0 - 1e-12;

double bce(double y, int a) {
    const double p = std::clamp(y, kClampLo, kClampHi);
    return a ? -std::log(p) : -std::log(1.0 - p);
}
}  // namespace

void KcmpConfig::validate() const {
    if (dim < 1 || emb_dim < 1) throw ConfigError("kcmp: dimensions must be >= 1");
    if (epochs < 1 || batch_size < 1) throw ConfigError("kcmp: epochs/batch must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("kcmp: learning rate must be > 0");
    if (lambda_s < 0.0) throw ConfigError("kcmp: lambda_s must be >= 0");
    if (beta < 0.0 || beta > 1.0) throw ConfigError("kcmp: beta must be in [0,1]");
    if (truncation < 1) throw ConfigError("kcmp: truncation must be >= 1");
}

double kcmp_loss(const std::vector<std::vector<Vector>>& predictions,
                 const std::vector<std::vector<StepTarget>>& targets) {
    if (predictions.size() != targets.size())
        throw ShapeError("kcmp_loss: student count mismatch");
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].size() != targets[i].size())
            throw ShapeError("kcmp_loss: step count mismatch for student " + std::to_string(i));
        for (std::size_t t = 0; t < targets[i].size(); ++t) {
            const StepTarget& tgt = targets[i][t];
            if (tgt.concepts.empty()) throw ShapeError("kcmp_loss: target covers no concept");
            double step = 0.0;
            for (int k : tgt.concepts) step += bce(predictions[i][t].at(k), tgt.correct);
            total += step / static_cast<double>(tgt.concepts.size());
            ++steps;
        }
    }
    if (steps == 0) throw ShapeError("kcmp_loss: no target steps");
    return total / static_cast<double>(steps);
}

double total_loss(double enhancer_loss_sum, double kcmp_loss_value, double lambda_s) {
    if (lambda_s < 0.0) throw ConfigError("total_loss: lambda_s must be >= 0");
    return lambda_s * enhancer_loss_sum + kcmp_loss_value;
}

Vector interaction_token(const datamodel::Exercise& e, int correct, int concept_count) {
    Vector u(2 * static_cast<std::size_t>(concept_count), 0.0);
    const double share = 1.0 / static_cast<double>(e.concepts.size());
    for (int k : e.concepts) {
        if (correct)
            u[k] = share;
        else
            u[concept_count + k] = share;
    }
    return u;
}

KcmpModel::KcmpModel(const KcmpConfig& cfg, int exercise_count, int concept_count,
                     bool init_params)
    : cfg_(cfg), exercises_(exercise_count), concepts_(concept_count) {
    cfg_.validate();
    if (exercise_count < 1 || concept_count < 1)
        throw ConfigError("kcmp: need at least one exercise and one concept");
    build_layers();
    if (init_params) {
        std::mt19937_64 enc_rng = make_rng(cfg_.seed, "kcmp.enc");
        encoder_->init(params_, enc_rng);
        if (cfg_.enhancer_enabled) {
            std::mt19937_64 gen_rng = make_rng(cfg_.seed, "kcmp.gen");
            generator_->init(params_, gen_rng);
        }
        std::mt19937_64 ctx_rng = make_rng(cfg_.seed, "kcmp.ctx");
        context_->init(params_, ctx_rng);
        std::mt19937_64 kt_rng = make_rng(cfg_.seed, "kcmp.kt");
        mlstm_->init(params_, kt_rng);
        std::mt19937_64 head_rng = make_rng(cfg_.seed, "kcmp.head");
        head_->init(params_, head_rng);

        // Concept-anchored memory: practicing concept k writes along
        // e_{k mod d}, with full weight for a correct answer and reduced
        // weight for an incorrect one. The constant query direction then
        // retrieves per-concept practice frequencies shaded by success, and
        // the head starts aligned to decode them.
        const std::size_t d = cfg_.dim;
        Matrix& Wv = params_.value("kt.Wv");
        Matrix& head = params_.value("head.W");
        for (std::size_t k = 0; k < static_cast<std::size_t>(concepts_); ++k) {
            Wv(k % d, k) += 1.0;
            Wv(k % d, static_cast<std::size_t>(concepts_) + k) += 0.4;
            head(k, k % d) += 2.0;
        }
        params_.value("kt.bq").fill(1.0);
    }
}

void KcmpModel::build_layers() {
    const std::size_t M2 = 2 * static_cast<std::size_t>(concepts_);
    encoder_.emplace("enc", exercises_, cfg_.emb_dim, cfg_.dim);
    generator_.emplace("gen", cfg_.dim);
    context_.emplace("ctx", cfg_.dim, M2);
    mlstm_.emplace("kt", M2, cfg_.dim);
    head_.emplace("head", cfg_.dim, static_cast<std::size_t>(concepts_));
}

void KcmpModel::save(const std::string& path) const {
    if (!ready()) throw StateError("kcmp: saving an untrained model");
    ParameterSet copy = params_;
    Matrix& meta = copy.create("zz.meta", 1, 12);
    meta(0, 0) = 1;  // format version
    meta(0, 1) = static_cast<double>(cfg_.dim);
    meta(0, 2) = static_cast<double>(cfg_.emb_dim);
    meta(0, 3) = static_cast<double>(exercises_);
    meta(0, 4) = static_cast<double>(concepts_);
    meta(0, 5) = static_cast<double>(cfg_.epochs);
    meta(0, 6) = static_cast<double>(cfg_.batch_size);
    meta(0, 7) = cfg_.learning_rate;
    meta(0, 8) = cfg_.lambda_s;
    meta(0, 9) = cfg_.beta;
    meta(0, 10) = static_cast<double>(cfg_.truncation);
    meta(0, 11) = cfg_.enhancer_enabled ? 1.0 : 0.0;
    tensorkit::save_checkpoint(copy, path);
}

KcmpModel KcmpModel::load(const std::string& path) {
    ParameterSet ps = tensorkit::load_checkpoint(path);
    if (!ps.has("zz.meta")) throw ParseError("kcmp checkpoint missing metadata: " + path);
    const Matrix& meta = ps.value("zz.meta");
    if (meta.cols() != 12 || meta(0, 0) != 1.0)
        throw ParseError("kcmp checkpoint has unsupported metadata: " + path);
    KcmpConfig cfg;
    cfg.dim = static_cast<std::size_t>(meta(0, 1));
    cfg.emb_dim = static_cast<std::size_t>(meta(0, 2));
    const int exercises = static_cast<int>(meta(0, 3));
    const int concepts = static_cast<int>(meta(0, 4));
    cfg.epochs = static_cast<int>(meta(0, 5));
    cfg.batch_size = static_cast<int>(meta(0, 6));
    cfg.learning_rate = meta(0, 7);
    cfg.lambda_s = meta(0, 8);
    cfg.beta = meta(0, 9);
    cfg.truncation = static_cast<int>(meta(0, 10));
    cfg.enhancer_enabled = meta(0, 11) != 0.0;
    ps.remove("zz.meta");
    KcmpModel model(cfg, exercises, concepts, /*init_params=*/false);
    model.params_ = std::move(ps);
    return model;
}

Vector KcmpModel::enhanced_representation(const InteractionSequence& seq, bool active) const {
    if (!ready()) throw StateError("kcmp: model has no parameters");
    Vector z = encoder_->encode(params_, seq);
    if (!cfg_.enhancer_enabled || active) return z;
    Vector g = generator_->forward(params_, z);
    return enhancer::enhance_representation(z, g, /*active=*/false, cfg_.beta);
}

std::vector<Vector> KcmpModel::per_step_predictions(const Vector& hplus,
                                                    const InteractionSequence& history,
                                                    const Dataset& ds) const {
    if (!ready()) throw StateError("kcmp: model has no parameters");
    if (history.empty()) throw ShapeError("kcmp: empty history");
    if (hplus.size() != cfg_.dim) throw ShapeError("kcmp: context dimension mismatch");
    std::vector<Vector> tokens;
    tokens.reserve(history.size() + 1);
    tokens.push_back(context_->forward(params_, hplus));
    for (const auto& it : history.items)
        tokens.push_back(interaction_token(ds.exercise(it.exercise), it.correct, concepts_));
    auto cache = mlstm_->forward(params_, tokens);
    std::vector<Vector> out;
    out.reserve(history.size());
    for (std::size_t t = 0; t < history.size(); ++t) {
        Vector logits = head_->forward(params_, cache.h[t]);
        for (double& v : logits) v = tensorkit::sigmoid(v);
        out.push_back(std::move(logits));
    }
    return out;
}

MasteryVector KcmpModel::predict_mastery(const Vector& hplus, const InteractionSequence& history,
                                         const Dataset& ds) const {
    if (!ready()) throw StateError("kcmp: model has no parameters");
    if (history.empty()) throw ShapeError("kcmp: empty history");
    if (hplus.size() != cfg_.dim) throw ShapeError("kcmp: context dimension mismatch");
    std::vector<Vector> tokens;
    tokens.reserve(history.size() + 1);
    tokens.push_back(context_->forward(params_, hplus));
    for (const auto& it : history.items)
        tokens.push_back(interaction_token(ds.exercise(it.exercise), it.correct, concepts_));
    auto cache = mlstm_->forward(params_, tokens);
    Vector logits = head_->forward(params_, cache.h.back());
    for (double& v : logits) v = tensorkit::sigmoid(v);
    return logits;
}

std::vector<MasteryVector> KcmpModel::predict_all_serial(const Dataset& ds,
                                                         const LongTailSplit& split) const {
    std::vector<MasteryVector> out(ds.student_count());
    for (int s = 0; s < ds.student_count(); ++s) {
        const auto& seq = ds.student(s);
        Vector hplus = enhanced_representation(seq, split.active_student(s));
        out[s] = predict_mastery(hplus, seq, ds);
    }
    return out;
}

std::vector<MasteryVector> KcmpModel::predict_all(const Dataset& ds,
                                                  const LongTailSplit& split) const {
    std::vector<MasteryVector> out(ds.student_count());
    const int n = ds.student_count();
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < n; ++s) {
        const auto& seq = ds.student(s);
        Vector hplus = enhanced_representation(seq, split.active_student(s));
        out[s] = predict_mastery(hplus, seq, ds);
    }
    return out;
}

namespace {

struct LengthBounds {
    int min_len = 0;
    int max_len = 0;
};

LengthBounds length_bounds(const Dataset& ds) {
    LengthBounds b{INT32_MAX, 0};
    for (const auto& s : ds.students()) {
        b.min_len = std::min(b.min_len, static_cast<int>(s.size()));
        b.max_len = std::max(b.max_len, static_cast<int>(s.size()));
    }
    return b;
}

}  // namespace

double KcmpModel::joint_pass(const Dataset& ds, const LongTailSplit& split,
                             const std::vector<int>& students, int epoch, int len_min,
                             int len_max, bool with_grads, PassStats* stats,
                             const std::vector<Vector>* fixed_targets) {
    if (!ready()) throw StateError("kcmp: model has no parameters");
    ParameterSet& ps = params_;
    const int M = concepts_;
    const bool use_enhancer_loss = cfg_.enhancer_enabled && cfg_.lambda_s > 0.0;

    std::size_t total_steps = 0;
    for (int s : students) total_steps += ds.student(s).size();
    if (total_steps == 0) throw ShapeError("kcmp joint_pass: no interactions");
    const double inv_steps = 1.0 / static_cast<double>(total_steps);

    double bce_sum = 0.0;
    double loss_s = 0.0;

    for (std::size_t si = 0; si < students.size(); ++si) {
        const int s = students[si];
        const InteractionSequence& seq = ds.student(s);
        const bool active = split.active_student(s);

        enhancer::SequenceEncoder::Cache enc_cache;
        Vector z = encoder_->encode(ps, seq, enc_cache);

        Vector hplus;
        tensorkit::Mlp::Cache gen_cache;
        bool used_generator = false;
        if (cfg_.enhancer_enabled && !active) {
            Vector g = generator_->forward(ps, z, gen_cache);
            hplus = enhancer::enhance_representation(z, g, false, cfg_.beta);
            used_generator = true;
        } else {
            hplus = z;
        }

        // Reconstruction loss on active students: the full-history encoding
        // is the target, gradients flow only through the truncated branch.
        if (use_enhancer_loss && active) {
            const Vector h_target = fixed_targets ? fixed_targets->at(si) : z;
            enhancer::SequenceEncoder::Cache trunc_cache;
            Vector r = encoder_->encode(
                ps, datamodel::truncate_sequence(seq, cfg_.truncation), trunc_cache);
            tensorkit::Mlp::Cache gcache;
            Vector g = generator_->forward(ps, r, gcache);
            const double w = enhancer::curriculum_weight(epoch, cfg_.epochs,
                                                         static_cast<int>(seq.size()), len_min,
                                                         len_max);
            loss_s += enhancer::enhancer_loss(h_target, g, w);
            if (with_grads) {
                Vector dg = enhancer::enhancer_loss_grad(h_target, g, w);
                for (double& v : dg) v *= cfg_.lambda_s;
                Vector dr = generator_->backward(ps, gcache, dg);
                encoder_->backward(ps, trunc_cache, dr);
            }
        }

        // knowledge-tracing forward
        std::vector<Vector> tokens;
        tokens.reserve(seq.size() + 1);
        tokens.push_back(context_->forward(ps, hplus));
        for (const auto& it : seq.items)
            tokens.push_back(interaction_token(ds.exercise(it.exercise), it.correct, M));
        auto kt_cache = mlstm_->forward(ps, tokens);

        std::vector<Vector> dh(tokens.size(), Vector(cfg_.dim, 0.0));
        for (std::size_t t = 0; t < seq.size(); ++t) {
            Vector logits = head_->forward(ps, kt_cache.h[t]);
            const auto& concepts = ds.exercise(seq.items[t].exercise).concepts;
            const int a = seq.items[t].correct;
            const double share = 1.0 / static_cast<double>(concepts.size());
            Vector dz(static_cast<std::size_t>(M), 0.0);
            double step_loss = 0.0;
            for (int k : concepts) {
                const double y = tensorkit::sigmoid(logits[k]);
                step_loss += bce(y, a) * share;
                dz[k] = (y - static_cast<double>(a)) * share * inv_steps;
            }
            bce_sum += step_loss;
            if (with_grads) dh[t] = head_->backward(ps, kt_cache.h[t], dz);
        }
        if (with_grads) {
            std::vector<Vector> dx = mlstm_->backward(ps, kt_cache, dh);
            Vector dhplus = context_->backward(ps, hplus, dx[0]);
            if (used_generator) {
                Vector dz_enc = generator_->backward(ps, gen_cache, dhplus);
                tensorkit::axpy(dz_enc, cfg_.beta, dhplus);
                encoder_->backward(ps, enc_cache, dz_enc);
            } else {
                encoder_->backward(ps, enc_cache, dhplus);
            }
        }
    }

    if (stats) {
        stats->bce_sum = bce_sum;
        stats->steps = total_steps;
        stats->enhancer_sum = loss_s;
    }
    return total_loss(loss_s, bce_sum * inv_steps, cfg_.lambda_s);
}

TrainOutput train_kcmp(const Dataset& train, const LongTailSplit& split, const KcmpConfig& cfg) {
    cfg.validate();
    if (train.student_count() == 0) throw ConfigError("train_kcmp: empty dataset");
    KcmpModel model(cfg, train.exercise_count(), train.concept_count());
    const LengthBounds bounds = length_bounds(train);

    tensorkit::Adam adam(cfg.learning_rate);
    std::mt19937_64 shuffle_rng = make_rng(cfg.seed, "kcmp.shuffle");
    std::vector<int> order(train.student_count());
    for (int i = 0; i < train.student_count(); ++i) order[i] = i;

    std::vector<EpochLog> log;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_bce_sum = 0.0;
        std::size_t epoch_steps = 0;
        double epoch_loss_s = 0.0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::vector<int> batch(order.begin() + static_cast<long>(start),
                                         order.begin() + static_cast<long>(end));
            model.params().zero_grads();
            KcmpModel::PassStats stats;
            const double batch_loss = model.joint_pass(train, split, batch, epoch,
                                                       bounds.min_len, bounds.max_len,
                                                       /*with_grads=*/true, &stats);
            if (!std::isfinite(batch_loss))
                throw NumericError("kcmp training diverged (non-finite loss) at epoch " +
                                   std::to_string(epoch));
            adam.step(model.params());
            epoch_bce_sum += stats.bce_sum;
            epoch_steps += stats.steps;
            epoch_loss_s += stats.enhancer_sum;
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.loss_k = epoch_bce_sum / static_cast<double>(epoch_steps);
        entry.loss_s = epoch_loss_s;
        entry.loss_total = total_loss(epoch_loss_s, entry.loss_k, cfg.lambda_s);
        log.push_back(entry);
    }

    TrainOutput out;
    out.model = std::move(model);
    out.log = std::move(log);
    return out;
}

}  // namespace nr4der::kcmp
