#include "nr4der/enhancer.hpp"

#include <cmath>
#include <numbers>

namespace nr4der::enhancer {

SequenceEncoder::SequenceEncoder(std::string prefix, int exercise_count, std::size_t emb_dim,
                                 std::size_t out_dim)
    : prefix_(std::move(prefix)), exercise_count_(exercise_count), emb_dim_(emb_dim),
      out_dim_(out_dim), lstm_(prefix_ + ".lstm", emb_dim + 1, out_dim) {}

void SequenceEncoder::init(ParameterSet& ps, std::mt19937_64& rng) const {
    ps.create_uniform(prefix_ + ".emb", exercise_count_, emb_dim_, emb_dim_, rng);
    lstm_.init(ps, rng);
}

Vector SequenceEncoder::encode(const ParameterSet& ps,
                               const datamodel::InteractionSequence& seq, Cache& cache) const {
    if (seq.empty()) throw ShapeError("SequenceEncoder: empty sequence");
    const Matrix& emb = ps.value(prefix_ + ".emb");
    cache.exercises.clear();
    std::vector<Vector> inputs;
    inputs.reserve(seq.size());
    for (const auto& it : seq.items) {
        if (it.exercise < 0 || it.exercise >= exercise_count_)
            throw ShapeError("SequenceEncoder: exercise index out of range");
        Vector x(emb_dim_ + 1);
        for (std::size_t j = 0; j < emb_dim_; ++j) x[j] = emb(it.exercise, j);
        x[emb_dim_] = static_cast<double>(it.correct);
        inputs.push_back(std::move(x));
        cache.exercises.push_back(it.exercise);
    }
    cache.lstm = lstm_.forward(ps, inputs);
    return cache.lstm.h.back();
}

Vector SequenceEncoder::encode(const ParameterSet& ps,
                               const datamodel::InteractionSequence& seq) const {
    Cache cache;
    return encode(ps, seq, cache);
}

void SequenceEncoder::backward(ParameterSet& ps, const Cache& cache,
                               const Vector& d_final) const {
    const std::size_t T = cache.lstm.steps;
    std::vector<Vector> dh(T, Vector(out_dim_, 0.0));
    dh[T - 1] = d_final;
    std::vector<Vector> dx = lstm_.backward(ps, cache.lstm, dh);
    Matrix& demb = ps.grad(prefix_ + ".emb");
    for (std::size_t t = 0; t < T; ++t) {
        const int e = cache.exercises[t];
        for (std::size_t j = 0; j < emb_dim_; ++j) demb(e, j) += dx[t][j];
    }
}

double curriculum_weight(int epo, int epo_max, int len, int len_min, int len_max) {
    if (epo < 0 || epo_max <= 0 || epo > epo_max)
        throw ConfigError("curriculum_weight: need 0 <= epo <= epo_max");
    if (len < len_min || len > len_max)
        throw ConfigError("curriculum_weight: len outside [len_min, len_max]");
    double len_term;
    if (len_max == len_min) {
        if (len != len_min) throw ConfigError("curriculum_weight: degenerate length range");
        len_term = 0.0;
    } else {
        len_term = static_cast<double>(len - len_min) / static_cast<double>(len_max - len_min);
    }
    const double arg = (std::numbers::pi / 2.0) *
                       (static_cast<double>(epo) / static_cast<double>(epo_max) + len_term);
    const double w = std::sin(arg);
    return std::clamp(w, 0.0, 1.0);
}

double enhancer_loss(const Vector& h_target, const Vector& generated, double w) {
    if (h_target.size() != generated.size())
        throw ShapeError("enhancer_loss: dimension mismatch");
    if (w < 0.0) throw ConfigError("enhancer_loss: negative weight");
    return w * tensorkit::squared_distance(h_target, generated);
}

Vector enhancer_loss_grad(const Vector& h_target, const Vector& generated, double w) {
    if (h_target.size() != generated.size())
        throw ShapeError("enhancer_loss_grad: dimension mismatch");
    Vector dg(generated.size());
    for (std::size_t i = 0; i < dg.size(); ++i)
        dg[i] = 2.0 * w * (generated[i] - h_target[i]);
    return dg;
}

Vector enhance_representation(const Vector& h, const Vector& generated, bool active,
                              double beta) {
    if (active) return h;
    if (h.size() != generated.size())
        throw ShapeError("enhance_representation: dimension mismatch");
    Vector out = generated;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += beta * h[i];
    return out;
}

}  // namespace nr4der::enhancer
