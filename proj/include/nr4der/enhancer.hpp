#ifndef NR4DER_ENHANCER_HPP
#define NR4DER_ENHANCER_HPP

#include "nr4der/datamodel.hpp"
#include "nr4der/layers.hpp"
#include "nr4der/lstm.hpp"

namespace nr4der::enhancer {

using tensorkit::Matrix;
using tensorkit::ParameterSet;
using tensorkit::Vector;

// Exercise-sequence encoder: learned exercise embedding concatenated with the
// correctness flag, run through an LSTM; the final hidden state is the
// student representation.
class SequenceEncoder {
public:
    SequenceEncoder(std::string prefix, int exercise_count, std::size_t emb_dim,
                    std::size_t out_dim);

    void init(ParameterSet& ps, std::mt19937_64& rng) const;

    struct Cache {
        std::vector<int> exercises;
        tensorkit::Lstm::Cache lstm;
    };

    Vector encode(const ParameterSet& ps, const datamodel::InteractionSequence& seq,
                  Cache& cache) const;
    Vector encode(const ParameterSet& ps, const datamodel::InteractionSequence& seq) const;
    // d_final: gradient w.r.t. the final hidden state.
    void backward(ParameterSet& ps, const Cache& cache, const Vector& d_final) const;

    std::size_t out_dim() const { return out_dim_; }

private:
    std::string prefix_;
    int exercise_count_;
    std::size_t emb_dim_, out_dim_;
    tensorkit::Lstm lstm_;
};

// Student representation generator: reconstructs a full-history
// representation from a truncated-history encoding.
class Generator {
public:
    Generator(std::string prefix, std::size_t dim)
        : mlp_(std::move(prefix), {dim, dim, dim}, tensorkit::Activation::Identity) {}

    void init(ParameterSet& ps, std::mt19937_64& rng) const { mlp_.init(ps, rng); }

    Vector forward(const ParameterSet& ps, const Vector& r) const { return mlp_.forward(ps, r); }
    Vector forward(const ParameterSet& ps, const Vector& r, tensorkit::Mlp::Cache& cache) const {
        return mlp_.forward(ps, r, cache);
    }
    Vector backward(ParameterSet& ps, const tensorkit::Mlp::Cache& cache,
                    const Vector& dg) const {
        return mlp_.backward(ps, cache, dg);
    }

private:
    tensorkit::Mlp mlp_;
};

// Sinusoidal loss coefficient: early epochs emphasize long sequences, later
// epochs shift toward short ones. The raw sine argument can reach pi, so the
// value is clamped to [0, 1].
double curriculum_weight(int epo, int epo_max, int len, int len_min, int len_max);

// w * ||h_target - g||^2 with no gradient into h_target.
double enhancer_loss(const Vector& h_target, const Vector& generated, double w);
// Gradient of the loss w.r.t. the generated vector.
Vector enhancer_loss_grad(const Vector& h_target, const Vector& generated, double w);

// Inactive students get generated + beta * h; active students pass through
// untouched.
Vector enhance_representation(const Vector& h, const Vector& generated, bool active,
                              double beta);

}  // namespace nr4der::enhancer

#endif
