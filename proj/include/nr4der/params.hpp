#ifndef NR4DER_PARAMS_HPP
#define NR4DER_PARAMS_HPP

#include <map>
#include <random>
#include <string>
#include <vector>

#include "nr4der/tensor.hpp"

namespace nr4der::tensorkit {

// Named trainable tensors. Every parameter owns a gradient buffer of the
// same shape; an optimization step zeroes the buffers, runs backward passes
// that accumulate into them, then applies the update.
class ParameterSet {
public:
    struct Slot {
        Matrix value;
        Matrix grad;
    };

    Matrix& create(const std::string& name, std::size_t rows, std::size_t cols);
    // Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    Matrix& create_uniform(const std::string& name, std::size_t rows, std::size_t cols,
                           std::size_t fan_in, std::mt19937_64& rng);

    bool has(const std::string& name) const { return slots_.count(name) != 0; }
    Matrix& value(const std::string& name);
    const Matrix& value(const std::string& name) const;
    Matrix& grad(const std::string& name);
    const Matrix& grad(const std::string& name) const;

    void zero_grads();
    void remove(const std::string& name) { slots_.erase(name); }
    std::vector<std::string> names() const;
    std::size_t parameter_count() const;
    bool empty() const { return slots_.empty(); }

    // Deterministic iteration (std::map keeps names ordered).
    const std::map<std::string, Slot>& slots() const { return slots_; }
    std::map<std::string, Slot>& slots() { return slots_; }

private:
    std::map<std::string, Slot> slots_;
};

// Adam with bias correction. Moment buffers are keyed by parameter name so a
// single optimizer instance can drive a whole ParameterSet.
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParameterSet& ps);
    double learning_rate() const { return lr_; }

private:
    struct Moments {
        Matrix m;
        Matrix v;
    };
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<std::string, Moments> moments_;
};

// Checkpoint file: versioned text header, one block per parameter with name,
// shape and row-major values as hex floats. Hex floats round-trip bit-exactly.
void save_checkpoint(const ParameterSet& ps, const std::string& path);
ParameterSet load_checkpoint(const std::string& path);

}  // namespace nr4der::tensorkit

#endif
