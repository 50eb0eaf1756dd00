#ifndef NR4DER_LAYERS_HPP
#define NR4DER_LAYERS_HPP

#include <string>
#include <vector>

#include "nr4der/params.hpp"

namespace nr4der::tensorkit {

// y = W x + b. Parameters live in a ParameterSet under <prefix>.W / <prefix>.b;
// backward accumulates into the grad buffers and returns dL/dx.
class DenseLayer {
public:
    DenseLayer(std::string prefix, std::size_t in, std::size_t out)
        : prefix_(std::move(prefix)), in_(in), out_(out) {}

    void init(ParameterSet& ps, std::mt19937_64& rng) const;
    Vector forward(const ParameterSet& ps, const Vector& x) const;
    Vector backward(ParameterSet& ps, const Vector& x, const Vector& dy) const;

    std::size_t in_dim() const { return in_; }
    std::size_t out_dim() const { return out_; }

private:
    std::string prefix_;
    std::size_t in_, out_;
};

enum class Activation { Identity, Sigmoid, Softplus };

// Fully connected stack with ReLU hidden units and a configurable output
// activation.
class Mlp {
public:
    // dims = {input, hidden..., output}
    Mlp(std::string prefix, std::vector<std::size_t> dims, Activation out_act);

    void init(ParameterSet& ps, std::mt19937_64& rng) const;

    struct Cache {
        Vector input;
        std::vector<Vector> pre;   // pre-activation per layer
        std::vector<Vector> post;  // post-activation per layer
    };

    Vector forward(const ParameterSet& ps, const Vector& x) const;
    Vector forward(const ParameterSet& ps, const Vector& x, Cache& cache) const;
    Vector backward(ParameterSet& ps, const Cache& cache, const Vector& dy) const;

    std::size_t in_dim() const { return dims_.front(); }
    std::size_t out_dim() const { return dims_.back(); }

private:
    std::string layer_name(std::size_t l) const;
    std::string prefix_;
    std::vector<std::size_t> dims_;
    Activation out_act_;
};

}  // namespace nr4der::tensorkit

#endif
