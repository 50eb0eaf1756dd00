#ifndef NR4DER_ATTENTION_HPP
#define NR4DER_ATTENTION_HPP

#include <string>
#include <vector>

#include "nr4der/params.hpp"

namespace nr4der::tensorkit {

// Scaled dot-product self-attention over the rows of an m x dim matrix, with
// learned Q/K/V projections, `heads` parallel heads and an output projection.
// dim must be divisible by heads.
class SelfAttention {
public:
    SelfAttention(std::string prefix, std::size_t dim, std::size_t heads);

    void init(ParameterSet& ps, std::mt19937_64& rng) const;

    struct Cache {
        Matrix input;                  // m x dim
        Matrix Q, K, V;                // m x dim
        std::vector<Matrix> weights;   // per head, m x m softmax rows
        Matrix heads_out;              // m x dim before output projection
    };

    Matrix forward(const ParameterSet& ps, const Matrix& input, Cache& cache) const;
    Matrix forward(const ParameterSet& ps, const Matrix& input) const;
    // Returns gradient w.r.t. the input rows.
    Matrix backward(ParameterSet& ps, const Cache& cache, const Matrix& dout) const;

    std::size_t dim() const { return dim_; }
    std::size_t heads() const { return heads_; }

private:
    std::string prefix_;
    std::size_t dim_, heads_, head_dim_;
};

}  // namespace nr4der::tensorkit

#endif
