#ifndef NR4DER_LSTM_HPP
#define NR4DER_LSTM_HPP

#include <string>
#include <vector>

#include "nr4der/params.hpp"

namespace nr4der::tensorkit {

// Hidden/cell pair carried between steps. The hidden state is tanh-bounded.
struct LstmState {
    Vector h;
    Vector c;
};

// Single-layer LSTM with input/forget/output gates and tanh cell candidate.
// Forward runs the whole sequence from the zero state and keeps the caches
// needed for an exact backward pass.
class Lstm {
public:
    Lstm(std::string prefix, std::size_t input, std::size_t hidden)
        : prefix_(std::move(prefix)), input_(input), hidden_(hidden) {}

    void init(ParameterSet& ps, std::mt19937_64& rng) const;

    struct Cache {
        std::vector<Vector> x;      // inputs per step
        std::vector<Vector> i, f, o, g;
        std::vector<Vector> c, tanh_c, h;
        std::size_t steps = 0;
    };

    Cache forward(const ParameterSet& ps, const std::vector<Vector>& seq) const;
    // dh: per-step gradient w.r.t. hidden outputs (zeros where unused).
    // Returns per-step input gradients.
    std::vector<Vector> backward(ParameterSet& ps, const Cache& cache,
                                 const std::vector<Vector>& dh) const;

    std::vector<LstmState> states(const Cache& cache) const;
    std::size_t input_dim() const { return input_; }
    std::size_t hidden_dim() const { return hidden_; }

private:
    std::string pname(const char* gate, const char* kind) const;
    std::string prefix_;
    std::size_t input_, hidden_;
};

// One LSTM cell applied to the sequence and to its reverse. Output element
// l is [forward_h_l, backward_h_l], width 2*hidden. Sharing the cell between
// directions makes reversal an exact symmetry: reversing the input and
// swapping the two halves of each output reverses the output list.
class BiLstm {
public:
    BiLstm(std::string prefix, std::size_t input, std::size_t hidden)
        : cell_(prefix + ".cell", input, hidden) {}

    void init(ParameterSet& ps, std::mt19937_64& rng) const;

    struct Cache {
        Lstm::Cache fwd;
        Lstm::Cache bwd;  // computed over the reversed sequence
    };

    std::vector<Vector> forward(const ParameterSet& ps, const std::vector<Vector>& seq,
                                Cache& cache) const;
    std::vector<Vector> backward(ParameterSet& ps, const Cache& cache,
                                 const std::vector<Vector>& dout) const;

    std::size_t out_dim() const { return 2 * cell_.hidden_dim(); }
    std::size_t hidden_dim() const { return cell_.hidden_dim(); }

private:
    Lstm cell_;
};

}  // namespace nr4der::tensorkit

#endif
