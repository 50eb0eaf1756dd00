#ifndef NR4DER_MLSTM_HPP
#define NR4DER_MLSTM_HPP

#include <string>
#include <vector>

#include "nr4der/params.hpp"

namespace nr4der::tensorkit {

// Matrix-memory LSTM state: d x d cell matrix storing key-value associations,
// a normalizer vector and the gate stabilizer.
struct MlstmState {
    Matrix C;
    Vector n;
    double m = 0.0;
};

MlstmState mlstm_zero_state(std::size_t dim);

// One covariance-rule step with pre-activated gates:
//   C_t = f * C_{t-1} + i * v k^T
//   n_t = f * n_{t-1} + i * k
//   out = o ⊙ (C_t q / max(|n_t . q|, 1))
// The stabilizer is untouched here; exponential-gate stabilization is the
// caller's job (see MlstmLayer).
struct MlstmStepCache {
    Vector key, value, query, o_gate;
    double f_gate = 0.0, i_gate = 0.0;
    Matrix C_prev;
    Vector n_prev;
    MlstmState state;  // post-update
    Vector Cq;         // C_t q
    double s = 0.0;    // n_t . q
    double denom = 1.0;
    Vector out;
};

MlstmStepCache mlstm_step(const MlstmState& state, const Vector& key, const Vector& value,
                          const Vector& query, double f_gate, double i_gate,
                          const Vector& o_gate);

struct MlstmStepGrads {
    Vector d_key, d_value, d_query, d_o_gate;
    double d_f = 0.0, d_i = 0.0;
    Matrix dC_prev;
    Vector dn_prev;
};

// dC_next / dn_next: gradients reaching (C_t, n_t) from later steps; pass
// zero buffers for the final step.
MlstmStepGrads mlstm_step_backward(const MlstmStepCache& cache, const Vector& d_out,
                                   const Matrix& dC_next, const Vector& dn_next);

// Full recurrent layer. Per step, queries/keys/values and gates are projected
// from the input alone (no hidden-state feedback); the input gate is
// exponential and the forget gate sigmoid, both run through the max-based
// stabilizer so the recursion stays in a representable range.
class MlstmLayer {
public:
    MlstmLayer(std::string prefix, std::size_t input, std::size_t dim)
        : prefix_(std::move(prefix)), input_(input), dim_(dim) {}

    void init(ParameterSet& ps, std::mt19937_64& rng) const;

    struct Cache {
        std::vector<Vector> x;
        std::vector<Vector> otilde;
        std::vector<double> itilde, ftilde, logf, m, fprime, iprime;
        std::vector<MlstmStepCache> step;
        std::vector<Vector> h;
        std::size_t steps = 0;
    };

    Cache forward(const ParameterSet& ps, const std::vector<Vector>& seq) const;
    std::vector<Vector> backward(ParameterSet& ps, const Cache& cache,
                                 const std::vector<Vector>& dh) const;

    std::size_t input_dim() const { return input_; }
    std::size_t dim() const { return dim_; }

private:
    std::string prefix_;
    std::size_t input_, dim_;
};

}  // namespace nr4der::tensorkit

#endif
