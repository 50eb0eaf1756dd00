#ifndef NR4DER_GRADCHECK_HPP
#define NR4DER_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "nr4der/params.hpp"

namespace nr4der::tensorkit {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central-difference check of analytic gradients.
//
// `loss` must be a pure forward pass returning the scalar objective from the
// current values in `ps`. `compute_grads` must zero the grad buffers and fill
// them with the analytic gradient of that same objective. Every entry of every
// parameter is perturbed by +/- eps; the relative discrepancy is
// |a - n| / max(1, |a|, |n|). Inputs under test are registered as parameters
// by the caller so they are swept too.
GradCheckReport grad_check(ParameterSet& ps, const std::function<double()>& loss,
                           const std::function<void()>& compute_grads, double eps = 1e-6);

// Convenience wrapper returning just the max relative error.
double grad_check_error(ParameterSet& ps, const std::function<double()>& loss,
                        const std::function<void()>& compute_grads, double eps = 1e-6);

}  // namespace nr4der::tensorkit

#endif
