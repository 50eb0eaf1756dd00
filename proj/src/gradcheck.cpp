#include "nr4der/gradcheck.hpp"

#include <cmath>

namespace nr4der::tensorkit {

GradCheckReport grad_check(ParameterSet& ps, const std::function<double()>& loss,
                           const std::function<void()>& compute_grads, double eps) {
    if (eps <= 0.0) throw ConfigError("grad_check: eps must be positive");
    compute_grads();
    // Snapshot analytic gradients before the perturbation sweep overwrites state.
    std::vector<std::pair<std::string, Matrix>> analytic;
    for (const auto& [name, slot] : ps.slots()) analytic.emplace_back(name, slot.grad);

    GradCheckReport report;
    for (const auto& [name, grad] : analytic) {
        Matrix& value = ps.value(name);
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value.raw()[i];
            value.raw()[i] = saved + eps;
            const double fp = loss();
            value.raw()[i] = saved - eps;
            const double fm = loss();
            value.raw()[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError("grad_check: non-finite forward value at " + name);
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = grad.raw()[i];
            const double rel =
                std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = name;
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

double grad_check_error(ParameterSet& ps, const std::function<double()>& loss,
                        const std::function<void()>& compute_grads, double eps) {
    return grad_check(ps, loss, compute_grads, eps).max_rel_error;
}

}  // namespace nr4der::tensorkit
