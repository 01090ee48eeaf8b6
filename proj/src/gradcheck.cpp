#include "axwin/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace axwin {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
    Tensor grad(x.shape(), x.dtype());
    Tensor probe = x.clone();
    const std::int64_t count = x.numel();
    for (std::int64_t i = 0; i < count; ++i) {
        const double orig = probe.get(i);
        probe.set(i, orig + h);
        const double fp = f(probe);
        probe.set(i, orig - h);
        const double fm = f(probe);
        probe.set(i, orig);
        grad.set(i, (fp - fm) / (2.0 * h));
    }
    return grad;
}

double relative_gradient_error(const Tensor& computed, const Tensor& oracle, double floor) {
    double scale = floor;
    const std::int64_t count = oracle.numel();
    for (std::int64_t i = 0; i < count; ++i) scale = std::max(scale, std::fabs(oracle.get(i)));
    double worst = 0.0;
    for (std::int64_t i = 0; i < count; ++i) {
        worst = std::max(worst, std::fabs(computed.get(i) - oracle.get(i)) / scale);
    }
    return worst;
}

GradCheckResult check_parameter_gradients(
    const std::function<double()>& loss,
    const std::function<std::vector<Tensor>()>& backward_grads,
    const std::vector<std::pair<std::string, Tensor*>>& params, double h) {
    GradCheckResult result;
    const std::vector<Tensor> analytic = backward_grads();
    if (analytic.size() != params.size()) {
        throw DimensionError("check_parameter_gradients: gradient count mismatch");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor* t = params[p].second;
        Tensor fd = finite_diff_grad(
            [&](const Tensor& probe) {
                Tensor saved = *t;
                *t = probe;
                const double v = loss();
                *t = saved;
                return v;
            },
            *t, h);
        const double err = relative_gradient_error(analytic[p], fd);
        if (err > result.max_rel_err) {
            result.max_rel_err = err;
            result.worst_param = params[p].first;
        }
    }
    return result;
}

}  // namespace axwin
