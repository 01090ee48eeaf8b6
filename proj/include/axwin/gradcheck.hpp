#pragma once

#include <functional>
#include <string>
#include <vector>

#include "axwin/tensor.hpp"

namespace axwin {

// Central finite differences: (f(x + h e_i) - f(x - h e_i)) / 2h per element.
// The independent oracle for Tape::backward; keep it free of tape code.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

// max |a_i - b_i| / max(max_j |b_j|, floor): the difference is normalized by
// the oracle's overall scale so that near-zero components do not blow up the
// ratio.
double relative_gradient_error(const Tensor& computed, const Tensor& oracle,
                               double floor = 1e-8);

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    bool pass(double tol) const { return max_rel_err <= tol; }
};

// Compares backward-pass gradients against finite differences for a set of
// named parameter tensors. `loss` must evaluate the current parameter
// values; `backward_grads` must return one gradient per parameter in the
// same order.
GradCheckResult check_parameter_gradients(
    const std::function<double()>& loss,
    const std::function<std::vector<Tensor>()>& backward_grads,
    const std::vector<std::pair<std::string, Tensor*>>& params, double h);

}  // namespace axwin
