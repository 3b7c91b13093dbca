#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "dgqn/param_store.hpp"
#include "dgqn/tape.hpp"

namespace dgqn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

/// Compares traced gradients against central finite differences, coordinate
/// by coordinate, over every parameter in the store. `build` must construct
/// the same scalar computation from whatever values the store holds.
/// Relative error: |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
inline GradCheckReport grad_check(
    ParamStore& params, const std::function<ValueId(Trace&, const ParamStore&)>& build,
    double step = 1e-5) {
    Trace trace;
    const ValueId root = build(trace, params);
    trace.backward(root);
    const auto analytic = trace.param_grads();

    auto eval = [&]() {
        Trace t;
        return t.value(build(t, params)).data()[0];
    };

    GradCheckReport report;
    for (const auto& [name, grad] : analytic) {
        Tensor& w = params.get(name);
        for (std::size_t i = 0; i < w.numel(); ++i) {
            const double saved = w.data()[i];
            w.data()[i] = saved + step;
            const double f_plus = eval();
            w.data()[i] = saved - step;
            const double f_minus = eval();
            w.data()[i] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = grad.data()[i];
            const double rel = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = name;
                report.worst_index = i;
            }
        }
    }
    return report;
}

}  // namespace dgqn
