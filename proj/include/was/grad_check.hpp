#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "was/tensor.hpp"

namespace was {

struct GradCheckResult {
    bool ok = true;
    double max_rel_err = 0.0;
    std::string worst;  // human-readable location of the worst coordinate
};

// Central-difference check of analytic gradients. `f` evaluates the scalar
// loss for a given parameter setting; `analytic` holds one gradient tensor
// per parameter in the same order. Relative error is measured against
// max(|analytic|, |numeric|, 1) so near-zero gradients do not blow up the
// ratio. A non-finite perturbed loss counts as a failed coordinate.
inline GradCheckResult check_gradients(const std::function<double(const std::vector<Tensor>&)>& f,
                                       std::vector<Tensor> params,
                                       const std::vector<Tensor>& analytic,
                                       double step = 1e-5, double tol = 1e-4) {
    if (params.size() != analytic.size())
        throw config_error("check_gradients: params/analytic count mismatch");
    GradCheckResult res;
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params[p].same_shape(analytic[p]))
            throw config_error("check_gradients: shape mismatch at param " + std::to_string(p));
        for (std::size_t i = 0; i < params[p].numel(); ++i) {
            const double orig = params[p][i];
            params[p][i] = orig + step;
            const double up = f(params);
            params[p][i] = orig - step;
            const double down = f(params);
            params[p][i] = orig;
            const double a = analytic[p][i];
            double rel;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                rel = std::numeric_limits<double>::infinity();
            } else {
                const double n = (up - down) / (2.0 * step);
                rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1.0});
            }
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = "param " + std::to_string(p) + " [" + std::to_string(i) + "]";
            }
        }
    }
    res.ok = res.max_rel_err <= tol;
    return res;
}

}  // namespace was
