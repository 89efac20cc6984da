// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mtx/rng.hpp"
#include "mtx/tensor.hpp"

namespace mtx {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;  // "param <i> coord <j>: analytic=..., numeric=..."

    bool ok(double tol = 1e-4) const { return max_rel_err <= tol; }
};

// Central-difference verification of reverse-mode gradients at randomly
// chosen coordinates. `f` must rebuild its graph from the parameters' current
// values on every call (no captured graph state). Run with T = double.
template <typename T, typename F>
GradCheckResult finite_difference_check(F&& f, std::vector<Tensor<T>> params,
                                        int points_per_param = 10, uint64_t seed = 19,
                                        double h = 1e-5) {
    static_assert(sizeof(T) >= 8, "finite differences need 64-bit precision");
    for (auto& p : params) p.zero_grad();
    Tensor<T> loss = f();
    require(loss.numel() == 1, ErrorCode::shape, "finite_difference_check: loss must be scalar");
    backward(loss);
    std::vector<std::vector<T>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p.grad());

    Rng rng(seed);
    GradCheckResult res;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& w = params[pi].data();
        for (int pt = 0; pt < points_per_param; ++pt) {
            size_t j = size_t(rng.below(w.size()));
            T saved = w[j];
            w[j] = T(double(saved) + h);
            double fp = double(f().item());
            w[j] = T(double(saved) - h);
            double fm = double(f().item());
            w[j] = saved;
            double numeric = (fp - fm) / (2.0 * h);
            double a = double(analytic[pi][j]);
            double rel = std::fabs(a - numeric) /
                         std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = "param " + std::to_string(pi) + " coord " + std::to_string(j) +
                            ": analytic=" + std::to_string(a) +
                            ", numeric=" + std::to_string(numeric);
            }
        }
    }
    return res;
}

} // namespace mtx
