#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dcnmt/params.hpp"
#include "dcnmt/tensor.hpp"

namespace testutil {

// Central finite-difference gradient check. loss_fn must rebuild the graph
// from the current parameter values and return the loss value. Returns the
// worst relative error over all checked elements.
inline double fd_check(std::vector<dcnmt::Tensor> params,
                       const std::function<dcnmt::Tensor()>& loss_fn, double step = 1e-4,
                       std::size_t max_elems_per_tensor = 0) {
    for (auto& p : params) p.zero_grad();
    dcnmt::Tensor loss = loss_fn();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) analytic.push_back(p.grad());

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        std::size_t n = p.size();
        std::size_t limit = max_elems_per_tensor ? std::min(n, max_elems_per_tensor) : n;
        std::size_t stride = n / limit ? n / limit : 1;
        for (std::size_t i = 0; i < n; i += stride) {
            double orig = p.val()[i];
            p.val()[i] = orig + step;
            double up = loss_fn().item();
            p.val()[i] = orig - step;
            double down = loss_fn().item();
            p.val()[i] = orig;
            double fd = (up - down) / (2.0 * step);
            double an = analytic[pi][i];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-3});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return worst;
}

inline std::vector<dcnmt::Tensor> all_params(dcnmt::ParamStore& store) {
    std::vector<dcnmt::Tensor> out;
    for (auto& [name, t] : store.all()) out.push_back(t);
    return out;
}

}  // namespace testutil
