#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "c2a/tensor.hpp"

namespace c2a {

// Named view of one parameter tensor and its gradient buffer.
struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

// SGD with polynomial decay: lr_eff = base_lr * (1 - iter/max_iter)^power.
struct SgdState {
    double base_lr = 0.0;
    double power = 0.9;
    std::uint64_t iter = 0;
    std::uint64_t max_iter = 1;

    double effective_lr() const {
        if (iter >= max_iter) return 0.0;
        const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
        return base_lr * std::pow(frac, power);
    }
};

inline void zero_grads(std::vector<ParamRef>& params) {
    for (auto& p : params) p.grad->fill(0.0);
}

// One optimizer step over a parameter group; increments iter once.
inline void sgd_step(std::vector<ParamRef>& params, SgdState& state) {
    const double lr = state.effective_lr();
    for (auto& p : params) {
        require_same_shape(*p.value, *p.grad, "sgd_step");
        for (std::size_t i = 0; i < p.value->size(); ++i)
            p.value->data[i] -= lr * p.grad->data[i];
    }
    state.iter += 1;
}

}  // namespace c2a
