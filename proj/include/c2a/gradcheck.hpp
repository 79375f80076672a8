#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "c2a/rng.hpp"
#include "c2a/sgd.hpp"
#include "c2a/tensor.hpp"

namespace c2a {

// Central-difference check of the analytic gradients stored in params[i].grad.
// loss_fn must be a deterministic pure evaluation of the same scalar loss the
// gradients were computed for; it is called with perturbed parameter values.
// Returns max over checked coordinates of
//   |fd - analytic| / (|analytic| + 1e-8).
// max_coords_per_param == 0 checks every coordinate; otherwise a seeded
// sample of coordinates per parameter tensor.
inline double finite_diff_check(const std::function<double()>& loss_fn,
                                std::vector<ParamRef>& params, double eps,
                                std::size_t max_coords_per_param = 0,
                                std::uint64_t seed = 0x5eed) {
    SplitMix64 rng = stream_for(seed, 0xfd);
    double worst = 0.0;
    for (auto& p : params) {
        const std::size_t n = p.value->size();
        std::vector<std::size_t> coords;
        if (max_coords_per_param == 0 || n <= max_coords_per_param) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (std::size_t i = 0; i < max_coords_per_param; ++i) coords.push_back(rng.index(n));
        }
        for (std::size_t idx : coords) {
            double& slot = p.value->data[idx];
            const double orig = slot;
            slot = orig + eps;
            const double up = loss_fn();
            slot = orig - eps;
            const double down = loss_fn();
            slot = orig;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw numeric_error("finite_diff_check: non-finite loss at " + p.name);
            const double fd = (up - down) / (2.0 * eps);
            const double analytic = p.grad->data[idx];
            const double rel = std::abs(fd - analytic) / (std::abs(analytic) + 1e-8);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace c2a
