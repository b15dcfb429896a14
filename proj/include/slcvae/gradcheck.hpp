#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "slcvae/autodiff.hpp"
#include "slcvae/rng.hpp"

namespace slcvae {

// Central-difference comparison of every analytic parameter gradient against
// the numeric one. `loss_fn` must be deterministic (freeze any noise before
// calling). Above `sample_threshold` elements per parameter, a seeded subset
// is probed instead of every element.
inline double grad_check(const std::function<double()>& loss_fn,
                         const std::vector<Parameter*>& params, double eps = 1e-5,
                         std::size_t sample_threshold = 256,
                         std::uint64_t sample_seed = 0) {
    double worst = 0.0;
    Rng picker(sample_seed);
    for (Parameter* p : params) {
        std::vector<std::size_t> indices;
        if (p->value.size() <= sample_threshold) {
            indices.resize(p->value.size());
            for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
        } else {
            for (std::size_t i = 0; i < sample_threshold; ++i)
                indices.push_back(picker.below(p->value.size()));
        }
        for (std::size_t i : indices) {
            const double saved = p->value[i];
            auto central = [&](double h) {
                p->value[i] = saved + h;
                const double up = loss_fn();
                p->value[i] = saved - h;
                const double down = loss_fn();
                return (up - down) / (2.0 * h);
            };
            // Richardson step cancels the O(h^2) truncation term, so h can stay
            // large enough that roundoff in loss_fn does not dominate.
            const double numeric = (4.0 * central(eps / 2.0) - central(eps)) / 3.0;
            p->value[i] = saved;
            const double analytic = p->grad[i];
            const double err = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace slcvae
